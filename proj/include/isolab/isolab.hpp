#ifndef ISOLAB_ISOLAB_HPP
#define ISOLAB_ISOLAB_HPP

#include "isolab/error.hpp"
#include "isolab/harness.hpp"
#include "isolab/isotropy.hpp"
#include "isolab/jet.hpp"
#include "isolab/kernels.hpp"
#include "isolab/losses.hpp"
#include "isolab/naming.hpp"
#include "isolab/optimize.hpp"
#include "isolab/permutation.hpp"
#include "isolab/projective.hpp"
#include "isolab/rng.hpp"

#endif  // ISOLAB_ISOLAB_HPP
