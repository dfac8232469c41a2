#ifndef ISOLAB_ERROR_HPP
#define ISOLAB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace isolab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (non-prime modulus, size
/// mismatch, malformed permutation).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An enumeration or closure would exceed its configured size cap.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

/// Kernel evaluated at a pair of distinct but numerically coincident points.
class NearSingularity : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration rejected; the message carries the JSON field path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace isolab

#endif  // ISOLAB_ERROR_HPP
