#pragma once

#include <stdexcept>
#include <string>

namespace msgw {

// Error categories map 1:1 onto CLI exit codes: config -> 2, io -> 3,
// numeric -> 4.
enum class errc { config = 2, io = 3, numeric = 4 };

class Error : public std::runtime_error {
public:
  Error(errc kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  errc kind() const noexcept { return kind_; }

private:
  errc kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(errc::config, what) {}
};
struct ShapeError : ConfigError {
  explicit ShapeError(const std::string& what) : ConfigError(what) {}
};
struct EmptyGraphError : ConfigError {
  explicit EmptyGraphError(const std::string& what) : ConfigError(what) {}
};
struct DegreeZeroError : ConfigError {
  explicit DegreeZeroError(const std::string& what) : ConfigError(what) {}
};
struct UnknownNodeError : ConfigError {
  explicit UnknownNodeError(const std::string& what) : ConfigError(what) {}
};
struct NotSymmetricError : ConfigError {
  explicit NotSymmetricError(const std::string& what) : ConfigError(what) {}
};
struct EmptyDatasetError : ConfigError {
  explicit EmptyDatasetError(const std::string& what) : ConfigError(what) {}
};
struct TooShortError : ConfigError {
  explicit TooShortError(const std::string& what) : ConfigError(what) {}
};
struct ConstantNodeError : ConfigError {
  explicit ConstantNodeError(const std::string& what) : ConfigError(what) {}
};
struct EmptyInputError : ConfigError {
  explicit EmptyInputError(const std::string& what) : ConfigError(what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(errc::io, what) {}
};
struct MalformedCsvError : IoError {
  explicit MalformedCsvError(const std::string& what) : IoError(what) {}
};
struct NonUniformSpacingError : IoError {
  explicit NonUniformSpacingError(const std::string& what) : IoError(what) {}
};
struct ChecksumMismatchError : IoError {
  explicit ChecksumMismatchError(const std::string& what) : IoError(what) {}
};
struct VersionMismatchError : IoError {
  explicit VersionMismatchError(const std::string& what) : IoError(what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(errc::numeric, what) {}
};
struct NonFiniteError : NumericError {
  explicit NonFiniteError(const std::string& what) : NumericError(what) {}
};
struct NoConvergenceError : NumericError {
  explicit NoConvergenceError(const std::string& what) : NumericError(what) {}
};
struct NonScalarLossError : ConfigError {
  explicit NonScalarLossError(const std::string& what) : ConfigError(what) {}
};

}  // namespace msgw
