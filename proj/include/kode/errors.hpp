#pragma once

#include <stdexcept>
#include <string>

namespace kode {

/// Broad failure classes. The CLI maps them onto exit codes.
enum class ErrorKind {
    config,     ///< bad or missing configuration / parameters
    dimension,  ///< shape or arity mismatch
    range,      ///< value outside an admissible interval
    domain,     ///< value violating a sign/domain constraint
    data,       ///< malformed input data
    numerical,  ///< divergence, conditioning, non-convergence
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error(ErrorKind::dimension, what) {}
};
struct RangeError : Error {
    explicit RangeError(const std::string& what) : Error(ErrorKind::range, what) {}
};
struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};
struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

}  // namespace kode
