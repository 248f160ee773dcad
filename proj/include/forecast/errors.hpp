#ifndef FORECAST_ERRORS_HPP
#define FORECAST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace forecast {

// Shape or index disagreement between tensors.
class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Problems with input files or dataset contents (parse failures, ragged rows,
// splits too short for the requested windows).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid experiment configuration.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Internal invariant violation (corrupted mapping, NaN error matrix, ...).
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

} // namespace forecast

#endif // FORECAST_ERRORS_HPP
