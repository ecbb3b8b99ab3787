#ifndef SYMPTOMCAST_ERRORS_HPP
#define SYMPTOMCAST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace symptomcast {

// Invalid configuration values or files.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unreadable, malformed or insufficient input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values or other numerical breakdown during computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace symptomcast

#endif
