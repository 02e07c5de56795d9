#pragma once
#include <stdexcept>
#include <string>

namespace covgreeks {

// Precondition violations (bad arguments, mismatched objects).
struct ChartMismatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numeric failures detected while computing.
struct SingularError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotPositiveDefiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConditioningError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// I/O and parsing.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace covgreeks
