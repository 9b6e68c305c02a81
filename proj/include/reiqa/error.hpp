#pragma once

#include <stdexcept>
#include <string>

namespace reiqa {

// Error categories. Each maps onto one failure class named in the module
// contracts; the CLI turns them into categorized messages and exit codes.

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SamplingExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateMetric : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace reiqa
