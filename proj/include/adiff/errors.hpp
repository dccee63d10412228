#pragma once

#include <stdexcept>
#include <string>

namespace adiff {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file (bad magic, unparsable CSV row).
class FormatError : public Error {
public:
    using Error::Error;
};

// Two inputs disagree with each other (image/label counts).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class EmptySelectionError : public Error {
public:
    using Error::Error;
};

// A sampler step produced NaN/Inf.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

} // namespace adiff
