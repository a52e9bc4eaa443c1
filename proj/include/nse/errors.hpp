#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nse {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

/// A state or label left the finite range. `step` is -1 when not applicable.
class NonFinite : public Error {
public:
    NonFinite(const std::string& what, long step = -1, long i = -1, long j = -1)
        : Error(what), step_(step), i_(i), j_(j) {}

    long step() const noexcept { return step_; }
    long i() const noexcept { return i_; }
    long j() const noexcept { return j_; }

private:
    long step_;
    long i_;
    long j_;
};

class DegenerateKernel : public Error {
public:
    using Error::Error;
};

class TargetTooLarge : public Error {
public:
    using Error::Error;
};

class DimTooLarge : public Error {
public:
    using Error::Error;
};

class AcceptanceTooLow : public Error {
public:
    AcceptanceTooLow(const std::string& what, double rate) : Error(what), rate_(rate) {}
    double acceptance_rate() const noexcept { return rate_; }

private:
    double rate_;
};

} // namespace nse
