#pragma once

#include <stdexcept>
#include <string>

namespace cr3bp {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A state lies within the collision tolerance of one of the primaries.
class CollisionError : public Error {
public:
    CollisionError(double r1, double r2);
    double r1;
    double r2;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class OutOfRange : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Newton/chord iteration failed; a continuation obstacle rather than a crash.
class NoConvergence : public Error {
public:
    NoConvergence(int iterations, double residual_norm, const std::string& what);
    int iterations;
    double residual_norm;
};

/// A continuation step failed; the caller is expected to shrink the step and retry.
class StepFailure : public Error {
public:
    using Error::Error;
};

class StepSizeUnderflow : public Error {
public:
    using Error::Error;
};

class RankDeficient : public Error {
public:
    using Error::Error;
};

class NotOscillatory : public Error {
public:
    using Error::Error;
};

class NotSimpleEigenvalue : public Error {
public:
    using Error::Error;
};

class BranchSwitchFailure : public Error {
public:
    using Error::Error;
};

class SectionNotReached : public Error {
public:
    explicit SectionNotReached(double max_time);
    double max_time;
};

class InconsistentParts : public Error {
public:
    using Error::Error;
};

class NonPositiveExponent : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace cr3bp
