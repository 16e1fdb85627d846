#pragma once

#include <stdexcept>
#include <string>

namespace rsl {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape diagonal below the configured floor; forward substitution unsafe.
struct DegenerateShape : Error {
    using Error::Error;
};

/// L^T w vanished; the support-function gradient is undefined in this direction.
struct ZeroDirection : Error {
    using Error::Error;
};

/// Gauge gradient requested at u = 0.
struct ZeroRealization : Error {
    using Error::Error;
};

/// Matrix not positive semidefinite even after jitter retries.
struct NotPSD : Error {
    using Error::Error;
};

/// LP solver exceeded its iteration budget.
struct SolverStall : Error {
    using Error::Error;
};

/// Operation requires an Optimal LP solution.
struct NotOptimal : Error {
    using Error::Error;
};

/// Base decoupled dispatch infeasible; transfer limits undefined.
struct BaseInfeasible : Error {
    using Error::Error;
};

/// Calibration set too small for the requested coverage level.
struct InsufficientCalibration : Error {
    using Error::Error;
};

/// Robust dispatch infeasible at the current shape/radius.
struct InfeasibleAtShape : Error {
    using Error::Error;
};

/// All smoothing-kernel weights underflowed (bandwidth far too small).
struct DegenerateWeights : Error {
    using Error::Error;
};

/// Internal numerical contract violated (bracket failure, non-finite value).
struct NumericalError : Error {
    using Error::Error;
};

/// Time series shorter than the method requires.
struct TooShort : Error {
    using Error::Error;
};

/// Generator parameters fail validation (PSD probe, stationarity).
struct BadParams : Error {
    using Error::Error;
};

/// Malformed configuration or input file.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace rsl
