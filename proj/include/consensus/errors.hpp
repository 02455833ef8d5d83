#pragma once

#include <stdexcept>
#include <string>

namespace consensus {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// linalg
struct NonSquare : Error { using Error::Error; };
struct NotSymmetric : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct NotHurwitz : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct NonFiniteInput : Error { using Error::Error; };
struct SingularMatrix : Error { using Error::Error; };
struct NotDetectable : Error { using Error::Error; };
struct NotStabilizable : Error { using Error::Error; };

// graph
struct Disconnected : Error { using Error::Error; };
struct NoLeader : Error { using Error::Error; };
struct InvalidGraph : Error { using Error::Error; };

// synthesis / protocols / engine
struct OverrideNotStabilizing : Error { using Error::Error; };
struct NoFeasibleVarsigma : Error { using Error::Error; };
struct InfeasibleParams : Error { using Error::Error; };
struct AssumptionViolated : Error { using Error::Error; };
struct InactiveEdgeWeight : Error { using Error::Error; };
struct DwellMisaligned : Error { using Error::Error; };

// cli / config
struct UnknownPreset : Error { using Error::Error; };

class SyntaxError : public Error {
public:
    explicit SyntaxError(const std::string& detail) : Error("syntax error: " + detail) {}
};

class ValidationError : public Error {
public:
    ValidationError(const std::string& field, const std::string& reason)
        : Error(field + ": " + reason), field_(field), reason_(reason) {}
    const std::string& field() const { return field_; }
    const std::string& reason() const { return reason_; }

private:
    std::string field_;
    std::string reason_;
};

} // namespace consensus
