#ifndef GRIDLCI_ERRORS_HPP
#define GRIDLCI_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace gridlci
{

/// Every failure the library reports carries one of these kinds so the CLI
/// can map it onto an exit code without parsing messages.
enum class ErrorKind
{
    // grid model
    ZeroImpedanceBranch,
    DanglingBranch,
    UnknownBus,
    DimensionMismatch,
    InvalidCase,
    // case io
    SyntaxError,
    SemanticError,
    SchemaError,
    MissingBus,
    NonMonotoneTime,
    IoError,
    // power flow
    Diverged,
    SingularJacobian,
    BaseCaseDiverged,
    NotConverged,
    // lci core
    MissingNeighborVoltage,
    ImaginaryRadius,
    IsolatedBus,
    NoIntersection,
    ConcentricCircles,
    DegenerateLine,
    BothLinear,
    ZeroSusceptance,
    // vsla
    EmptySeries,
    EmptyInput,
    // generic precondition failure
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::ZeroImpedanceBranch: return "ZeroImpedanceBranch";
    case ErrorKind::DanglingBranch: return "DanglingBranch";
    case ErrorKind::UnknownBus: return "UnknownBus";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidCase: return "InvalidCase";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::SemanticError: return "SemanticError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::MissingBus: return "MissingBus";
    case ErrorKind::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::SingularJacobian: return "SingularJacobian";
    case ErrorKind::BaseCaseDiverged: return "BaseCaseDiverged";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::MissingNeighborVoltage: return "MissingNeighborVoltage";
    case ErrorKind::ImaginaryRadius: return "ImaginaryRadius";
    case ErrorKind::IsolatedBus: return "IsolatedBus";
    case ErrorKind::NoIntersection: return "NoIntersection";
    case ErrorKind::ConcentricCircles: return "ConcentricCircles";
    case ErrorKind::DegenerateLine: return "DegenerateLine";
    case ErrorKind::BothLinear: return "BothLinear";
    case ErrorKind::ZeroSusceptance: return "ZeroSusceptance";
    case ErrorKind::EmptySeries: return "EmptySeries";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message)
        , kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Power-flow divergence keeps the iteration count and the last mismatch.
class DivergedError : public Error
{
public:
    DivergedError(int iterations, double final_mismatch)
        : Error(ErrorKind::Diverged,
                "no convergence after " + std::to_string(iterations) +
                    " iterations, max mismatch " + std::to_string(final_mismatch))
        , iterations_(iterations)
        , final_mismatch_(final_mismatch)
    {
    }

    int iterations() const noexcept { return iterations_; }
    double final_mismatch() const noexcept { return final_mismatch_; }

private:
    int iterations_;
    double final_mismatch_;
};

/// A case bus absent from one time step of a snapshot series.
class MissingBusError : public Error
{
public:
    MissingBusError(double time, int bus)
        : Error(ErrorKind::MissingBus,
                "bus " + std::to_string(bus) + " missing at time " + std::to_string(time))
        , time_(time)
        , bus_(bus)
    {
    }

    double time() const noexcept { return time_; }
    int bus() const noexcept { return bus_; }

private:
    double time_;
    int bus_;
};

} // namespace gridlci

#endif // GRIDLCI_ERRORS_HPP
