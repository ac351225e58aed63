#pragma once

#include <stdexcept>
#include <string>

namespace fluxcal {

/// Broad category of a failure, used by the CLI to pick an exit code.
enum class ErrorKind {
    InvalidArgument,
    IncompatibleSampling,
    FitFailed,
    DegenerateFit,
    IllConditionedChannel,
    IntegrationError,
    SweepRange,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

    /// True for failures of the numerics rather than of the caller's input.
    [[nodiscard]] bool is_numerical() const noexcept {
        switch (kind_) {
            case ErrorKind::FitFailed:
            case ErrorKind::DegenerateFit:
            case ErrorKind::IllConditionedChannel:
            case ErrorKind::IntegrationError:
            case ErrorKind::SweepRange:
                return true;
            default:
                return false;
        }
    }

private:
    ErrorKind kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

struct IncompatibleSampling : Error {
    explicit IncompatibleSampling(const std::string& what)
        : Error(ErrorKind::IncompatibleSampling, what) {}
};

struct FitFailed : Error {
    explicit FitFailed(const std::string& what) : Error(ErrorKind::FitFailed, what) {}
};

struct DegenerateFit : Error {
    explicit DegenerateFit(const std::string& what) : Error(ErrorKind::DegenerateFit, what) {}
};

struct IllConditionedChannel : Error {
    explicit IllConditionedChannel(const std::string& what)
        : Error(ErrorKind::IllConditionedChannel, what) {}
};

struct IntegrationError : Error {
    explicit IntegrationError(const std::string& what) : Error(ErrorKind::IntegrationError, what) {}
};

struct SweepRangeError : Error {
    explicit SweepRangeError(const std::string& what) : Error(ErrorKind::SweepRange, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace fluxcal
