#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hlab {

enum class ErrorCode {
    DimensionTooLarge,
    OutsideDomain,
    RayStaysInside,
    OutsideCone,
    HypothesisFailed,
    CrossCheckFailed,
    MetricDegenerate,
    NotAdmissible,
    NoAdmissibleStart,
    ContinuityStalled,
    NewtonDiverged,
    EmptyFamily,
    DegenerateSpectrum,
    ConfigInvalid,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code. Every module reports failures
/// through this type so the CLI can map them onto exit statuses.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace hlab
