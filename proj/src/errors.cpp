#include "hlab/errors.hpp"

namespace hlab {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
        case ErrorCode::OutsideDomain: return "OutsideDomain";
        case ErrorCode::RayStaysInside: return "RayStaysInside";
        case ErrorCode::OutsideCone: return "OutsideCone";
        case ErrorCode::HypothesisFailed: return "HypothesisFailed";
        case ErrorCode::CrossCheckFailed: return "CrossCheckFailed";
        case ErrorCode::MetricDegenerate: return "MetricDegenerate";
        case ErrorCode::NotAdmissible: return "NotAdmissible";
        case ErrorCode::NoAdmissibleStart: return "NoAdmissibleStart";
        case ErrorCode::ContinuityStalled: return "ContinuityStalled";
        case ErrorCode::NewtonDiverged: return "NewtonDiverged";
        case ErrorCode::EmptyFamily: return "EmptyFamily";
        case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace hlab
