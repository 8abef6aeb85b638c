// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chaosflow {

enum class Errc {
    InvalidArgument,
    LengthMismatch,
    BarrierAlreadyHit,
    UnsupportedBarrier,
    GridTooCoarse,
    DomainError,
    LineNotBelowBarrier,
    QuadratureNotConverged,
    NearBarrier,
    NotMonotone,
    OrderTooHigh,
    OrderMismatch,
    HorizonMismatch,
    PathTouchesBarrier,
    RejectionBudgetExceeded,
    TGridTooCoarse,
    DegenerateVariance,
    SamplerFailure,
    ConfigError,
};

constexpr std::string_view to_string(Errc c) noexcept {
    switch (c) {
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::BarrierAlreadyHit: return "BarrierAlreadyHit";
        case Errc::UnsupportedBarrier: return "UnsupportedBarrier";
        case Errc::GridTooCoarse: return "GridTooCoarse";
        case Errc::DomainError: return "DomainError";
        case Errc::LineNotBelowBarrier: return "LineNotBelowBarrier";
        case Errc::QuadratureNotConverged: return "QuadratureNotConverged";
        case Errc::NearBarrier: return "NearBarrier";
        case Errc::NotMonotone: return "NotMonotone";
        case Errc::OrderTooHigh: return "OrderTooHigh";
        case Errc::OrderMismatch: return "OrderMismatch";
        case Errc::HorizonMismatch: return "HorizonMismatch";
        case Errc::PathTouchesBarrier: return "PathTouchesBarrier";
        case Errc::RejectionBudgetExceeded: return "RejectionBudgetExceeded";
        case Errc::TGridTooCoarse: return "TGridTooCoarse";
        case Errc::DegenerateVariance: return "DegenerateVariance";
        case Errc::SamplerFailure: return "SamplerFailure";
        case Errc::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Every failure in the library is reported through this type; callers
/// branch on code().
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
    if (!cond) fail(code, what);
}

}  // namespace chaosflow
