#pragma once

#include <stdexcept>
#include <string>

namespace nlbb {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mechanism algebra
struct NotSupercritical : Error { using Error::Error; };
struct GreyViolation : Error { using Error::Error; };
struct NoRoot : Error { using Error::Error; };
struct TailTooHeavy : Error { using Error::Error; };
struct ZeroProbabilityBranch : Error { using Error::Error; };
struct RepresentationMismatch : Error { using Error::Error; };
struct NotFinite : Error { using Error::Error; };

// Motion / grid
struct GridTooNarrow : Error { using Error::Error; };

// Solvers
struct PicardDivergence : Error { using Error::Error; };
struct IdentityViolation : Error { using Error::Error; };
struct RangeViolation : Error { using Error::Error; };
struct StepSizeTooLarge : Error { using Error::Error; };
struct FieldMismatch : Error { using Error::Error; };

// Simulation
struct PopulationExplosion : Error { using Error::Error; };
struct OutOfHorizon : Error { using Error::Error; };

// Configuration / IO
struct ConfigError : Error { using Error::Error; };

}  // namespace nlbb
