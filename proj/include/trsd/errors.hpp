#pragma once

#include <stdexcept>
#include <string>

namespace trsd {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// vocab / trace grammar
struct EmptyAlphabet : Error { using Error::Error; };
struct DuplicateToken : Error { using Error::Error; };
struct ReservedCollision : Error { using Error::Error; };
struct UnknownToken : Error { using Error::Error; };
struct MalformedTrace : Error { using Error::Error; };

// model
struct InvalidConfig : Error { using Error::Error; };
struct ContextOverflow : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };

// sanitize
struct ForcerBudgetViolation : Error { using Error::Error; };

// io / orchestration
struct CheckpointIOError : Error { using Error::Error; };
struct IOError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// checkpoint selection
struct MissingDataset : Error { using Error::Error; };
struct IncompleteScores : Error { using Error::Error; };

}  // namespace trsd
