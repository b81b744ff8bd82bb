#pragma once

#include <stdexcept>
#include <string>

namespace liberty {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// graph validation
struct CycleDetected : Error { using Error::Error; };
struct UnknownParent : Error { using Error::Error; };
struct EquationParentMismatch : Error { using Error::Error; };
struct MultipleOutcomes : Error { using Error::Error; };
struct InvalidGraphSpec : Error { using Error::Error; };

// evaluation
struct UnknownConcept : Error { using Error::Error; };
struct CodeOutOfRange : Error { using Error::Error; };
struct FactualMismatch : Error { using Error::Error; };

// dgp / assets
struct UnknownDataset : Error { using Error::Error; };
struct MalformedAssetFile : Error { using Error::Error; };
struct EmptyPool : Error { using Error::Error; };

// rendering
struct MissingSlot : Error { using Error::Error; };
struct NonZeroTemperature : Error { using Error::Error; };
struct EmptyCompletion : Error { using Error::Error; };
struct EndpointUnreachable : Error { using Error::Error; };

// adapters
struct UnknownText : Error { using Error::Error; };
struct MalformedResponse : Error { using Error::Error; };

// pipeline / files
struct SchemaVersionMismatch : Error { using Error::Error; };
struct GraphDigestMismatch : Error { using Error::Error; };
struct CorruptLine : Error {
    CorruptLine(std::size_t line, const std::string& what)
        : Error("corrupt line " + std::to_string(line) + ": " + what), line_number(line) {}
    std::size_t line_number;
};
struct InsufficientChanges : Error { using Error::Error; };

// explainers
struct EmptyCandidateSet : Error { using Error::Error; };
struct UnknownStrategy : Error { using Error::Error; };

// metrics
struct LengthMismatch : Error { using Error::Error; };
struct KeyMismatch : Error { using Error::Error; };
struct MissingExplanation : Error { using Error::Error; };
struct MissingEndpointCounterfactual : Error { using Error::Error; };
struct NoChangesForConcept : Error { using Error::Error; };
struct EmptySet : Error { using Error::Error; };
struct NotIdentifiable : Error { using Error::Error; };

}  // namespace liberty
