#pragma once

#include <stdexcept>
#include <string>

namespace sheaflab {

// Every failure mode of the library is a named exception type so callers (and
// the CLI) can react to the condition rather than parse message strings.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SHEAFLAB_ERROR(NAME)                                                   \
    struct NAME : Error {                                                      \
        explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {}     \
    }

// poset
SHEAFLAB_ERROR(CycleError);
SHEAFLAB_ERROR(NotGradable);
SHEAFLAB_ERROR(DimensionError);
SHEAFLAB_ERROR(UnknownElement);

// sheaf
SHEAFLAB_ERROR(NonpositiveWeight);
SHEAFLAB_ERROR(NotPartition);
SHEAFLAB_ERROR(DecompositionError);
SHEAFLAB_ERROR(BaseMismatch);
SHEAFLAB_ERROR(ShapeError);

// complex
SHEAFLAB_ERROR(NotCellPoset);
SHEAFLAB_ERROR(RankError);

// spectral
SHEAFLAB_ERROR(NotSymmetric);
SHEAFLAB_ERROR(StepTooLarge);
SHEAFLAB_ERROR(NotCycles);
SHEAFLAB_ERROR(RankDeficient);

// separation
SHEAFLAB_ERROR(DegenerateInput);
SHEAFLAB_ERROR(HypothesisViolated);
SHEAFLAB_ERROR(NotContractible);

// nsd
SHEAFLAB_ERROR(MissingFeatures);
SHEAFLAB_ERROR(TapeMissing);
SHEAFLAB_ERROR(NonFiniteLoss);
SHEAFLAB_ERROR(ClassViolation);

// trajectory
SHEAFLAB_ERROR(HoleTooLarge);
SHEAFLAB_ERROR(StuckWalk);
SHEAFLAB_ERROR(IsolatedTerminal);

// io
SHEAFLAB_ERROR(SchemaVersionMismatch);
SHEAFLAB_ERROR(ParseError);
SHEAFLAB_ERROR(ValidationError);

#undef SHEAFLAB_ERROR

} // namespace sheaflab
