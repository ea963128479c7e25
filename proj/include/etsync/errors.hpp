#pragma once

#include <stdexcept>
#include <string>

namespace etsync {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define ETSYNC_DEFINE_ERROR(Name)                                   \
    struct Name : Error {                                           \
        explicit Name(const std::string& msg) : Error(msg) {}       \
    }

ETSYNC_DEFINE_ERROR(NonSquare);
ETSYNC_DEFINE_ERROR(ConvergenceFailure);
ETSYNC_DEFINE_ERROR(NotObservable);
ETSYNC_DEFINE_ERROR(NotControllable);
ETSYNC_DEFINE_ERROR(MaxIterationsExceeded);
ETSYNC_DEFINE_ERROR(SingularInnovation);
ETSYNC_DEFINE_ERROR(InfeasibleZeta);
ETSYNC_DEFINE_ERROR(CommonEigenvalue);
ETSYNC_DEFINE_ERROR(SingularSolve);
ETSYNC_DEFINE_ERROR(DimensionMismatch);
ETSYNC_DEFINE_ERROR(Disconnected);
ETSYNC_DEFINE_ERROR(InvalidGraph);
ETSYNC_DEFINE_ERROR(InvalidSpec);
ETSYNC_DEFINE_ERROR(Infeasible);
ETSYNC_DEFINE_ERROR(ZetaOutOfRange);
ETSYNC_DEFINE_ERROR(ClockSkew);
ETSYNC_DEFINE_ERROR(PerturbationExhausted);
ETSYNC_DEFINE_ERROR(InconsistentBetaSystem);
ETSYNC_DEFINE_ERROR(ComplexSpectrumDisallowed);
ETSYNC_DEFINE_ERROR(ParseError);
ETSYNC_DEFINE_ERROR(ValidationError);

#undef ETSYNC_DEFINE_ERROR

}  // namespace etsync
