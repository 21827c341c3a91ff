#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define FEDSIM_ERROR(Name)                \
  struct Name : SimError {                \
    using SimError::SimError;             \
  }

// tensors
FEDSIM_ERROR(IncongruentShapes);
FEDSIM_ERROR(UnknownGroup);

// models
FEDSIM_ERROR(InvalidSpec);
FEDSIM_ERROR(LabelOutOfRange);
FEDSIM_ERROR(EmptyDataset);

// data
FEDSIM_ERROR(QuotaTooSmall);
FEDSIM_ERROR(EmptyClientSet);
FEDSIM_ERROR(ZeroVector);
FEDSIM_ERROR(BadMagic);
FEDSIM_ERROR(TruncatedFile);
FEDSIM_ERROR(CountMismatch);
FEDSIM_ERROR(InvalidDims);

// client
FEDSIM_ERROR(EmptyShard);
FEDSIM_ERROR(ScaffoldRequiresSgd);

// server
FEDSIM_ERROR(EmptyRound);
FEDSIM_ERROR(MissingMultiplier);
FEDSIM_ERROR(ScaffoldDisabled);

// fedglad
FEDSIM_ERROR(NoClients);
FEDSIM_ERROR(KeyMismatch);
FEDSIM_ERROR(ZeroAggregateGradient);

// sampling
FEDSIM_ERROR(BadRatio);
FEDSIM_ERROR(WrongStrategy);

// harness
FEDSIM_ERROR(TooFewClients);
FEDSIM_ERROR(InsufficientData);
FEDSIM_ERROR(ZeroVariance);
FEDSIM_ERROR(NoSuchClients);
FEDSIM_ERROR(ConfigError);

#undef FEDSIM_ERROR

}  // namespace fedsim
