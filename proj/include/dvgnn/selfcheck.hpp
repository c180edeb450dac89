#pragma once

#include <cstdint>

#include "dvgnn/autodiff.hpp"
#include "dvgnn/decoder.hpp"

namespace dvgnn {

// A small random instance of one of the two training losses: a tape program
// plus the parameter point to differentiate it at.
struct LossInstance {
  TapeProgram program;
  ParamStore point;
};

// Negated window ELBO: 3 nodes, 2 features, p = 4, hidden 4/3, random Sigma.
LossInstance elbo_instance(std::uint64_t seed, DecoderMode mode = DecoderMode::Standardized,
                           bool linear_logsigma = false, bool masked = false);

// Forecaster L2 loss: 3 nodes, 2 features, 4 input steps, 2 channels, horizon 2,
// random per-step propagation matrices and every parameter perturbed off its init.
LossInstance forecast_instance(std::uint64_t seed);

}  // namespace dvgnn
