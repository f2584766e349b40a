#pragma once

#include "freqsim/model.hpp"

namespace freqsim::testing {

// z = 1 reference model used across suites and by the acceptance run.
inline ModelParams reference_model() {
  ModelParams p;
  p.c1 = 0.5;
  p.c2 = 0.25;
  p.eta1 = 0.3;
  p.eta2 = 0.1;
  p.b11 = {0.0, 0.4};
  p.b22 = {0.0, 0.1};
  p.b12 = {0.0, 0.2};
  p.b21 = {0.0, 0.05};
  p.mu1 = JumpMeasure({{1.0, 0.0, 0.3}});
  p.mu2 = JumpMeasure({{0.5, 0.0, 0.2}});
  p.nu = JumpMeasure({{0.2, 0.1, 0.5}});
  return p;
}

inline ModelParams pure_diffusion(double c) {
  ModelParams p;
  p.c1 = p.c2 = c;
  return p;
}

}  // namespace freqsim::testing
