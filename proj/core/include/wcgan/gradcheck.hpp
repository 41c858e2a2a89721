#pragma once

#include <functional>
#include <span>

#include "wcgan/tensor.hpp"

namespace wcgan {

struct GradcheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
  // Coordinates whose gradient is smaller than the floor are effectively
  // compared in absolute terms, which keeps round-off on near-zero entries
  // from dominating the report.
  double abs_floor = 1e-3;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  bool passed = true;
  std::size_t coordinates = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Builds a scalar loss from the current parameter values. Must be a pure
/// function of the parameters (reseed any RNG inside it).
using LossFn = std::function<Tensor(Graph&)>;

/// Compares reverse-mode gradients against central differences for every
/// coordinate of every tensor in `params`.
GradcheckReport gradcheck(const LossFn& f, std::span<Tensor> params, const GradcheckOptions& opts = {});

}  // namespace wcgan
