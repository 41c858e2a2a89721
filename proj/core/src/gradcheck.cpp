#include "wcgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wcgan/error.hpp"

namespace wcgan {

GradcheckReport gradcheck(const LossFn& f, std::span<Tensor> params, const GradcheckOptions& opts) {
  if (!(opts.step > 0.0)) throw ParameterError("gradcheck: step must be positive");

  for (auto& p : params) {
    if (!p.requires_grad()) p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Graph g;
    auto loss = f(g);
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  auto eval = [&f] {
    Graph g;
    return f(g).item();
  };

  GradcheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + opts.step;
      const double up = eval();
      values[i] = orig - opts.step;
      const double down = eval();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), opts.abs_floor});
      double err = std::fabs(a - numeric) / denom;
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst_param = pi;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= opts.tol;
  for (auto& p : params) p.zero_grad();
  return report;
}

}  // namespace wcgan
