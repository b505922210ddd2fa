#include "glyphforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace glyphforge::ad {

namespace {

double eval(const std::function<Tensor<double>()>& f) {
  NoGradGuard guard;
  const double v = f().item();
  if (!std::isfinite(v)) throw NonFiniteError("grad_check: objective is non-finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<NamedTensor<double>>& params,
                           const GradCheckOptions& options) {
  for (const auto& p : params) p.tensor.zero_grad();
  Tensor<double> out = f();
  if (!std::isfinite(out.item())) throw NonFiniteError("grad_check: objective is non-finite");
  out.backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    analytic.emplace_back(p.tensor.has_grad() ? p.tensor.node()->grad
                                              : std::vector<double>(p.tensor.size(), 0.0));
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  const double h = options.step;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].tensor.node()->value;
    std::vector<std::size_t> indices(values.size());
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_entries_per_param && indices.size() > options.max_entries_per_param) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_entries_per_param);
      std::sort(indices.begin(), indices.end());
    }
    GradCheckParam summary{params[pi].name};
    const double f0 = indices.empty() ? 0.0 : eval(f);
    for (std::size_t idx : indices) {
      const double saved = values[idx];
      values[idx] = saved + h;
      const double fp = eval(f);
      values[idx] = saved - h;
      const double fm = eval(f);
      values[idx] = saved;

      GradCheckEntry e{params[pi].name, idx, analytic[pi][idx], (fp - fm) / (2 * h)};
      const double diff = std::abs(e.analytic - e.numeric);
      e.rel_error = diff / std::max({std::abs(e.analytic), std::abs(e.numeric), options.floor});
      if (e.rel_error > options.tolerance) {
        const double right = (fp - f0) / h;
        const double left = (f0 - fm) / h;
        e.kink = std::abs(right - left) >= diff;
      }
      ++summary.checked;
      if (e.kink) {
        ++summary.kinks;
      } else {
        summary.max_rel_error = std::max(summary.max_rel_error, e.rel_error);
      }
      report.entries.push_back(e);
    }
    summary.passed = summary.max_rel_error <= options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, summary.max_rel_error);
    report.kinks += summary.kinks;
    report.passed = report.passed && summary.passed;
    report.params.push_back(summary);
  }
  return report;
}

}  // namespace glyphforge::ad
