#pragma once
// Central finite-difference gradient verification.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "glyphforge/tensor.hpp"

namespace glyphforge::ad {

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  // Denominator floor: relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // 0 checks every entry; otherwise a seeded subset per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  // One-sided slopes disagree by at least the analytic mismatch: the
  // point sits on a kink and is reported rather than failed.
  bool kink = false;
};

struct GradCheckParam {
  std::string name;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  double max_rel_error = 0.0;  // over non-kink entries
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckParam> params;
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::size_t kinks = 0;
  bool passed = true;
};

/// f must rebuild its graph from the current parameter values on every
/// call and return a scalar. Throws NonFiniteError if f is non-finite.
GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<NamedTensor<double>>& params,
                           const GradCheckOptions& options = {});

}  // namespace glyphforge::ad
