#pragma once

#include "mrvpc/common/errors.hpp"
#include "mrvpc/common/seed.hpp"
#include "mrvpc/nncore/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrvpc::nn {

/// Loss closure: evaluates the loss at the store's current values. When
/// `with_grad` is set it must also leave dL/dparam in the store's grads
/// (accumulated onto zeroed grads).
using LossClosure = std::function<double(ParamStore<double>&, bool with_grad)>;

struct GradCheckEntry {
  std::string param;
  std::size_t coord = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::vector<GradCheckEntry> entries;
  std::string worst_param;
};

inline double grad_rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

/// Compares analytic gradients to central differences on sampled coordinates
/// of every tensor (all coordinates when a tensor has fewer than
/// samples_per_tensor values).
inline GradCheckReport grad_check(const LossClosure& loss, ParamStore<double>& params,
                                  double eps = 1e-5, std::size_t samples_per_tensor = 4,
                                  std::uint64_t seed = 0) {
  if (!(eps > 0)) throw std::invalid_argument("grad_check: eps must be > 0");
  params.zero_grad();
  const double base = loss(params, true);
  std::vector<AlignedVector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& e : params) analytic.push_back(e.grad.values);
  const double again = loss(params, false);
  if (again != base)
    throw CheckError("grad_check: loss is not deterministic (" + std::to_string(base) + " vs " +
                     std::to_string(again) + ")");

  GradCheckReport report;
  Rng rng(seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& vals = params[i].value.values;
    std::vector<std::size_t> coords;
    if (vals.size() <= samples_per_tensor) {
      for (std::size_t c = 0; c < vals.size(); ++c) coords.push_back(c);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, vals.size() - 1);
      for (std::size_t s = 0; s < samples_per_tensor; ++s) coords.push_back(pick(rng));
    }
    for (std::size_t c : coords) {
      const double orig = vals[c];
      vals[c] = orig + eps;
      const double up = loss(params, false);
      vals[c] = orig - eps;
      const double down = loss(params, false);
      vals[c] = orig;
      const double numeric = (up - down) / (2 * eps);
      GradCheckEntry entry{params[i].name, c, analytic[i][c], numeric,
                           grad_rel_error(analytic[i][c], numeric)};
      if (entry.rel_error > report.max_rel_error) {
        report.max_rel_error = entry.rel_error;
        report.worst_param = entry.param;
      }
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

}  // namespace mrvpc::nn
