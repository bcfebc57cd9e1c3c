#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "srvo/params.hpp"
#include "srvo/rng.hpp"

namespace srvo {

// |a - n| / max(|a|, |n|, floor)
inline double rel_err(double a, double n, double floor = 1e-5) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  int64_t coords_checked = 0;
};

// Central-difference check of an analytic gradient map against fn. Every
// coordinate is compared when the store holds <= 1000 parameters; above that
// a seeded random subsample of ~200 coordinates (at least one per tensor) is
// used.
inline GradCheckReport grad_check_report(const std::function<double(const ParamStore&)>& fn,
                                         ParamStore& params, const GradMap& analytic, double h,
                                         uint64_t seed = 0, bool force_exhaustive = false) {
  GradCheckReport rep;
  std::vector<std::pair<std::string, int64_t>> coords;
  const bool subsample = !force_exhaustive && params.total_params() > 1000;
  Rng rng(mix_seed(seed, 0x6e5fULL));
  for (const auto& [name, g] : analytic) {
    const Tensor& p = params.at(name);
    if (!p.same_shape(g)) throw StructuralError("grad_check shape mismatch for " + name);
    if (subsample) {
      coords.emplace_back(name, static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(p.numel()))));
    } else {
      for (int64_t i = 0; i < p.numel(); ++i) coords.emplace_back(name, i);
    }
  }
  if (subsample) {
    std::vector<std::string> names;
    for (const auto& [name, g] : analytic) names.push_back(name);
    const int64_t total = params.total_params();
    while (static_cast<int64_t>(coords.size()) < 200 + static_cast<int64_t>(names.size())) {
      // weight tensor choice by size so big matrices dominate the sample
      int64_t flat = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(total)));
      for (const auto& name : names) {
        const int64_t n = params.at(name).numel();
        if (flat < n) {
          coords.emplace_back(name, flat);
          break;
        }
        flat -= n;
      }
    }
  }
  for (const auto& [name, idx] : coords) {
    Tensor& p = params.mutable_at(name);
    const double orig = p.data[static_cast<size_t>(idx)];
    p.data[static_cast<size_t>(idx)] = orig + h;
    const double f_plus = fn(params);
    p.data[static_cast<size_t>(idx)] = orig - h;
    const double f_minus = fn(params);
    p.data[static_cast<size_t>(idx)] = orig;
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double analytic_v = analytic.at(name).data[static_cast<size_t>(idx)];
    const double e = rel_err(analytic_v, numeric);
    if (e > rep.max_rel_err) {
      rep.max_rel_err = e;
      rep.worst_param = name;
      rep.worst_index = idx;
    }
    ++rep.coords_checked;
  }
  return rep;
}

inline double grad_check(const std::function<double(const ParamStore&)>& fn, ParamStore& params,
                         const GradMap& analytic, double h, uint64_t seed = 0) {
  return grad_check_report(fn, params, analytic, h, seed).max_rel_err;
}

}  // namespace srvo
