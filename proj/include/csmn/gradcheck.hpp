#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "csmn/rng.hpp"
#include "csmn/tensor.hpp"

namespace csmn {

// Central-difference gradient check. `f` must be a deterministic scalar
// function of the current parameter values (dropout off, memory writes off).
// `analytic` holds f's gradient at the current point, one vector per
// parameter in the same order. At most `max_coords` coordinates are sampled
// across all parameters (0 = check every coordinate). Returns the max
// relative error, |a - n| / max(|a|, |n|, 1e-6).
inline double finite_diff_check(const std::function<double()>& f,
                                const std::vector<Tensor*>& params,
                                const std::vector<std::vector<double>>& analytic,
                                double h, std::size_t max_coords, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t j = 0; j < params[p]->numel(); ++j) coords.emplace_back(p, j);
  if (max_coords > 0 && coords.size() > max_coords) {
    // sample without replacement, but keep at least one coordinate per
    // parameter so every group is covered
    rng.shuffle(coords);
    std::vector<std::pair<std::size_t, std::size_t>> picked(coords.begin(),
                                                            coords.begin() + max_coords);
    std::vector<bool> seen(params.size(), false);
    for (auto& [p, j] : picked) seen[p] = true;
    for (std::size_t p = 0; p < params.size(); ++p)
      if (!seen[p] && params[p]->numel() > 0)
        picked.emplace_back(p, rng.index(params[p]->numel()));
    coords = std::move(picked);
  }
  double max_rel = 0.0;
  for (auto& [p, j] : coords) {
    double saved = params[p]->data[j];
    params[p]->data[j] = saved + h;
    double fp = f();
    params[p]->data[j] = saved - h;
    double fm = f();
    params[p]->data[j] = saved;
    double numeric = (fp - fm) / (2.0 * h);
    double a = analytic[p][j];
    double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
    max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
  }
  return max_rel;
}

}  // namespace csmn
