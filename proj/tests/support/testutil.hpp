#pragma once

#include <functional>
#include <vector>

#include "csmn/gradcheck.hpp"
#include "csmn/rng.hpp"
#include "csmn/tensor.hpp"

namespace testutil {

// Gradient-check harness for a scalar loss built from the given parameters.
// `loss_of` must rebuild the same computation from scratch on every call
// (reading the parameters' current values through g.param).
inline double fd_check(std::vector<csmn::Tensor*> params,
                       const std::function<csmn::Var(csmn::Graph&)>& loss_of,
                       double h = 1e-5, std::size_t max_coords = 0,
                       std::uint64_t seed = 99) {
  for (auto* p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  csmn::Graph g;
  csmn::Var loss = loss_of(g);
  g.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);
  auto f = [&loss_of]() {
    csmn::Graph g2;
    return g2.scalar_value(loss_of(g2));
  };
  csmn::Rng rng(seed);
  return csmn::finite_diff_check(f, params, analytic, h, max_coords, rng);
}

inline csmn::Tensor random_tensor(std::vector<std::size_t> shape, csmn::Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
  csmn::Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// All-pairs AUC with half credit for ties; the independent oracle for the
// rank-sum implementation.
inline double brute_force_auc(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace testutil
