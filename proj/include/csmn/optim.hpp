#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csmn/tensor.hpp"

namespace csmn {

// Named, ordered registry of trainable tensors. Registration order is the
// optimizer's iteration order, so it must be deterministic across runs.
class ParamStore {
 public:
  void add(const std::string& name, Tensor& t) {
    for (auto& [n, p] : items_)
      if (n == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
    t.ensure_grad();
    items_.emplace_back(name, &t);
  }

  Tensor* find(const std::string& name) const {
    for (auto& [n, p] : items_)
      if (n == name) return p;
    return nullptr;
  }

  void zero_grads() {
    for (auto& [n, p] : items_) p->zero_grad();
  }

  std::size_t total_count() const {
    std::size_t c = 0;
    for (auto& [n, p] : items_) c += p->numel();
    return c;
  }

  const std::vector<std::pair<std::string, Tensor*>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, Tensor*>> items_;
};

// Adam with bias correction. Moment buffers are keyed by registration order;
// step() consumes and clears the accumulated grads.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params) {
    const auto& items = params.items();
    if (m_.empty()) {
      m_.resize(items.size());
      v_.resize(items.size());
      for (std::size_t i = 0; i < items.size(); ++i) {
        m_[i].assign(items[i].second->numel(), 0.0);
        v_[i].assign(items[i].second->numel(), 0.0);
      }
    }
    if (m_.size() != items.size())
      throw std::invalid_argument("Adam: parameter set changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < items.size(); ++i) {
      Tensor& p = *items[i].second;
      if (p.grad.size() != p.data.size())
        throw std::invalid_argument("Adam: missing grad on parameter " + items[i].first);
      for (std::size_t j = 0; j < p.data.size(); ++j) {
        double g = p.grad[j];
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
        double mhat = m_[i][j] / bc1;
        double vhat = v_[i][j] / bc2;
        p.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
    params.zero_grads();
  }

  long long steps_taken() const { return t_; }
  double learning_rate() const { return lr_; }
  const std::vector<std::vector<double>>& moments_m() const { return m_; }
  const std::vector<std::vector<double>>& moments_v() const { return v_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace csmn
