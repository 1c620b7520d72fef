#include "pprec/core/optim.hpp"

#include <cmath>

#include "pprec/common/error.hpp"

namespace pprec::core {

Parameter& ParamStore::create(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, Parameter(name, std::move(value)));
  if (!inserted) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  return it->second;
}

Parameter& ParamStore::create_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                                     std::uint64_t seed) {
  Rng rng(derive_seed(seed, name));
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (auto& v : t.values()) {
    v = rng.uniform(-limit, limit);
  }
  return create(name, std::move(t));
}

Parameter& ParamStore::create_normal(const std::string& name, std::size_t rows, std::size_t cols,
                                     double stddev, std::uint64_t seed) {
  Rng rng(derive_seed(seed, name));
  Tensor t(rows, cols);
  for (auto& v : t.values()) {
    v = rng.normal(0.0, stddev);
  }
  return create(name, std::move(t));
}

Parameter& ParamStore::create_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
  return create(name, Tensor::zeros(rows, cols));
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ConfigError("unknown parameter: " + name);
  }
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ConfigError("unknown parameter: " + name);
  }
  return it->second;
}

std::size_t ParamStore::value_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    n += p.value.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) {
    p.zero_grad();
  }
}

void AdamOptimizer::step(ParamStore& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto [it, inserted] = slots_.try_emplace(name);
    Slot& slot = it->second;
    if (inserted) {
      slot.m = Tensor::zeros(p.value.rows(), p.value.cols());
      slot.v = Tensor::zeros(p.value.rows(), p.value.cols());
    }
    double* m = slot.m.data();
    double* v = slot.v.data();
    double* w = p.value.data();
    const double* g = p.grad.data();
    const std::size_t n = p.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  Tensor mask = Tensor::full(rows, cols, 1.0);
  if (rate == 0.0) {
    return mask;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : mask.values()) {
    v = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

}  // namespace pprec::core
