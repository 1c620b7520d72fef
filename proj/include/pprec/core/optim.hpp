#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pprec/common/rng.hpp"
#include "pprec/core/tensor.hpp"

namespace pprec::core {

/// Trainable tensor with an accumulated gradient of the same shape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.rows(), value.cols())) {}

  void zero_grad() { grad.fill(0.0); }
};

// Owns every parameter of a model, keyed by name. std::map keeps iteration
// order independent of insertion history, which the optimizer and checkpoint
// writer rely on for reproducibility.
class ParamStore {
public:
  /// Create a parameter; throws ConfigError if the name already exists.
  Parameter& create(const std::string& name, Tensor value);
  /// Glorot-uniform init seeded by derive_seed(seed, name).
  Parameter& create_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                           std::uint64_t seed);
  /// Gaussian init (mean 0) seeded by derive_seed(seed, name).
  Parameter& create_normal(const std::string& name, std::size_t rows, std::size_t cols,
                           double stddev, std::uint64_t seed);
  Parameter& create_zeros(const std::string& name, std::size_t rows, std::size_t cols);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t value_count() const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

private:
  std::map<std::string, Parameter> params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment slots are keyed by parameter name so a
// store can be rebuilt (e.g. after checkpoint load) without invalidating
// optimizer state.
class AdamOptimizer {
public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Apply one update from accumulated gradients, then clear them.
  void step(ParamStore& params);
  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

private:
  struct Slot {
    Tensor m;
    Tensor v;
  };

  AdamConfig cfg_;
  std::map<std::string, Slot> slots_;
  std::int64_t t_ = 0;
};

// Inverted-dropout mask: entries are 0 with probability `rate`, else
// 1/(1-rate), so the expected value of x*mask equals x and inference
// needs no rescaling. rate outside [0, 1) is a ConfigError.
Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

}  // namespace pprec::core
