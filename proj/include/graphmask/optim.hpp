#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphmask/tensor.hpp"

namespace graphmask {

/// Named parameter tensors in a stable (sorted) order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const std::map<std::string, Tensor>& items() const { return params_; }
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::size_t size() const { return params_.size(); }

  void set_requires_grad(bool flag);
  void zero_grad();
  // Independent copy of every value.
  ParameterStore clone(bool requires_grad) const;
  // Overwrites values from `other`; names and shapes must match.
  void load(const ParameterStore& other);

 private:
  std::map<std::string, Tensor> params_;
};

/// Checkpoint document: {name: {"shape": [...], "data": [...]}}, row-major.
std::string checkpoint_to_json(const ParameterStore& params, int indent = -1);
ParameterStore checkpoint_from_json(const std::string& text);
void save_checkpoint(const ParameterStore& params, const std::string& path);
ParameterStore load_checkpoint(const std::string& path);

enum class OptimizerKind { adam, rmsprop };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rms_decay = 0.99;
  double eps = 1e-8;
  bool maximize = false;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& parameter)
      : std::runtime_error("non-finite gradient in parameter '" + parameter + "'"),
        parameter_(parameter) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

/// Adam or RMSProp over a fixed set of parameters. A parameter that received
/// no gradient since the last zero_grad is left untouched, moments included.
///
/// RMSProp keeps eps inside the square root: p -= lr * g / sqrt(v + eps).
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<std::pair<std::string, Tensor>> params);

  void step();
  void zero_grad();
  std::uint64_t step_count() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::uint64_t steps_ = 0;
};

}  // namespace graphmask
