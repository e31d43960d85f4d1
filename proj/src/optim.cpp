#include "graphmask/optim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace graphmask {

using nlohmann::json;

Tensor& ParameterStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw std::invalid_argument("duplicate parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::pair<std::string, Tensor>> ParameterStore::named() const {
  return {params_.begin(), params_.end()};
}

void ParameterStore::set_requires_grad(bool flag) {
  for (auto& [name, t] : params_) t.set_requires_grad(flag);
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

ParameterStore ParameterStore::clone(bool requires_grad) const {
  ParameterStore copy;
  for (const auto& [name, t] : params_) copy.add(name, t.clone(requires_grad));
  return copy;
}

void ParameterStore::load(const ParameterStore& other) {
  if (other.size() != size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(other.size()) +
                                " parameters, expected " + std::to_string(size()));
  }
  for (auto& [name, t] : params_) {
    const Tensor& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw ShapeError("load '" + name + "'", {t.shape(), src.shape()});
    }
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  }
}

std::string checkpoint_to_json(const ParameterStore& params, int indent) {
  json doc = json::object();
  for (const auto& [name, t] : params.items()) {
    doc[name] = {{"shape", t.shape()},
                 {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  return doc.dump(indent);
}

ParameterStore checkpoint_from_json(const std::string& text) {
  const json doc = json::parse(text);
  if (!doc.is_object()) throw std::invalid_argument("checkpoint must be a JSON object");
  ParameterStore params;
  for (const auto& [name, entry] : doc.items()) {
    auto shape = entry.at("shape").get<Shape>();
    auto data = entry.at("data").get<std::vector<double>>();
    params.add(name, Tensor::from(std::move(shape), std::move(data)));
  }
  return params;
}

void save_checkpoint(const ParameterStore& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(params) << '\n';
}

ParameterStore load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_json(buffer.str());
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<std::pair<std::string, Tensor>> params)
    : config_(config), params_(std::move(params)) {
  if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  for (const auto& [name, t] : params_) {
    first_moment_.emplace_back(t.numel(), 0.0);
    second_moment_.emplace_back(t.numel(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void Optimizer::step() {
  for (const auto& [name, t] : params_) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(name);
    }
  }
  ++steps_;
  const double lr = config_.learning_rate;
  const double sign = config_.maximize ? -1.0 : 1.0;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p].second;
    if (!t.has_grad()) continue;
    auto value = t.mutable_data();
    const auto grad = t.grad();
    auto& m = first_moment_[p];
    auto& v = second_moment_[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = sign * grad[i];
      if (config_.kind == OptimizerKind::adam) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        value[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      } else {
        v[i] = config_.rms_decay * v[i] + (1.0 - config_.rms_decay) * g * g;
        value[i] -= lr * g / std::sqrt(v[i] + config_.eps);
      }
    }
  }
}

}  // namespace graphmask
