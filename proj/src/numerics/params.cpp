// SPDX-License-Identifier: Apache-2.0
#include "ram/numerics/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ram {

Parameter& ParameterStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.try_emplace(name, nullptr);
  if (!inserted) throw std::invalid_argument("parameter '" + name + "' registered twice");
  it->second = std::make_unique<Parameter>(Parameter{name, std::move(value)});
  return *it->second;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return *it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return *it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : it->second.get();
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& [_, p] : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& [_, p] : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_)
    if (name.rfind(prefix, 0) == 0) out.push_back(p.get());
  return out;
}

std::int64_t ParameterStore::count_values() const {
  std::int64_t n = 0;
  for (const auto& [_, p] : params_) n += p->value.numel();
  return n;
}

std::int64_t ParameterStore::count_values(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& [name, p] : params_)
    if (name.rfind(prefix, 0) == 0) n += p->value.numel();
  return n;
}

std::uint64_t ParameterStore::hash() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& [name, p] : params_) {
    h = fnv1a(name.data(), name.size(), h);
    const Shape& s = p->value.shape();
    h = fnv1a(s.data(), s.size() * sizeof(s[0]), h);
    // Hash the 32-bit representation so both precisions agree on stored values.
    for (Real v : p->value.data()) {
      const float f = static_cast<float>(v);
      h = fnv1a(&f, sizeof f, h);
    }
  }
  return h;
}

Tensor xavier_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(Shape{fan_in, fan_out});
  for (auto& v : t.data()) v = static_cast<Real>((2.0 * rng.uniform() - 1.0) * limit);
  return t;
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(rng.normal() * stddev);
  return t;
}

}  // namespace ram
