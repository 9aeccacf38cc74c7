// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ram/numerics/rng.hpp"
#include "ram/numerics/tape.hpp"

namespace ram {

/// Owns named parameters at stable addresses. Iteration is in name order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(const std::string& name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter*> with_prefix(const std::string& prefix);

  std::size_t size() const { return params_.size(); }
  std::int64_t count_values() const;
  std::int64_t count_values(const std::string& prefix) const;

  /// Content hash over names, shapes, and values.
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::unique_ptr<Parameter>> params_;
};

// Initializers.
Tensor xavier_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng);
Tensor normal_init(Shape shape, double stddev, Rng& rng);

}  // namespace ram
