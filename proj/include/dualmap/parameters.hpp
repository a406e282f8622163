#pragma once

#include "dualmap/autograd.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dualmap {

/// A trainable tensor with the checkpoint group it is serialized under.
struct NamedParameter {
  std::string group;
  std::string name;
  ad::Var var;
};

/// Flat registry over parameter handles owned by the model's sub-structures.
/// Handles share nodes with the model, so updates here are visible there.
class ParameterStore {
 public:
  void add(std::string group, std::string name, ad::Var var);
  const std::vector<NamedParameter>& all() const { return params_; }
  std::vector<NamedParameter>& all() { return params_; }
  const NamedParameter& find(const std::string& name) const;
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<NamedParameter> params_;
};

// Xavier-uniform initialization for a fan_in x fan_out weight.
ad::Var xavier_parameter(int fan_in, int fan_out, std::mt19937_64& rng);
ad::Var zeros_parameter(int rows, int cols);
ad::Var ones_parameter(int rows, int cols);

}  // namespace dualmap
