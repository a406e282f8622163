#include "dualmap/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dualmap {

void ParameterStore::add(std::string group, std::string name, ad::Var var) {
  if (!var.requires_grad()) throw std::invalid_argument("parameter '" + name + "' is a constant");
  for (const auto& p : params_)
    if (p.name == name) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  params_.push_back({std::move(group), std::move(name), std::move(var)});
}

const NamedParameter& ParameterStore::find(const std::string& name) const {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const NamedParameter& p) { return p.name == name; });
  if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return *it;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

ad::Var xavier_parameter(int fan_in, int fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return ad::parameter(std::move(w));
}

ad::Var zeros_parameter(int rows, int cols) { return ad::parameter(ad::Matrix::Zero(rows, cols)); }
ad::Var ones_parameter(int rows, int cols) { return ad::parameter(ad::Matrix::Ones(rows, cols)); }

}  // namespace dualmap
