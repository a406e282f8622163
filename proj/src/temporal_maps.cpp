#include "dualmap/temporal_maps.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dualmap {

ValidityMask::ValidityMask(int side, std::vector<std::uint8_t> keep)
    : side_(side), keep_(std::move(keep)) {
  if (side < 1 || keep_.size() != static_cast<std::size_t>(side) * side)
    throw std::invalid_argument("ValidityMask: keep vector is not side*side");
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b) {
      auto& k = keep_[static_cast<std::size_t>(a * side + b)];
      if (a > b && k) throw std::invalid_argument("ValidityMask: cell below the diagonal is valid");
      if (k) {
        k = 1;
        cells_.push_back({a, b});
        flat_.push_back(a * side + b);
      }
    }
}

int ValidityMask::position(CandidateCell c) const {
  if (c.a < 0 || c.b < 0 || c.a >= side_ || c.b >= side_ || !valid(c.a, c.b)) return -1;
  // cells_ is sorted row-major, so a binary search on the flat index works
  const Eigen::Index key = c.a * side_ + c.b;
  auto it = std::lower_bound(flat_.begin(), flat_.end(), key);
  return static_cast<int>(it - flat_.begin());
}

ValidityMask build_validity_mask(int n, int short_tier) {
  if (n < 1) throw std::invalid_argument("build_validity_mask: N must be >= 1");
  if (short_tier < 1 || short_tier > n)
    throw std::invalid_argument("build_validity_mask: G must be in [1, N]");
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(n) * n, 0);
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      const int len = b - a + 1;
      bool ok = len <= short_tier;
      if (!ok) {
        // smallest power of two s with s >= len / G
        long stride = 1;
        while (stride * short_tier < len) stride *= 2;
        ok = (b + 1) % stride == 0;
      }
      keep[static_cast<std::size_t>(a * n + b)] = ok ? 1 : 0;
    }
  return ValidityMask(n, std::move(keep));
}

TemporalMap2D aggregate_outer_product(const ad::Var& clips, const ValidityMask& mask) {
  if (clips.rows() != mask.side())
    throw std::invalid_argument("aggregate_outer_product: clip count differs from mask side");
  return {ad::outer_product_map(clips, mask.keep()), mask};
}

TemporalMap2D aggregate_max_pool(const ad::Var& clips, const ValidityMask& mask) {
  if (clips.rows() != mask.side())
    throw std::invalid_argument("aggregate_max_pool: clip count differs from mask side");
  return {ad::max_pool_map(clips, mask.keep()), mask};
}

TemporalMap2D aggregate(Aggregation how, const ad::Var& clips, const ValidityMask& mask) {
  return how == Aggregation::kOuterProduct ? aggregate_outer_product(clips, mask)
                                           : aggregate_max_pool(clips, mask);
}

FusionParams FusionParams::init(int hidden, int out_channels, std::mt19937_64& rng) {
  return {xavier_parameter(hidden, out_channels, rng), zeros_parameter(1, out_channels)};
}

void FusionParams::register_into(ParameterStore& store, const std::string& group) const {
  store.add(group, group + ".fusion_w", weight);
  store.add(group, group + ".fusion_b", bias);
}

ad::Var fuse_multimodal(const ad::Var& clips, const ad::Var& query, const FusionParams& p) {
  if (query.rows() != 1 || query.cols() != clips.cols())
    throw std::invalid_argument("fuse_multimodal: query must be 1 x d matching the clips");
  if (p.weight.rows() != clips.cols())
    throw std::invalid_argument("fuse_multimodal: projection input dim differs from d");
  return ad::add_row(ad::matmul(ad::mul_row(clips, query), p.weight), p.bias);
}

void MapConvConfig::validate() const {
  if (agnostic_layers < 0 || conditioned_layers < 0)
    throw std::invalid_argument("map conv layer counts must be >= 0");
  if (agnostic_kernel < 1 || agnostic_kernel % 2 == 0 || conditioned_kernel < 1 ||
      conditioned_kernel % 2 == 0)
    throw std::invalid_argument("map conv kernel sizes must be odd");
  if (conditioned_channels < 1) throw std::invalid_argument("d_C must be >= 1");
}

MapConvParams MapConvParams::init(int layers, int kernel, int channels, std::mt19937_64& rng) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("map conv kernel must be odd");
  MapConvParams p;
  p.kernel = kernel;
  for (int l = 0; l < layers; ++l) {
    // fan-in covers the whole receptive field
    const int fan_in = kernel * kernel * channels;
    std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / (fan_in + channels)),
                                                std::sqrt(6.0 / (fan_in + channels)));
    ad::Matrix w(fan_in, channels);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    p.weights.push_back(ad::parameter(std::move(w)));
    p.biases.push_back(zeros_parameter(1, channels));
  }
  return p;
}

void MapConvParams::register_into(ParameterStore& store, const std::string& group) const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    store.add(group, group + ".conv" + std::to_string(l) + "_w", weights[l]);
    store.add(group, group + ".conv" + std::to_string(l) + "_b", biases[l]);
  }
}

TemporalMap2D apply_map_convnet(const TemporalMap2D& map, const MapConvParams& p) {
  if (p.kernel < 1 || p.kernel % 2 == 0)
    throw std::invalid_argument("apply_map_convnet: kernel size must be odd");
  ad::Var x = map.features;
  const int n = map.side();
  for (int l = 0; l < p.layers(); ++l) {
    x = ad::conv2d_same(x, p.weights[static_cast<std::size_t>(l)],
                        p.biases[static_cast<std::size_t>(l)], n, p.kernel, map.mask.keep());
    if (l + 1 < p.layers()) x = ad::relu(x);
  }
  return {x, map.mask};
}

}  // namespace dualmap
