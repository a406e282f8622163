#pragma once

// 2D temporal proposal maps. A map over N sampled clips is an N x N grid of
// channel vectors stored row-major as an (N*N) x C matrix; cell (a, b) lives
// in row a*N + b. Only cells flagged by the validity mask carry content.

#include "dualmap/autograd.hpp"
#include "dualmap/data_model.hpp"
#include "dualmap/parameters.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dualmap {

class ValidityMask {
 public:
  ValidityMask() = default;
  ValidityMask(int side, std::vector<std::uint8_t> keep);

  int side() const { return side_; }
  bool valid(int a, int b) const { return keep_[static_cast<std::size_t>(a * side_ + b)] != 0; }
  /// Number of valid cells (M).
  int count() const { return static_cast<int>(cells_.size()); }
  /// Valid cells in row-major order; this order indexes every per-cell score vector.
  const std::vector<CandidateCell>& cells() const { return cells_; }
  const std::vector<Eigen::Index>& flat_indices() const { return flat_; }
  const std::vector<std::uint8_t>& keep() const { return keep_; }
  /// Position of (a,b) in cells(), or -1 when invalid.
  int position(CandidateCell c) const;

  friend bool operator==(const ValidityMask& x, const ValidityMask& y) {
    return x.side_ == y.side_ && x.keep_ == y.keep_;
  }

 private:
  int side_ = 0;
  std::vector<std::uint8_t> keep_;
  std::vector<CandidateCell> cells_;
  std::vector<Eigen::Index> flat_;
};

/// Cell (a,b) with duration L = b-a+1 is valid iff L <= G, or (b+1) is a
/// multiple of 2^ceil(log2(L/G)).
ValidityMask build_validity_mask(int n, int short_tier);

struct TemporalMap2D {
  ad::Var features;  // (N*N) x C, zero rows on invalid cells
  ValidityMask mask;

  int side() const { return mask.side(); }
  Eigen::Index channels() const { return features.cols(); }
};

enum class Aggregation { kOuterProduct, kMaxPool };

/// Channel-wise boundary product: cell (a,b) = v_a .* v_b.
TemporalMap2D aggregate_outer_product(const ad::Var& clips, const ValidityMask& mask);
/// Cell (a,b) = element-wise max of v_a..v_b.
TemporalMap2D aggregate_max_pool(const ad::Var& clips, const ValidityMask& mask);
TemporalMap2D aggregate(Aggregation how, const ad::Var& clips, const ValidityMask& mask);

struct FusionParams {
  ad::Var weight;  // d x d_C
  ad::Var bias;    // 1 x d_C

  static FusionParams init(int hidden, int out_channels, std::mt19937_64& rng);
  void register_into(ParameterStore& store, const std::string& group) const;
};

/// (clips .* query) * W + b, i.e. Hadamard fusion then projection to d_C.
ad::Var fuse_multimodal(const ad::Var& clips, const ad::Var& query, const FusionParams& p);

struct MapConvConfig {
  int agnostic_layers = 4;
  int agnostic_kernel = 3;
  int conditioned_layers = 3;
  int conditioned_kernel = 3;
  int conditioned_channels = 32;  // d_C

  void validate() const;
};

struct MapConvParams {
  int kernel = 3;
  std::vector<ad::Var> weights;  // (K*K*C) x C each
  std::vector<ad::Var> biases;

  static MapConvParams init(int layers, int kernel, int channels, std::mt19937_64& rng);
  void register_into(ParameterStore& store, const std::string& group) const;
  int layers() const { return static_cast<int>(weights.size()); }
};

/// Same-shape zero-padded convolutions with ReLU between layers (none after
/// the last); invalid cells are zero after every layer.
TemporalMap2D apply_map_convnet(const TemporalMap2D& map, const MapConvParams& p);

}  // namespace dualmap
