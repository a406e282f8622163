#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dualmap/temporal_maps.hpp"
#include "support/oracles.hpp"

#include <random>

using namespace dualmap;
using ad::Matrix;

namespace {

ad::Var clips_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return ad::constant(m);
}

Matrix cell(const TemporalMap2D& map, int a, int b) {
  return map.features.value().row(a * map.side() + b);
}

bool invalid_cells_zero(const TemporalMap2D& map) {
  const int n = map.side();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (!map.mask.valid(a, b) && cell(map, a, b).cwiseAbs().maxCoeff() != 0.0) return false;
  return true;
}

}  // namespace

TEST_CASE("validity mask examples") {
  CHECK(build_validity_mask(4, 4).count() == 10);
  CHECK(build_validity_mask(16, 8).count() == 120);
  CHECK(oracle::mask_count(16, 8) == 120);
  CHECK(build_validity_mask(1, 1).count() == 1);
}

TEST_CASE("validity mask equals brute-force enumeration for N <= 64") {
  for (int n = 1; n <= 64; ++n)
    for (int g = 1; g <= n; ++g) {
      const ValidityMask m = build_validity_mask(n, g);
      const auto want = oracle::mask_grid(n, g);
      REQUIRE(m.keep() == want);
      CHECK(m.count() >= n);
      for (int a = 0; a < n; ++a) CHECK(m.valid(a, a));
      // row-major cell order indexes the score vectors
      for (int i = 0; i < m.count(); ++i) {
        const auto c = m.cells()[static_cast<std::size_t>(i)];
        CHECK(c.a <= c.b);
        CHECK(m.position(c) == i);
        CHECK(m.flat_indices()[static_cast<std::size_t>(i)] == c.a * n + c.b);
      }
    }
}

TEST_CASE("ValidityMask rejects cells below the diagonal") {
  std::vector<std::uint8_t> keep(4, 0);
  keep[2] = 1;  // (1,0)
  CHECK_THROWS_AS(ValidityMask(2, keep), std::invalid_argument);
  CHECK_THROWS_AS(ValidityMask(2, std::vector<std::uint8_t>(3, 0)), std::invalid_argument);
  CHECK(build_validity_mask(3, 1).position({2, 0}) == -1);
}

TEST_CASE("outer product aggregation examples") {
  const ValidityMask mask = build_validity_mask(2, 2);
  const TemporalMap2D m = aggregate_outer_product(clips_of({{1, 2}, {3, 4}}), mask);
  CHECK(cell(m, 0, 1) == Matrix{{3, 8}});
  CHECK(cell(m, 1, 0) == Matrix{{0, 0}});

  const TemporalMap2D ones =
      aggregate_outer_product(clips_of({{1, 1, 1}, {0.5, -2, 7}}), mask);
  CHECK(cell(ones, 0, 1) == Matrix{{0.5, -2, 7}});
}

TEST_CASE("aggregations match per-cell oracles for N <= 16, d <= 8") {
  std::mt19937_64 rng(21);
  for (int n = 1; n <= 16; ++n)
    for (int d : {1, 3, 8}) {
      const int g = 1 + static_cast<int>(rng() % static_cast<unsigned>(n));
      const ValidityMask mask = build_validity_mask(n, g);
      const Matrix v = oracle::random_matrix(n, d, rng);
      const TemporalMap2D op = aggregate_outer_product(ad::constant(v), mask);
      const TemporalMap2D mp = aggregate_max_pool(ad::constant(v), mask);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          Matrix want_op = Matrix::Zero(1, d), want_mp = Matrix::Zero(1, d);
          if (oracle::mask_cell(a, b, g)) {
            for (int k = 0; k < d; ++k) {
              want_op(0, k) = v(a, k) * v(b, k);
              double best = v(a, k);
              for (int t = a + 1; t <= b; ++t) best = std::max(best, v(t, k));
              want_mp(0, k) = best;
            }
          }
          CHECK(cell(op, a, b) == want_op);
          CHECK(cell(mp, a, b) == want_mp);
        }
    }
}

TEST_CASE("max pool aggregation examples and monotonicity") {
  const ValidityMask mask = build_validity_mask(3, 3);
  const ad::Var v = clips_of({{1, 0}, {0, 2}, {1, 1}});
  const TemporalMap2D m = aggregate_max_pool(v, mask);
  CHECK(cell(m, 0, 2) == Matrix{{1, 2}});
  for (int a = 0; a < 3; ++a) CHECK(cell(m, a, a) == v.value().row(a));

  std::mt19937_64 rng(5);
  const int n = 9;
  const ValidityMask full = build_validity_mask(n, n);
  const TemporalMap2D r = aggregate_max_pool(ad::constant(oracle::random_matrix(n, 4, rng)), full);
  for (int a = 0; a < n; ++a)
    for (int b = a; b + 1 < n; ++b) {
      CHECK((cell(r, a, b + 1).array() >= cell(r, a, b).array()).all());
      if (a > 0) CHECK((cell(r, a - 1, b).array() >= cell(r, a, b).array()).all());
    }
}

TEST_CASE("aggregation properties") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 10;
    const ValidityMask mask = build_validity_mask(n, 1 + trial % n);
    const Matrix v = oracle::random_matrix(n, 5, rng);
    const TemporalMap2D op = aggregate_outer_product(ad::constant(v), mask);
    const TemporalMap2D mp = aggregate_max_pool(ad::constant(v), mask);
    CHECK(invalid_cells_zero(op));
    CHECK(invalid_cells_zero(mp));
    const ValidityMask full = build_validity_mask(n, n);
    const TemporalMap2D sym = aggregate_outer_product(ad::constant(v), full);
    for (int a = 0; a < n; ++a) {
      CHECK(cell(op, a, a) == v.row(a).cwiseProduct(v.row(a)));
      CHECK(cell(mp, a, a) == v.row(a));
      for (int b = a; b < n; ++b)
        CHECK(cell(sym, a, b) == v.row(b).cwiseProduct(v.row(a)));
    }
    // masking twice equals masking once
    const auto once = ad::mask_rows(op.features, mask.keep());
    const auto twice = ad::mask_rows(once, mask.keep());
    CHECK(once.value() == twice.value());
    CHECK(once.value() == op.features.value());
  }
}

TEST_CASE("both aggregations agree on the diagonal for a shared fixture") {
  std::mt19937_64 rng(9);
  const int n = 6;
  const ValidityMask mask = build_validity_mask(n, 2);
  Matrix v = oracle::random_matrix(n, 3, rng).cwiseAbs();
  // v .* v on the diagonal equals max(v) only for 0/1 entries
  v = (v.array() > 0.5).cast<double>();
  const TemporalMap2D op = aggregate_outer_product(ad::constant(v), mask);
  const TemporalMap2D mp = aggregate_max_pool(ad::constant(v), mask);
  for (int a = 0; a < n; ++a) CHECK(cell(op, a, a) == cell(mp, a, a));
}

TEST_CASE("aggregation shape checks") {
  const ValidityMask mask = build_validity_mask(4, 2);
  CHECK_THROWS(aggregate_outer_product(ad::constant(Matrix::Ones(3, 2)), mask));
  CHECK_THROWS(aggregate_max_pool(ad::constant(Matrix::Ones(5, 2)), mask));
}

TEST_CASE("multimodal fusion examples") {
  std::mt19937_64 rng(31);
  const int d = 4;
  FusionParams p = FusionParams::init(d, d, rng);
  p.weight.mutable_value() = Matrix::Identity(d, d);
  p.bias.mutable_value().setZero();
  const Matrix video = oracle::random_matrix(3, d, rng);
  CHECK(fuse_multimodal(ad::constant(video), ad::constant(Matrix::Ones(1, d)), p).value() == video);
  CHECK(fuse_multimodal(ad::constant(video), ad::constant(Matrix::Zero(1, d)), p)
            .value()
            .isZero(0.0));

  FusionParams q = FusionParams::init(d, 2, rng);
  q.bias.mutable_value() = oracle::random_matrix(1, 2, rng);
  const Matrix query = oracle::random_matrix(1, d, rng);
  Matrix want(3, 2);
  for (int i = 0; i < 3; ++i)
    for (int o = 0; o < 2; ++o) {
      double acc = q.bias.value()(0, o);
      for (int k = 0; k < d; ++k) acc += video(i, k) * query(0, k) * q.weight.value()(k, o);
      want(i, o) = acc;
    }
  const Matrix got = fuse_multimodal(ad::constant(video), ad::constant(query), q).value();
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS(fuse_multimodal(ad::constant(video), ad::constant(Matrix::Ones(1, d + 1)), q));
}

TEST_CASE("map convnet matches a layered dense oracle") {
  std::mt19937_64 rng(41);
  for (int n : {3, 6, 9})
    for (int layers : {0, 1, 4}) {
      const int c = 3;
      const ValidityMask mask = build_validity_mask(n, 2);
      MapConvParams p = MapConvParams::init(layers, 3, c, rng);
      for (auto& b : p.biases) b.mutable_value() = oracle::random_matrix(1, c, rng);
      const TemporalMap2D in =
          aggregate_outer_product(ad::constant(oracle::random_matrix(n, c, rng)), mask);
      const TemporalMap2D out = apply_map_convnet(in, p);
      CHECK(out.features.rows() == n * n);
      CHECK(out.features.cols() == c);
      CHECK(out.mask == mask);
      Matrix want = in.features.value();
      for (int l = 0; l < layers; ++l) {
        want = oracle::dense_conv(want, p.weights[static_cast<std::size_t>(l)].value(),
                                  p.biases[static_cast<std::size_t>(l)].value(), n, 3, mask.keep());
        if (l + 1 < layers) want = want.cwiseMax(0.0);
      }
      CHECK((out.features.value() - want).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(invalid_cells_zero(out));
      if (layers == 0) CHECK(out.features.value() == in.features.value());
    }
}

TEST_CASE("map convnet shape contract, zero input and kernel validation") {
  std::mt19937_64 rng(51);
  for (int n : {2, 5, 8, 16}) {
    const ValidityMask mask = build_validity_mask(n, std::min(n, 4));
    const MapConvParams p = MapConvParams::init(4, 3, 2, rng);
    const TemporalMap2D zero{ad::constant(Matrix::Zero(n * n, 2)), mask};
    const TemporalMap2D out = apply_map_convnet(zero, p);
    CHECK(out.features.rows() == n * n);
    CHECK(out.features.value().isZero(0.0));
  }
  CHECK_THROWS_AS(MapConvParams::init(2, 2, 3, rng), std::invalid_argument);
  MapConvConfig cfg;
  cfg.agnostic_kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = MapConvConfig{};
  cfg.conditioned_layers = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
