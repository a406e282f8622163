#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dualmap/config.hpp"
#include "dualmap/scoring.hpp"
#include "support/oracles.hpp"

#include <random>

using namespace dualmap;
using ad::Matrix;

namespace {

HeadParams identity_heads(int d) {
  std::mt19937_64 rng(0);
  HeadParams p = HeadParams::init(d, 2, d, 0.3, rng);
  for (ad::Var* w : {&p.iou_query_w, &p.mm_query_w, &p.iou_map_w, &p.mm_map_w})
    w->mutable_value() = Matrix::Identity(d, d);
  for (ad::Var* b : {&p.iou_query_b, &p.mm_query_b, &p.iou_map_b, &p.mm_map_b})
    b->mutable_value().setZero();
  return p;
}

ValidityMask diagonal_mask(int n) {
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(n * n), 0);
  for (int a = 0; a < n; ++a) keep[static_cast<std::size_t>(a * n + a)] = 1;
  return ValidityMask(n, keep);
}

TemporalMap2D diagonal_map(const Matrix& rows) {
  const int n = static_cast<int>(rows.rows());
  const ValidityMask mask = diagonal_mask(n);
  Matrix f = Matrix::Zero(n * n, rows.cols());
  for (int a = 0; a < n; ++a) f.row(a * n + a) = rows.row(a);
  return {ad::constant(f), mask};
}

std::vector<double> col(const ad::Var& v) {
  return {v.value().data(), v.value().data() + v.value().size()};
}

}  // namespace

TEST_CASE("cosine scores hit the endpoints for parallel and anti-parallel features") {
  const HeadParams p = identity_heads(3);
  Matrix q(1, 3);
  q << 0.5, -1.0, 2.0;
  Matrix cells(3, 3);
  cells.row(0) = 4.0 * q;
  cells.row(1) = -0.25 * q;
  cells.row(2) << 2.0, 1.0, 0.0;  // orthogonal to q
  const AgnosticScores s = score_agnostic_map(diagonal_map(cells), ad::constant(q), p);
  CHECK(s.s_iou.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.s_iou.value()(1, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(std::abs(s.s_iou.value()(2, 0)) < 1e-14);
  CHECK(s.s_mm.value() == s.s_iou.value());
}

TEST_CASE("agnostic scores match a per-cell normalized-dot-product oracle") {
  std::mt19937_64 rng(3);
  const int n = 3, d = 4, h = 5;
  HeadParams p = HeadParams::init(d, 2, h, 0.3, rng);
  for (ad::Var* b : {&p.iou_query_b, &p.mm_query_b, &p.iou_map_b, &p.mm_map_b})
    b->mutable_value() = oracle::random_matrix(1, h, rng);
  const ValidityMask mask = build_validity_mask(n, n);
  Matrix f = Matrix::Zero(n * n, d);
  for (const auto& c : mask.cells()) f.row(c.a * n + c.b) = oracle::random_matrix(1, d, rng);
  const Matrix q = oracle::random_matrix(1, d, rng);
  const AgnosticScores s = score_agnostic_map({ad::constant(f), mask}, ad::constant(q), p);
  REQUIRE(s.s_iou.rows() == mask.count());

  auto branch = [&](const ad::Var& mw, const ad::Var& mb, const ad::Var& qw, const ad::Var& qb,
                    int i) {
    const auto c = mask.cells()[static_cast<std::size_t>(i)];
    Eigen::RowVectorXd u = f.row(c.a * n + c.b) * mw.value() + mb.value();
    Eigen::RowVectorXd v = q * qw.value() + qb.value();
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (int k = 0; k < h; ++k) {
      dot += u(k) * v(k);
      nu += u(k) * u(k);
      nv += v(k) * v(k);
    }
    return dot / std::sqrt(nu * nv);
  };
  for (int i = 0; i < mask.count(); ++i) {
    CHECK(s.s_iou.value()(i, 0) ==
          doctest::Approx(branch(p.iou_map_w, p.iou_map_b, p.iou_query_w, p.iou_query_b, i))
              .epsilon(1e-12));
    CHECK(s.s_mm.value()(i, 0) ==
          doctest::Approx(branch(p.mm_map_w, p.mm_map_b, p.mm_query_w, p.mm_query_b, i))
              .epsilon(1e-12));
  }
}

TEST_CASE("zero-norm projections are rejected") {
  const HeadParams p = identity_heads(2);
  CHECK_THROWS_AS(score_agnostic_map(diagonal_map(Matrix{{1.0, 1.0}}),
                                     ad::constant(Matrix::Zero(1, 2)), p),
                  std::domain_error);
}

TEST_CASE("agnostic calibration examples") {
  CHECK(calibrate_mm(1.0, 0.3) == 1.0);
  CHECK(calibrate_mm(-1.0, 0.3) == 0.0);
  CHECK(calibrate_iou(0.0) == 0.5);
  CHECK(calibrate_mm(0.0, 0.3) == doctest::Approx(0.8122523963562356).epsilon(1e-12));
  const auto cal = calibrate_agnostic(std::vector<double>{0.0, 0.2}, std::vector<double>{0.0, 1.0}, 0.3);
  CHECK(cal.p_a[0] == doctest::Approx(0.5 * 0.8122523963562356).epsilon(1e-12));
  CHECK(cal.p_a[1] == doctest::Approx(oracle::sigmoid(2.0)).epsilon(1e-12));
}

TEST_CASE("calibration matches closed forms and is strictly increasing") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = u(rng), t = u(rng);
    const double expo = 0.05 + 0.95 * (0.5 * u(rng) + 0.5);
    CHECK(std::abs(calibrate_mm(s, expo) - std::pow(0.5 * s + 0.5, expo)) < 1e-9);
    CHECK(std::abs(calibrate_iou(s) - 1.0 / (1.0 + std::exp(-10.0 * s))) < 1e-9);
    if (s < t) {
      CHECK(calibrate_mm(s, expo) < calibrate_mm(t, expo));
      CHECK(calibrate_iou(s) < calibrate_iou(t));
    }
  }
}

TEST_CASE("cellwise dominance in both raw maps survives any increasing reparameterization") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto warp = [](double s) { return std::tanh(2.0 * s) / std::tanh(2.0); };  // increasing on [-1,1]
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> si{u(rng), u(rng)}, sm{u(rng), u(rng)};
    if (!(si[0] > si[1] && sm[0] > sm[1])) continue;
    const auto a = calibrate_agnostic(si, sm, 0.3);
    const auto b = calibrate_agnostic(std::vector<double>{warp(si[0]), warp(si[1])},
                                      std::vector<double>{warp(sm[0]), warp(sm[1])}, 0.3);
    CHECK(a.p_a[0] > a.p_a[1]);
    CHECK(b.p_a[0] > b.p_a[1]);
  }
}

TEST_CASE("conditioned scores") {
  std::mt19937_64 rng(7);
  HeadParams p = HeadParams::init(4, 3, 4, 0.3, rng);
  CHECK(calibrate_conditioned(std::vector<double>{0.0})[0] == 0.5);

  const ValidityMask mask = build_validity_mask(2, 2);  // 3 cells
  Matrix f = Matrix::Zero(4, 3);
  for (const auto& c : mask.cells()) f.row(c.a * 2 + c.b) = oracle::random_matrix(1, 3, rng);
  const TemporalMap2D map{ad::constant(f), mask};

  p.cond_fc_w.mutable_value().setZero();
  p.cond_fc_b.mutable_value().setZero();
  for (double v : calibrate_conditioned(col(score_conditioned_map(map, p)))) CHECK(v == 0.5);

  p.cond_fc_w.mutable_value() << 0.5, -1.0, 2.0;
  p.cond_fc_b.mutable_value() << 0.1;
  const auto raw = col(score_conditioned_map(map, p));
  const auto cal = calibrate_conditioned(raw);
  REQUIRE(raw.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const auto c = mask.cells()[static_cast<std::size_t>(i)];
    const auto row = f.row(c.a * 2 + c.b);
    const double want = 0.5 * row(0) - 1.0 * row(1) + 2.0 * row(2) + 0.1;
    CHECK(raw[static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-12));
    CHECK(cal[static_cast<std::size_t>(i)] == doctest::Approx(oracle::sigmoid(10.0 * want)).epsilon(1e-12));
  }
}

TEST_CASE("joint scores") {
  const ValidityMask m2 = diagonal_mask(2);
  CHECK(combine_scores(std::vector<double>{0.8, 0.3}, m2, std::vector<double>{0.5, 1.0}, m2) ==
        std::vector<double>{0.8 * 0.5, 0.3});
  const std::vector<double> pa{0.9, 0.7}, pc{0.1, 0.8};
  const auto joint = combine_scores(pa, m2, pc, m2);
  CHECK(joint[0] < joint[1]);  // the conditioned path vetoes the agnostic favourite
  CHECK(pa[0] > pa[1]);
  CHECK(combine_scores(pa, m2, std::vector<double>{1.0, 1.0}, m2) == pa);
  CHECK(combine_scores(pa, m2, pc, m2) == combine_scores(pc, m2, pa, m2));
  CHECK_THROWS(combine_scores(pa, m2, pc, build_validity_mask(2, 2)));
  CHECK_THROWS(combine_scores(pa, m2, std::vector<double>{0.5}, m2));
}

TEST_CASE("nms examples") {
  auto iv = [](double s, double e) { return TimeInterval(s, e); };
  const auto one = nms_select({{iv(0, 10), 0.9}, {iv(1, 11), 0.8}}, 0.4);
  REQUIRE(one.size() == 1);
  CHECK(one[0].interval == iv(0, 10));
  CHECK(temporal_iou(iv(0, 10), iv(1, 11)) == doctest::Approx(9.0 / 11.0).epsilon(1e-15));

  const auto disjoint = nms_select({{iv(0, 1), 0.2}, {iv(2, 3), 0.7}, {iv(5, 9), 0.5}}, 0.4);
  REQUIRE(disjoint.size() == 3);
  CHECK(disjoint[0].score == 0.7);
  CHECK(disjoint[1].score == 0.5);
  CHECK(disjoint[2].score == 0.2);

  CHECK(nms_select({{iv(3, 4), 0.1}}, 0.4).size() == 1);
  CHECK(nms_select({}, 0.4).empty());
  CHECK(TrainConfig{}.nms_threshold == 0.4);
}

TEST_CASE("nms tie-breaking is deterministic") {
  auto iv = [](double s, double e) { return TimeInterval(s, e); };
  // equal scores: earlier start wins
  auto r = nms_select({{iv(2, 6), 0.5}, {iv(1, 5), 0.5}}, 0.4);
  REQUIRE(r.size() == 1);
  CHECK(r[0].interval == iv(1, 5));
  // equal scores and start: shorter wins
  r = nms_select({{iv(1, 8), 0.5}, {iv(1, 6), 0.5}}, 0.4);
  REQUIRE(r.size() == 1);
  CHECK(r[0].interval == iv(1, 6));
  // the same ties in any input order give the same output
  std::vector<ScoredInterval> c{{iv(0, 4), 0.5}, {iv(0, 3), 0.5}, {iv(1, 4), 0.5}, {iv(6, 9), 0.5}};
  const auto base = nms_select(c, 0.4);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(c.begin(), c.end(), rng);
    const auto again = nms_select(c, 0.4);
    REQUIRE(again.size() == base.size());
    for (std::size_t k = 0; k < base.size(); ++k) CHECK(again[k].interval == base[k].interval);
  }
  CHECK(base.front().interval == iv(0, 3));
}

TEST_CASE("nms properties on random candidate sets") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 30.0), score(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredInterval> c;
    const int k = 1 + trial % 25;
    for (int i = 0; i < k; ++i) {
      double s = u(rng), e = u(rng);
      if (s > e) std::swap(s, e);
      if (e - s < 0.01) e = s + 0.01;
      c.push_back({TimeInterval(s, e), std::round(score(rng) * 10) / 10});
    }
    const double thr = 0.1 + 0.8 * score(rng);
    const auto kept = nms_select(c, thr);
    CHECK(!kept.empty());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      bool found = false;
      for (const auto& x : c) found |= x.interval == kept[i].interval && x.score == kept[i].score;
      CHECK(found);
      if (i > 0) CHECK(kept[i - 1].score >= kept[i].score);
      for (std::size_t j = 0; j < i; ++j)
        CHECK(temporal_iou(kept[i].interval, kept[j].interval) <= thr);
    }
    CHECK(nms_select(c, thr, 2).size() <= 2);
  }
}

TEST_CASE("top survivor of a scored map lies inside the video") {
  std::mt19937_64 rng(10);
  const ValidityMask mask = build_validity_mask(7, 2);
  const ClipGrid grid(23, 7, 19.3);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredInterval> c;
    for (const auto& cell : mask.cells()) c.push_back({interval_from_cell(cell, grid), score(rng)});
    const auto top = nms_select(c, 0.4, 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0].interval.start() >= 0.0);
    CHECK(top[0].interval.end() <= 19.3);
  }
}
