#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dualmap/encoders.hpp"
#include "support/oracles.hpp"

#include <fstream>
#include <random>

using namespace dualmap;
using ad::Matrix;

namespace {

// Window averaging written directly from the index rule.
Matrix window_average(const Matrix& x, int n) {
  const int t = static_cast<int>(x.rows());
  Matrix out(n, x.cols());
  for (int i = 0; i < n; ++i) {
    const int lo = i * t / n;
    const int hi = (i + 1) * t / n;
    if (hi <= lo) {
      out.row(i) = x.row(std::min(lo, t - 1));
      continue;
    }
    out.row(i).setZero();
    for (int r = lo; r < hi; ++r) out.row(i) += x.row(r);
    out.row(i) /= (hi - lo);
  }
  return out;
}

EncoderConfig tiny(int layers) {
  EncoderConfig c;
  c.layers = layers;
  c.hidden = 8;
  c.video_dim = 5;
  c.sampled_clips = 4;
  c.heads = 2;
  c.ffn_hidden = 12;
  c.max_positions = 64;
  return c;
}

}  // namespace

TEST_CASE("fixed_length_sample examples") {
  Matrix x(4, 1);
  x << 1, 3, 5, 7;
  Matrix want(2, 1);
  want << 2, 6;
  CHECK(fixed_length_sample(x, 2) == want);

  std::mt19937_64 rng(1);
  const Matrix y = oracle::random_matrix(6, 3, rng);
  CHECK(fixed_length_sample(y, 6) == y);

  Matrix one(1, 2);
  one << 4, -1;
  const Matrix rep = fixed_length_sample(one, 4);
  CHECK(rep.rows() == 4);
  for (int i = 0; i < 4; ++i) CHECK(rep.row(i) == one.row(0));
}

TEST_CASE("fixed_length_sample and the sampling matrix agree with window averaging") {
  std::mt19937_64 rng(2);
  for (int t = 1; t <= 12; ++t)
    for (int n = 1; n <= 10; ++n) {
      const Matrix x = oracle::random_matrix(t, 3, rng);
      const Matrix want = window_average(x, n);
      CHECK((fixed_length_sample(x, n) - want).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((sampling_matrix(t, n) * x - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("tokenize lowercases and strips punctuation") {
  CHECK(tokenize("Apply  Blush, then SMILE!") ==
        std::vector<std::string>{"apply", "blush", "then", "smile"});
  CHECK(tokenize("  ...  ").empty());
}

TEST_CASE("synthetic embedder is deterministic and strict") {
  const auto vocab = build_vocabulary({"apply blush", "blend concealer"});
  CHECK(vocab.size() == 4);
  const TokenEmbedder a = TokenEmbedder::synthetic(vocab);
  const TokenEmbedder b = TokenEmbedder::synthetic({"blend", "concealer", "blush", "apply"});
  const Matrix ea = a.embed("Apply blush");
  CHECK(ea.rows() == 3);
  CHECK(ea.cols() == EncoderConfig::kTokenDim);
  CHECK(ea == b.embed("apply BLUSH"));
  CHECK(ea.row(1) != ea.row(2));
  CHECK_THROWS_AS(a.embed(""), EncoderError);
  CHECK_THROWS_AS(a.embed("apply lipstick"), EncoderError);
}

TEST_CASE("token table backend") {
  const auto dir = oracle::temp_dir("token_table");
  {
    std::ofstream out(dir / "table.txt");
    for (const char* w : {"[CLS]", "apply", "blush"}) {
      out << w;
      for (int i = 0; i < EncoderConfig::kTokenDim; ++i) out << ' ' << (i % 7) * 0.1;
      out << '\n';
    }
  }
  const TokenEmbedder e = TokenEmbedder::from_table(dir / "table.txt");
  CHECK(e.backend() == EmbeddingBackend::kPretrainedFiles);
  CHECK(e.embed("apply blush").rows() == 3);
  CHECK_THROWS_AS(e.embed("apply mascara"), EncoderError);
  {
    std::ofstream out(dir / "no_cls.txt");
    out << "apply";
    for (int i = 0; i < EncoderConfig::kTokenDim; ++i) out << " 0";
    out << '\n';
  }
  CHECK_THROWS_AS(TokenEmbedder::from_table(dir / "no_cls.txt"), EncoderError);
  std::ofstream(dir / "short.txt") << "[CLS] 1 2 3\n";
  CHECK_THROWS_AS(TokenEmbedder::from_table(dir / "short.txt"), EncoderError);
}

TEST_CASE("encode_query shape, determinism and the layer-free path") {
  const TokenEmbedder emb = TokenEmbedder::synthetic({"apply", "blush", "on", "cheeks"});
  for (int layers : {0, 2}) {
    const EncoderConfig cfg = tiny(layers);
    std::mt19937_64 r1(9), r2(9);
    const auto p1 = SequenceEncoderParams::init(EncoderConfig::kTokenDim, cfg, r1);
    const auto p2 = SequenceEncoderParams::init(EncoderConfig::kTokenDim, cfg, r2);
    const Matrix q1 = encode_query("apply blush on cheeks", emb, p1, cfg).value();
    const Matrix q2 = encode_query("apply blush on cheeks", emb, p2, cfg).value();
    CHECK(q1.rows() == 1);
    CHECK(q1.cols() == cfg.hidden);
    CHECK(q1 == q2);
    if (layers == 0) {
      const Matrix tokens = emb.embed("apply blush on cheeks");
      Matrix projected = tokens * p1.proj_w.value();
      projected.rowwise() += p1.proj_b.value().row(0);
      const Matrix want = projected.colwise().mean();
      CHECK((q1 - want).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("encode_video shapes and the identity path") {
  std::mt19937_64 rng(4);
  for (int layers : {0, 1, 2}) {
    const EncoderConfig cfg = tiny(layers);
    const auto p = SequenceEncoderParams::init(cfg.video_dim, cfg, rng);
    for (int t : {1, 3, 4, 9}) {
      const Matrix raw = oracle::random_matrix(t, cfg.video_dim, rng);
      const Matrix out = encode_video(raw, p, cfg).value();
      CHECK(out.rows() == cfg.sampled_clips);
      CHECK(out.cols() == cfg.hidden);
    }
    CHECK_THROWS_AS(encode_video(Matrix::Zero(3, cfg.video_dim + 1), p, cfg), EncoderError);
  }

  EncoderConfig id = tiny(0);
  id.video_dim = id.hidden;
  auto p = SequenceEncoderParams::init(id.video_dim, id, rng);
  p.proj_w.mutable_value() = Matrix::Identity(id.hidden, id.hidden);
  p.proj_b.mutable_value().setZero();
  const Matrix raw = oracle::random_matrix(7, id.hidden, rng);
  CHECK((encode_video(raw, p, id).value() - fixed_length_sample(raw, id.sampled_clips))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("encode_video projection gradients match finite differences") {
  std::mt19937_64 rng(8);
  const EncoderConfig cfg = tiny(1);
  const auto p = SequenceEncoderParams::init(cfg.video_dim, cfg, rng);
  const Matrix raw = oracle::random_matrix(3, cfg.video_dim, rng);
  const Matrix probe = oracle::random_matrix(cfg.sampled_clips, cfg.hidden, rng);
  auto objective = [&] {
    return ad::sum(ad::mul(encode_video(raw, p, cfg), ad::constant(probe)));
  };
  ad::backward(objective());
  for (ad::Var param : {p.proj_w, p.proj_b}) {
    const Matrix analytic = param.grad();
    auto f = [&] {
      ad::NoGradGuard g;
      return objective().scalar();
    };
    const auto r = oracle::compare_gradient(param.mutable_value(), analytic, f);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.max_abs_grad > 0.0);
  }
}

TEST_CASE("encoding is independent of call order") {
  std::mt19937_64 rng(12);
  const EncoderConfig cfg = tiny(2);
  const auto p = SequenceEncoderParams::init(cfg.video_dim, cfg, rng);
  std::vector<Matrix> inputs;
  for (int i = 0; i < 5; ++i) inputs.push_back(oracle::random_matrix(2 + i, cfg.video_dim, rng));
  std::vector<Matrix> forward, backward;
  for (const auto& x : inputs) forward.push_back(encode_video(x, p, cfg).value());
  for (auto it = inputs.rbegin(); it != inputs.rend(); ++it)
    backward.push_back(encode_video(*it, p, cfg).value());
  for (std::size_t i = 0; i < inputs.size(); ++i) CHECK(forward[i] == backward[inputs.size() - 1 - i]);
}

TEST_CASE("outputs stay finite and layer-normalized rows stay bounded across seeds") {
  const EncoderConfig cfg = tiny(2);
  std::uniform_int_distribution<int> len(1, 8);
  int nonfinite = 0, out_of_range = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    const auto p = SequenceEncoderParams::init(cfg.video_dim, cfg, rng);
    const Matrix raw = oracle::random_matrix(len(rng), cfg.video_dim, rng, 3.0);
    const Matrix seq = encode_sequence(raw, p, cfg).value();
    const Matrix out = encode_video(raw, p, cfg).value();
    if (!seq.allFinite() || !out.allFinite()) ++nonfinite;
    for (int r = 0; r < seq.rows(); ++r) {
      const double norm = seq.row(r).norm();
      if (norm < 0.1 || norm > 100.0) ++out_of_range;
    }
  }
  CHECK(nonfinite == 0);
  CHECK(out_of_range == 0);
}

TEST_CASE("encoder input validation") {
  EncoderConfig bad = tiny(1);
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny(1);
  bad.sampled_clips = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny(-1);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  EncoderConfig cfg = tiny(1);
  cfg.max_positions = 4;
  std::mt19937_64 rng(1);
  const auto p = SequenceEncoderParams::init(cfg.video_dim, cfg, rng);
  CHECK_NOTHROW(encode_video(Matrix::Ones(4, cfg.video_dim), p, cfg));
  CHECK_THROWS_AS(encode_video(Matrix::Ones(5, cfg.video_dim), p, cfg), EncoderError);
  Matrix nan = Matrix::Ones(2, cfg.video_dim);
  nan(1, 1) = std::nan("");
  CHECK_THROWS_AS(encode_video(nan, p, cfg), EncoderError);
}

TEST_CASE("dropout is inactive without a source and rescales kept units") {
  std::mt19937_64 rng(3);
  DropoutSource d{0.5, &rng};
  const ad::Var x = ad::constant(Matrix::Ones(20, 20));
  const Matrix y = d.apply(x).value();
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK((y.data()[i] == 0.0 || y.data()[i] == 2.0));
  CHECK(y.sum() > 0.0);
  DropoutSource off{0.0, &rng};
  CHECK(off.apply(x).value() == x.value());
}
