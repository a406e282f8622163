#include "dualmap/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dualmap {

void EncoderConfig::validate() const {
  if (layers < 0) throw std::invalid_argument("encoder layers must be >= 0");
  if (hidden < 1) throw std::invalid_argument("hidden size must be >= 1");
  if (video_dim < 1) throw std::invalid_argument("video feature dim must be >= 1");
  if (sampled_clips < 2) throw std::invalid_argument("sampled clip count must be >= 2");
  if (heads < 1 || hidden % heads != 0)
    throw std::invalid_argument("hidden size must be divisible by the head count");
  if (ffn_hidden < 1) throw std::invalid_argument("ffn hidden size must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
  if (max_positions < 1) throw std::invalid_argument("max positions must be >= 1");
}

std::vector<std::string> tokenize(const std::string& sentence) {
  std::string cleaned;
  cleaned.reserve(sentence.size());
  for (unsigned char c : sentence)
    cleaned.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : ' ');
  std::istringstream in(cleaned);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Eigen::RowVectorXd hashed_gaussian(const std::string& word) {
  std::mt19937_64 rng(fnv1a(word));
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::RowVectorXd v(EncoderConfig::kTokenDim);
  for (int i = 0; i < v.size(); ++i) v(i) = dist(rng);
  return v;
}

}  // namespace

std::vector<std::string> build_vocabulary(const std::vector<std::string>& sentences) {
  std::set<std::string> words;
  for (const auto& s : sentences)
    for (auto& w : tokenize(s)) words.insert(std::move(w));
  return {words.begin(), words.end()};
}

TokenEmbedder TokenEmbedder::synthetic(const std::vector<std::string>& vocabulary) {
  TokenEmbedder e;
  e.backend_ = EmbeddingBackend::kSynthetic;
  e.table_[kClassToken] = hashed_gaussian(kClassToken);
  for (const auto& w : vocabulary) e.table_[w] = hashed_gaussian(w);
  return e;
}

TokenEmbedder TokenEmbedder::from_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EncoderError("cannot open token table " + path.string());
  TokenEmbedder e;
  e.backend_ = EmbeddingBackend::kPretrainedFiles;
  e.table_path_ = path;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream row(line);
    std::string word;
    if (!(row >> word)) continue;
    Eigen::RowVectorXd v(EncoderConfig::kTokenDim);
    for (int i = 0; i < v.size(); ++i)
      if (!(row >> v(i)))
        throw EncoderError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                           std::to_string(EncoderConfig::kTokenDim) + " values for '" + word + "'");
    e.table_[word] = std::move(v);
  }
  if (!e.table_.count(kClassToken))
    throw EncoderError(path.string() + ": token table lacks the " + std::string(kClassToken) +
                       " entry");
  return e;
}

ad::Matrix TokenEmbedder::embed(const std::string& sentence) const {
  const auto words = tokenize(sentence);
  if (words.empty()) throw EncoderError("cannot encode an empty sentence");
  ad::Matrix out(static_cast<Eigen::Index>(words.size() + 1), EncoderConfig::kTokenDim);
  auto lookup = [&](const std::string& w) -> const Eigen::RowVectorXd& {
    auto it = table_.find(w);
    if (it == table_.end()) throw EncoderError("word '" + w + "' is not in the vocabulary");
    return it->second;
  };
  out.row(0) = lookup(kClassToken);
  for (std::size_t i = 0; i < words.size(); ++i)
    out.row(static_cast<Eigen::Index>(i + 1)) = lookup(words[i]);
  return out;
}

std::vector<std::string> TokenEmbedder::vocabulary() const {
  std::vector<std::string> v;
  for (const auto& [w, _] : table_)
    if (w != kClassToken) v.push_back(w);
  return v;
}

ad::Matrix sampling_matrix(int t, int n) {
  if (t < 1 || n < 1) throw std::invalid_argument("sampling_matrix: sizes must be >= 1");
  ad::Matrix s = ad::Matrix::Zero(n, t);
  for (int i = 0; i < n; ++i) {
    const long lo = static_cast<long>(i) * t / n;
    const long hi = static_cast<long>(i + 1) * t / n;
    if (hi <= lo) {
      s(i, std::min<long>(lo, t - 1)) = 1.0;
    } else {
      for (long r = lo; r < hi; ++r) s(i, r) = 1.0 / static_cast<double>(hi - lo);
    }
  }
  return s;
}

ad::Matrix fixed_length_sample(const ad::Matrix& seq, int n) {
  if (seq.rows() < 1) throw std::invalid_argument("fixed_length_sample: empty sequence");
  return sampling_matrix(static_cast<int>(seq.rows()), n) * seq;
}

TransformerLayerParams TransformerLayerParams::init(int hidden, int ffn_hidden,
                                                    std::mt19937_64& rng) {
  TransformerLayerParams p;
  p.norm1_gain = ones_parameter(1, hidden);
  p.norm1_bias = zeros_parameter(1, hidden);
  p.w_query = xavier_parameter(hidden, hidden, rng);
  p.b_query = zeros_parameter(1, hidden);
  p.w_key = xavier_parameter(hidden, hidden, rng);
  p.b_key = zeros_parameter(1, hidden);
  p.w_value = xavier_parameter(hidden, hidden, rng);
  p.b_value = zeros_parameter(1, hidden);
  p.w_out = xavier_parameter(hidden, hidden, rng);
  p.b_out = zeros_parameter(1, hidden);
  p.norm2_gain = ones_parameter(1, hidden);
  p.norm2_bias = zeros_parameter(1, hidden);
  p.w_ffn1 = xavier_parameter(hidden, ffn_hidden, rng);
  p.b_ffn1 = zeros_parameter(1, ffn_hidden);
  p.w_ffn2 = xavier_parameter(ffn_hidden, hidden, rng);
  p.b_ffn2 = zeros_parameter(1, hidden);
  return p;
}

void TransformerLayerParams::register_into(ParameterStore& store, const std::string& group,
                                           const std::string& prefix) const {
  store.add(group, prefix + ".norm1_gain", norm1_gain);
  store.add(group, prefix + ".norm1_bias", norm1_bias);
  store.add(group, prefix + ".w_query", w_query);
  store.add(group, prefix + ".b_query", b_query);
  store.add(group, prefix + ".w_key", w_key);
  store.add(group, prefix + ".b_key", b_key);
  store.add(group, prefix + ".w_value", w_value);
  store.add(group, prefix + ".b_value", b_value);
  store.add(group, prefix + ".w_out", w_out);
  store.add(group, prefix + ".b_out", b_out);
  store.add(group, prefix + ".norm2_gain", norm2_gain);
  store.add(group, prefix + ".norm2_bias", norm2_bias);
  store.add(group, prefix + ".w_ffn1", w_ffn1);
  store.add(group, prefix + ".b_ffn1", b_ffn1);
  store.add(group, prefix + ".w_ffn2", w_ffn2);
  store.add(group, prefix + ".b_ffn2", b_ffn2);
}

SequenceEncoderParams SequenceEncoderParams::init(int input_dim, const EncoderConfig& cfg,
                                                  std::mt19937_64& rng) {
  cfg.validate();
  SequenceEncoderParams p;
  p.proj_w = xavier_parameter(input_dim, cfg.hidden, rng);
  p.proj_b = zeros_parameter(1, cfg.hidden);
  std::normal_distribution<double> pos(0.0, 0.02);
  ad::Matrix positions(cfg.max_positions, cfg.hidden);
  for (Eigen::Index i = 0; i < positions.size(); ++i) positions.data()[i] = pos(rng);
  p.positions = ad::parameter(std::move(positions));
  for (int l = 0; l < cfg.layers; ++l)
    p.layers.push_back(TransformerLayerParams::init(cfg.hidden, cfg.ffn_hidden, rng));
  p.final_gain = ones_parameter(1, cfg.hidden);
  p.final_bias = zeros_parameter(1, cfg.hidden);
  return p;
}

void SequenceEncoderParams::register_into(ParameterStore& store, const std::string& group) const {
  store.add(group, group + ".proj_w", proj_w);
  store.add(group, group + ".proj_b", proj_b);
  if (layers.empty()) return;  // positions and final norm are unused without layers
  store.add(group, group + ".positions", positions);
  for (std::size_t l = 0; l < layers.size(); ++l)
    layers[l].register_into(store, group, group + ".layer" + std::to_string(l));
  store.add(group, group + ".final_gain", final_gain);
  store.add(group, group + ".final_bias", final_bias);
}

ad::Var DropoutSource::apply(const ad::Var& x) const {
  if (rate <= 0.0 || rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  ad::Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? 1.0 : 0.0;
  return ad::dropout(x, mask, rate);
}

ad::Var transformer_layer(const ad::Var& x, const TransformerLayerParams& p, int heads,
                          const DropoutSource* dropout) {
  using namespace ad;
  const Index d = x.cols();
  const Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Var h = layer_norm_rows(x, p.norm1_gain, p.norm1_bias);
  Var q = add_row(matmul(h, p.w_query), p.b_query);
  Var k = add_row(matmul(h, p.w_key), p.b_key);
  Var v = add_row(matmul(h, p.w_value), p.b_value);
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    Var qh = slice_cols(q, hd * dh, dh);
    Var kh = slice_cols(k, hd * dh, dh);
    Var vh = slice_cols(v, hd * dh, dh);
    Var att = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    outs.push_back(matmul(att, vh));
  }
  Var attended = add_row(matmul(concat_cols(outs), p.w_out), p.b_out);
  if (dropout) attended = dropout->apply(attended);
  Var x1 = add(x, attended);

  Var h2 = layer_norm_rows(x1, p.norm2_gain, p.norm2_bias);
  Var ffn = add_row(matmul(relu(add_row(matmul(h2, p.w_ffn1), p.b_ffn1)), p.w_ffn2), p.b_ffn2);
  if (dropout) ffn = dropout->apply(ffn);
  return add(x1, ffn);
}

ad::Var encode_sequence(const ad::Matrix& inputs, const SequenceEncoderParams& p,
                        const EncoderConfig& cfg, const DropoutSource* dropout) {
  using namespace ad;
  if (inputs.rows() < 1) throw EncoderError("cannot encode an empty sequence");
  if (inputs.cols() != p.proj_w.rows())
    throw EncoderError("input feature dim " + std::to_string(inputs.cols()) +
                       " does not match encoder input dim " + std::to_string(p.proj_w.rows()));
  if (!inputs.allFinite()) throw EncoderError("input features contain NaN or Inf");
  Var x = add_row(matmul(constant(inputs), p.proj_w), p.proj_b);
  if (p.layers.empty()) return x;
  if (inputs.rows() > cfg.max_positions)
    throw EncoderError("sequence of length " + std::to_string(inputs.rows()) +
                       " exceeds max_positions " + std::to_string(cfg.max_positions));
  x = add(x, slice_rows(p.positions, 0, inputs.rows()));
  for (const auto& layer : p.layers) x = transformer_layer(x, layer, cfg.heads, dropout);
  return layer_norm_rows(x, p.final_gain, p.final_bias);
}

ad::Var encode_query(const std::string& sentence, const TokenEmbedder& embedder,
                     const SequenceEncoderParams& p, const EncoderConfig& cfg,
                     const DropoutSource* dropout) {
  return ad::mean_rows(encode_sequence(embedder.embed(sentence), p, cfg, dropout));
}

ad::Var encode_video(const ad::Matrix& raw, const SequenceEncoderParams& p,
                     const EncoderConfig& cfg, const DropoutSource* dropout) {
  if (raw.cols() != cfg.video_dim)
    throw EncoderError("video features have dim " + std::to_string(raw.cols()) +
                       " but the encoder expects " + std::to_string(cfg.video_dim));
  ad::Var enhanced = encode_sequence(raw, p, cfg, dropout);
  return ad::matmul(ad::constant(sampling_matrix(static_cast<int>(raw.rows()), cfg.sampled_clips)),
                    enhanced);
}

}  // namespace dualmap
