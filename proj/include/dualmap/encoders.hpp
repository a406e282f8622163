#pragma once

// Video and query encoders: linear projection to the hidden size, optional
// pre-norm transformer layers with learned positions, then pooling (query)
// or fixed-length sampling (video).

#include "dualmap/autograd.hpp"
#include "dualmap/parameters.hpp"

#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualmap {

enum class EmbeddingBackend { kSynthetic, kPretrainedFiles };

struct EncoderConfig {
  int layers = 2;          // transformer layers per modality
  int hidden = 128;        // d
  int video_dim = 64;      // d_v of raw clip features
  int sampled_clips = 32;  // N
  int heads = 4;
  int ffn_hidden = 256;
  double dropout = 0.0;
  int max_positions = 512;
  EmbeddingBackend backend = EmbeddingBackend::kSynthetic;

  static constexpr int kTokenDim = 768;

  void validate() const;
};

class EncoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercases, strips punctuation and splits on whitespace.
std::vector<std::string> tokenize(const std::string& sentence);

inline constexpr const char* kClassToken = "[CLS]";

/// Frozen word -> 768-d embedding lookup. The synthetic backend draws a
/// Gaussian vector per vocabulary word from a seed derived from the word's
/// FNV-1a hash; the file backend reads a whitespace-separated text table
/// ("word v1 ... v768" per line), which must contain the class token.
class TokenEmbedder {
 public:
  TokenEmbedder() = default;
  static TokenEmbedder synthetic(const std::vector<std::string>& vocabulary);
  static TokenEmbedder from_table(const std::filesystem::path& path);

  /// (L+1) x 768 with the class token first. Throws EncoderError for an
  /// empty sentence or a word outside the vocabulary.
  ad::Matrix embed(const std::string& sentence) const;

  EmbeddingBackend backend() const { return backend_; }
  std::vector<std::string> vocabulary() const;
  const std::filesystem::path& table_path() const { return table_path_; }

 private:
  EmbeddingBackend backend_ = EmbeddingBackend::kSynthetic;
  std::map<std::string, Eigen::RowVectorXd> table_;
  std::filesystem::path table_path_;
};

/// Vocabulary of every word appearing in the sentences.
std::vector<std::string> build_vocabulary(const std::vector<std::string>& sentences);

/// Row i averages input rows [floor(i*T/N), floor((i+1)*T/N)); an empty
/// window repeats row floor(i*T/N).
ad::Matrix fixed_length_sample(const ad::Matrix& seq, int n);
/// The N x T averaging operator with fixed_length_sample(X) = S * X.
ad::Matrix sampling_matrix(int t, int n);

struct TransformerLayerParams {
  ad::Var norm1_gain, norm1_bias;
  ad::Var w_query, b_query, w_key, b_key, w_value, b_value, w_out, b_out;
  ad::Var norm2_gain, norm2_bias;
  ad::Var w_ffn1, b_ffn1, w_ffn2, b_ffn2;

  static TransformerLayerParams init(int hidden, int ffn_hidden, std::mt19937_64& rng);
  void register_into(ParameterStore& store, const std::string& group,
                     const std::string& prefix) const;
};

/// Projection + positions + layers + final norm for one modality.
struct SequenceEncoderParams {
  ad::Var proj_w, proj_b;
  ad::Var positions;  // max_positions x d
  std::vector<TransformerLayerParams> layers;
  ad::Var final_gain, final_bias;

  static SequenceEncoderParams init(int input_dim, const EncoderConfig& cfg, std::mt19937_64& rng);
  void register_into(ParameterStore& store, const std::string& group) const;
};

/// Source of dropout keep-masks during training; absent at inference.
struct DropoutSource {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
  ad::Var apply(const ad::Var& x) const;
};

ad::Var transformer_layer(const ad::Var& x, const TransformerLayerParams& p, int heads,
                          const DropoutSource* dropout = nullptr);

/// Runs projection and (when layers > 0) positions, layers and final norm.
ad::Var encode_sequence(const ad::Matrix& inputs, const SequenceEncoderParams& p,
                        const EncoderConfig& cfg, const DropoutSource* dropout = nullptr);

/// 1 x d sentence-level feature: mean over all enhanced tokens, [CLS] included.
ad::Var encode_query(const std::string& sentence, const TokenEmbedder& embedder,
                     const SequenceEncoderParams& p, const EncoderConfig& cfg,
                     const DropoutSource* dropout = nullptr);

/// N x d enhanced clip features from a T x d_v raw sequence.
ad::Var encode_video(const ad::Matrix& raw, const SequenceEncoderParams& p,
                     const EncoderConfig& cfg, const DropoutSource* dropout = nullptr);

}  // namespace dualmap
