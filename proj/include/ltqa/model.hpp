#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ltqa/dataset.hpp"
#include "ltqa/tokenizer.hpp"

namespace ltqa {

enum class Pooling { first_token, mean };
enum class Head { mc, sc };

std::string_view to_string(Pooling pooling);
std::string_view to_string(Head head);
Pooling parse_pooling(std::string_view text);
Head parse_head(std::string_view text);

// Number of classes of the flat sequence-classification head.
inline constexpr int kScClasses = 4;

struct EncoderConfig {
  int layers = 2;
  int hidden_dim = 64;
  int heads = 4;
  int ffn_dim = 128;
  int max_positions = 128;
  int vocab_size = 1024;
  Pooling pooling = Pooling::first_token;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& doc);
  bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// Biases and layer-norm vectors are stored as 1 x n matrices so that every
// parameter is the same tensor type.
template <typename T>
struct LayerParams {
  Matrix<T> ln1_scale, ln1_offset;
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<T> ln2_scale, ln2_offset;
  Matrix<T> w1, b1, w2, b2;
};

template <typename T>
struct Parameters {
  Matrix<T> token_embedding;     // vocab x hidden
  Matrix<T> position_embedding;  // max_positions x hidden
  std::vector<LayerParams<T>> layers;
  Matrix<T> final_scale, final_offset;
  Matrix<T> mc_weight, mc_bias;  // hidden x 1, 1 x 1
  Matrix<T> sc_weight, sc_bias;  // hidden x 4, 1 x 4

  // Every tensor in a fixed order, paired with its name.
  std::vector<std::pair<std::string, Matrix<T>*>> named_tensors();
  std::vector<std::pair<std::string, const Matrix<T>*>> named_tensors() const;

  std::size_t num_values() const;
  bool all_finite() const;
  bool operator==(const Parameters& other) const;

  // Same shapes, all zeros.
  static Parameters zeros(const EncoderConfig& config);

  template <typename U>
  Parameters<U> cast() const;
};

template <typename T>
template <typename U>
Parameters<U> Parameters<T>::cast() const {
  Parameters<U> out;
  out.layers.resize(layers.size());
  auto dst = out.named_tensors();
  auto src = named_tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  return out;
}

template <typename T>
Parameters<T> init_params(const EncoderConfig& config, std::uint64_t seed);

// Intermediate values of one encoder pass, kept for the backward pass.
template <typename T>
struct LayerTrace {
  Matrix<T> input;
  Matrix<T> ln1_hat, ln1_out;
  std::vector<T> ln1_rstd;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> attention;  // one L x L matrix per head
  Matrix<T> context;
  Matrix<T> mid;
  Matrix<T> ln2_hat, ln2_out;
  std::vector<T> ln2_rstd;
  Matrix<T> pre_activation, activation;
};

template <typename T>
struct EncodeTrace {
  std::vector<TokenId> ids;
  std::vector<bool> pad;
  std::vector<LayerTrace<T>> layers;
  Matrix<T> final_input, final_hat, final_out;
  std::vector<T> final_rstd;
  RowVector<T> pooled;
};

// Full forward pass keeping intermediates. `pad_mask` is empty or has one
// entry per token; padded keys receive no attention and are excluded from
// mean pooling. The first token must not be padding.
template <typename T>
EncodeTrace<T> trace_encode(const Parameters<T>& params, const EncoderConfig& config, const TokenSeq& tokens,
                            const std::vector<bool>& pad_mask = {});

template <typename T>
RowVector<T> forward_encode(const Parameters<T>& params, const EncoderConfig& config, const TokenSeq& tokens,
                            const std::vector<bool>& pad_mask = {});

// Accumulates into `grads` the gradient of <d_pooled, pooled>.
template <typename T>
void backprop_encode(const Parameters<T>& params, const EncoderConfig& config, const EncodeTrace<T>& trace,
                     const RowVector<T>& d_pooled, Parameters<T>& grads);

// One shared scalar scorer per (question, choice) sequence.
template <typename T>
std::vector<T> mc_logits(const Parameters<T>& params, const EncoderConfig& config, std::span<const TokenSeq> choices);

// One packed sequence, positional 4-way classifier.
template <typename T>
std::vector<T> sc_logits(const Parameters<T>& params, const EncoderConfig& config, const TokenSeq& packed);

// -log softmax(logits)[gold] with max subtraction.
template <typename T>
T cross_entropy(std::span<const T> logits, int gold);

// d cross_entropy / d logits = softmax(logits) - onehot(gold).
template <typename T>
std::vector<T> cross_entropy_grad(std::span<const T> logits, int gold);

// An instance already tokenized for a specific head: K pair sequences for
// mc, one packed sequence for sc.
struct EncodedInstance {
  std::string id;
  std::vector<TokenSeq> sequences;
  int gold = 0;
  int num_choices = 0;
};

EncodedInstance encode_instance(const MergeTable& table, const QAInstance& instance, Head head,
                                std::size_t max_len, std::string_view instruction_prefix = {});

template <typename T>
std::vector<T> logits(const Parameters<T>& params, const EncoderConfig& config, const EncodedInstance& instance,
                      Head head);

// Argmax with lowest-index tie-break.
template <typename T>
int predict(const Parameters<T>& params, const EncoderConfig& config, const EncodedInstance& instance, Head head);

template <typename T>
struct GradientReport {
  Parameters<T> grads;
  T loss{};
};

// Mean cross-entropy over the batch and its exact gradient.
template <typename T>
GradientReport<T> backward(const Parameters<T>& params, const EncoderConfig& config,
                           std::span<const EncodedInstance> batch, Head head);

template <typename T>
T batch_loss(const Parameters<T>& params, const EncoderConfig& config, std::span<const EncodedInstance> batch,
             Head head);

// Checkpoint: "LTQACKPT", u32 version, u32 length + JSON header (config and
// free-form metadata), u32 tensor count, then per tensor u16 name length,
// name, u32 rows, u32 cols and rows*cols little-endian float32 values in
// row-major order.
struct Checkpoint {
  EncoderConfig config;
  Parameters<float> params;
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

extern template struct Parameters<float>;
extern template struct Parameters<double>;
extern template struct Parameters<long double>;

}  // namespace ltqa
