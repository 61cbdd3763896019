#include <algorithm>
#include <cmath>
#include <limits>

#include "ltqa/model.hpp"

namespace ltqa {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& scale, const Matrix<T>& offset, Matrix<T>& hat,
                Matrix<T>& out, std::vector<T>& rstd) {
  using std::sqrt;
  const auto rows = x.rows();
  const auto d = x.cols();
  hat.resize(rows, d);
  out.resize(rows, d);
  rstd.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const T mu = x.row(r).mean();
    auto centered = (x.row(r).array() - mu).eval();
    const T var = centered.square().mean();
    const T rs = T(1) / sqrt(var + T(kLayerNormEps));
    rstd[static_cast<std::size_t>(r)] = rs;
    hat.row(r) = centered * rs;
    out.row(r) = hat.row(r).cwiseProduct(scale.row(0)) + offset.row(0);
  }
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& d_out, const Matrix<T>& hat, const std::vector<T>& rstd,
                              const Matrix<T>& scale, Matrix<T>& d_scale, Matrix<T>& d_offset) {
  d_scale += d_out.cwiseProduct(hat).colwise().sum();
  d_offset += d_out.colwise().sum();
  Matrix<T> dx(d_out.rows(), d_out.cols());
  for (Eigen::Index r = 0; r < d_out.rows(); ++r) {
    auto d_hat = d_out.row(r).cwiseProduct(scale.row(0)).eval();
    const T m1 = d_hat.mean();
    const T m2 = d_hat.cwiseProduct(hat.row(r)).mean();
    dx.row(r) = rstd[static_cast<std::size_t>(r)] * (d_hat.array() - m1 - hat.row(r).array() * m2).matrix();
  }
  return dx;
}

// tanh-approximated GELU; smooth everywhere, which keeps finite-difference
// checks meaningful.
template <typename T>
T gelu(T x) {
  using std::tanh;
  const T c = T(0.7978845608028654) ;  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  using std::tanh;
  const T c = T(0.7978845608028654);
  const T t = tanh(c * (x + T(0.044715) * x * x * x));
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * T(0.044715) * x * x);
}

template <typename T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> out(x.rows(), w.cols());
  out.noalias() = x * w;
  out.rowwise() += b.row(0);
  return out;
}

template <typename T>
Matrix<T> normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<T>(rng.normal() * stddev);
  }
  return m;
}

void check_tokens(const EncoderConfig& config, const TokenSeq& tokens, const std::vector<bool>& pad_mask) {
  if (tokens.ids.empty()) throw ValidationError("cannot encode an empty token sequence");
  if (tokens.ids.size() > static_cast<std::size_t>(config.max_positions)) {
    throw ValidationError("sequence of length " + std::to_string(tokens.ids.size()) + " exceeds max_positions " +
                          std::to_string(config.max_positions));
  }
  for (TokenId id : tokens.ids) {
    if (id >= static_cast<TokenId>(config.vocab_size)) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(config.vocab_size));
    }
  }
  if (!pad_mask.empty()) {
    if (pad_mask.size() != tokens.ids.size()) throw ValidationError("pad mask length differs from sequence length");
    if (pad_mask[0]) throw ValidationError("the first position must not be padding");
  }
}

}  // namespace

std::string_view to_string(Pooling pooling) { return pooling == Pooling::mean ? "mean" : "first_token"; }
std::string_view to_string(Head head) { return head == Head::sc ? "sc" : "mc"; }

Pooling parse_pooling(std::string_view text) {
  if (text == "first_token") return Pooling::first_token;
  if (text == "mean") return Pooling::mean;
  throw ValidationError("unknown pooling '" + std::string(text) + "'");
}

Head parse_head(std::string_view text) {
  if (text == "mc") return Head::mc;
  if (text == "sc") return Head::sc;
  throw ValidationError("unknown head '" + std::string(text) + "' (expected mc or sc)");
}

void EncoderConfig::validate() const {
  if (layers < 1 || hidden_dim < 1 || heads < 1 || ffn_dim < 1 || max_positions < 1 || vocab_size < 1) {
    throw ValidationError("encoder dimensions must all be positive");
  }
  if (hidden_dim % heads != 0) {
    throw ValidationError("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by heads " +
                          std::to_string(heads));
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return nlohmann::json{{"layers", layers},       {"hidden_dim", hidden_dim},       {"heads", heads},
                        {"ffn_dim", ffn_dim},     {"max_positions", max_positions}, {"vocab_size", vocab_size},
                        {"pooling", to_string(pooling)}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& doc) {
  EncoderConfig c;
  try {
    c.layers = doc.at("layers").get<int>();
    c.hidden_dim = doc.at("hidden_dim").get<int>();
    c.heads = doc.at("heads").get<int>();
    c.ffn_dim = doc.at("ffn_dim").get<int>();
    c.max_positions = doc.at("max_positions").get<int>();
    c.vocab_size = doc.at("vocab_size").get<int>();
    c.pooling = parse_pooling(doc.at("pooling").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad encoder config record: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> Parameters<T>::named_tensors() {
  std::vector<std::pair<std::string, Matrix<T>*>> out{
      {"token_embedding", &token_embedding},
      {"position_embedding", &position_embedding},
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& p = layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (auto [name, tensor] : std::initializer_list<std::pair<const char*, Matrix<T>*>>{
             {"ln1_scale", &p.ln1_scale}, {"ln1_offset", &p.ln1_offset}, {"wq", &p.wq}, {"bq", &p.bq},
             {"wk", &p.wk},               {"bk", &p.bk},                 {"wv", &p.wv}, {"bv", &p.bv},
             {"wo", &p.wo},               {"bo", &p.bo},                 {"ln2_scale", &p.ln2_scale},
             {"ln2_offset", &p.ln2_offset}, {"w1", &p.w1},              {"b1", &p.b1}, {"w2", &p.w2},
             {"b2", &p.b2}}) {
      out.emplace_back(prefix + name, tensor);
    }
  }
  out.emplace_back("final_scale", &final_scale);
  out.emplace_back("final_offset", &final_offset);
  out.emplace_back("mc_weight", &mc_weight);
  out.emplace_back("mc_bias", &mc_bias);
  out.emplace_back("sc_weight", &sc_weight);
  out.emplace_back("sc_bias", &sc_bias);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Matrix<T>*>> Parameters<T>::named_tensors() const {
  auto mutable_list = const_cast<Parameters*>(this)->named_tensors();
  std::vector<std::pair<std::string, const Matrix<T>*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, tensor] : mutable_list) out.emplace_back(std::move(name), tensor);
  return out;
}

template <typename T>
std::size_t Parameters<T>::num_values() const {
  std::size_t n = 0;
  for (const auto& [name, tensor] : named_tensors()) n += static_cast<std::size_t>(tensor->size());
  return n;
}

template <typename T>
bool Parameters<T>::all_finite() const {
  for (const auto& [name, tensor] : named_tensors()) {
    if (!tensor->allFinite()) return false;
  }
  return true;
}

template <typename T>
bool Parameters<T>::operator==(const Parameters& other) const {
  auto a = named_tensors();
  auto b = other.named_tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].second->rows() != b[i].second->rows() || a[i].second->cols() != b[i].second->cols()) return false;
    if (*a[i].second != *b[i].second) return false;
  }
  return true;
}

template <typename T>
Parameters<T> Parameters<T>::zeros(const EncoderConfig& config) {
  config.validate();
  const Eigen::Index d = config.hidden_dim;
  const Eigen::Index f = config.ffn_dim;
  Parameters p;
  p.token_embedding = Matrix<T>::Zero(config.vocab_size, d);
  p.position_embedding = Matrix<T>::Zero(config.max_positions, d);
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& layer : p.layers) {
    layer.ln1_scale = Matrix<T>::Zero(1, d);
    layer.ln1_offset = Matrix<T>::Zero(1, d);
    layer.wq = Matrix<T>::Zero(d, d);
    layer.bq = Matrix<T>::Zero(1, d);
    layer.wk = Matrix<T>::Zero(d, d);
    layer.bk = Matrix<T>::Zero(1, d);
    layer.wv = Matrix<T>::Zero(d, d);
    layer.bv = Matrix<T>::Zero(1, d);
    layer.wo = Matrix<T>::Zero(d, d);
    layer.bo = Matrix<T>::Zero(1, d);
    layer.ln2_scale = Matrix<T>::Zero(1, d);
    layer.ln2_offset = Matrix<T>::Zero(1, d);
    layer.w1 = Matrix<T>::Zero(d, f);
    layer.b1 = Matrix<T>::Zero(1, f);
    layer.w2 = Matrix<T>::Zero(f, d);
    layer.b2 = Matrix<T>::Zero(1, d);
  }
  p.final_scale = Matrix<T>::Zero(1, d);
  p.final_offset = Matrix<T>::Zero(1, d);
  p.mc_weight = Matrix<T>::Zero(d, 1);
  p.mc_bias = Matrix<T>::Zero(1, 1);
  p.sc_weight = Matrix<T>::Zero(d, kScClasses);
  p.sc_bias = Matrix<T>::Zero(1, kScClasses);
  return p;
}

template <typename T>
Parameters<T> init_params(const EncoderConfig& config, std::uint64_t seed) {
  auto p = Parameters<T>::zeros(config);
  Rng rng(seed);
  const double d = config.hidden_dim;
  const double f = config.ffn_dim;
  p.token_embedding = normal_matrix<T>(rng, config.vocab_size, config.hidden_dim, 1.0 / std::sqrt(d));
  p.position_embedding = normal_matrix<T>(rng, config.max_positions, config.hidden_dim, 1.0 / std::sqrt(d));
  for (auto& layer : p.layers) {
    layer.ln1_scale.setOnes();
    layer.ln2_scale.setOnes();
    for (auto* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w1}) {
      *w = normal_matrix<T>(rng, w->rows(), w->cols(), 1.0 / std::sqrt(d));
    }
    layer.w2 = normal_matrix<T>(rng, layer.w2.rows(), layer.w2.cols(), 1.0 / std::sqrt(f));
  }
  p.final_scale.setOnes();
  p.mc_weight = normal_matrix<T>(rng, p.mc_weight.rows(), 1, 1.0 / std::sqrt(d));
  p.sc_weight = normal_matrix<T>(rng, p.sc_weight.rows(), kScClasses, 1.0 / std::sqrt(d));
  return p;
}

template <typename T>
EncodeTrace<T> trace_encode(const Parameters<T>& params, const EncoderConfig& config, const TokenSeq& tokens,
                            const std::vector<bool>& pad_mask) {
  using std::exp;
  using std::sqrt;
  check_tokens(config, tokens, pad_mask);
  const auto len = static_cast<Eigen::Index>(tokens.ids.size());
  const Eigen::Index d = config.hidden_dim;
  const Eigen::Index dh = d / config.heads;
  const T scale = T(1) / sqrt(static_cast<T>(dh));

  EncodeTrace<T> tr;
  tr.ids = tokens.ids;
  tr.pad = pad_mask.empty() ? std::vector<bool>(tokens.ids.size(), false) : pad_mask;

  Matrix<T> x(len, d);
  for (Eigen::Index i = 0; i < len; ++i) {
    x.row(i) = params.token_embedding.row(tokens.ids[static_cast<std::size_t>(i)]) + params.position_embedding.row(i);
  }

  tr.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& p = params.layers[l];
    auto& lt = tr.layers[l];
    lt.input = x;
    layer_norm(x, p.ln1_scale, p.ln1_offset, lt.ln1_hat, lt.ln1_out, lt.ln1_rstd);
    lt.q = affine(lt.ln1_out, p.wq, p.bq);
    lt.k = affine(lt.ln1_out, p.wk, p.bk);
    lt.v = affine(lt.ln1_out, p.wv, p.bv);
    lt.context.resize(len, d);
    lt.attention.resize(static_cast<std::size_t>(config.heads));
    for (int h = 0; h < config.heads; ++h) {
      const Eigen::Index c0 = h * dh;
      Matrix<T> scores(len, len);
      scores.noalias() = lt.q.middleCols(c0, dh) * lt.k.middleCols(c0, dh).transpose();
      scores *= scale;
      auto& a = lt.attention[static_cast<std::size_t>(h)];
      a.resize(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        T row_max = -std::numeric_limits<T>::infinity();
        for (Eigen::Index j = 0; j < len; ++j) {
          if (!tr.pad[static_cast<std::size_t>(j)]) row_max = std::max(row_max, scores(i, j));
        }
        T total = 0;
        for (Eigen::Index j = 0; j < len; ++j) {
          a(i, j) = tr.pad[static_cast<std::size_t>(j)] ? T(0) : exp(scores(i, j) - row_max);
          total += a(i, j);
        }
        a.row(i) /= total;
      }
      lt.context.middleCols(c0, dh).noalias() = a * lt.v.middleCols(c0, dh);
    }
    lt.mid = x + affine(lt.context, p.wo, p.bo);

    layer_norm(lt.mid, p.ln2_scale, p.ln2_offset, lt.ln2_hat, lt.ln2_out, lt.ln2_rstd);
    lt.pre_activation = affine(lt.ln2_out, p.w1, p.b1);
    lt.activation = lt.pre_activation.unaryExpr([](T v) { return gelu(v); });
    x = lt.mid + affine(lt.activation, p.w2, p.b2);
  }

  tr.final_input = x;
  layer_norm(x, params.final_scale, params.final_offset, tr.final_hat, tr.final_out, tr.final_rstd);

  if (config.pooling == Pooling::first_token) {
    tr.pooled = tr.final_out.row(0);
  } else {
    tr.pooled = RowVector<T>::Zero(d);
    T count = 0;
    for (Eigen::Index i = 0; i < len; ++i) {
      if (tr.pad[static_cast<std::size_t>(i)]) continue;
      tr.pooled += tr.final_out.row(i);
      count += T(1);
    }
    tr.pooled /= count;
  }
  return tr;
}

template <typename T>
RowVector<T> forward_encode(const Parameters<T>& params, const EncoderConfig& config, const TokenSeq& tokens,
                            const std::vector<bool>& pad_mask) {
  return trace_encode(params, config, tokens, pad_mask).pooled;
}

template <typename T>
void backprop_encode(const Parameters<T>& params, const EncoderConfig& config, const EncodeTrace<T>& tr,
                     const RowVector<T>& d_pooled, Parameters<T>& grads) {
  using std::sqrt;
  const auto len = static_cast<Eigen::Index>(tr.ids.size());
  const Eigen::Index d = config.hidden_dim;
  const Eigen::Index dh = d / config.heads;
  const T scale = T(1) / sqrt(static_cast<T>(dh));

  Matrix<T> d_out = Matrix<T>::Zero(len, d);
  if (config.pooling == Pooling::first_token) {
    d_out.row(0) = d_pooled;
  } else {
    T count = 0;
    for (bool p : tr.pad) count += p ? T(0) : T(1);
    for (Eigen::Index i = 0; i < len; ++i) {
      if (!tr.pad[static_cast<std::size_t>(i)]) d_out.row(i) = d_pooled / count;
    }
  }

  Matrix<T> dx = layer_norm_backward(d_out, tr.final_hat, tr.final_rstd, params.final_scale, grads.final_scale,
                                     grads.final_offset);

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& p = params.layers[l];
    const auto& lt = tr.layers[l];
    auto& g = grads.layers[l];

    // Feed-forward block: x_out = mid + gelu(ln2(mid) w1 + b1) w2 + b2.
    g.w2.noalias() += lt.activation.transpose() * dx;
    g.b2 += dx.colwise().sum();
    Matrix<T> d_pre(len, p.w1.cols());
    d_pre.noalias() = dx * p.w2.transpose();
    for (Eigen::Index i = 0; i < d_pre.rows(); ++i) {
      for (Eigen::Index j = 0; j < d_pre.cols(); ++j) d_pre(i, j) *= gelu_grad(lt.pre_activation(i, j));
    }
    g.w1.noalias() += lt.ln2_out.transpose() * d_pre;
    g.b1 += d_pre.colwise().sum();
    Matrix<T> d_ln2(len, d);
    d_ln2.noalias() = d_pre * p.w1.transpose();
    Matrix<T> d_mid = dx + layer_norm_backward(d_ln2, lt.ln2_hat, lt.ln2_rstd, p.ln2_scale, g.ln2_scale, g.ln2_offset);

    // Attention block: mid = x_in + concat_h(softmax(q_h k_h^T * scale) v_h) wo + bo.
    g.wo.noalias() += lt.context.transpose() * d_mid;
    g.bo += d_mid.colwise().sum();
    Matrix<T> d_context(len, d);
    d_context.noalias() = d_mid * p.wo.transpose();

    Matrix<T> d_q = Matrix<T>::Zero(len, d);
    Matrix<T> d_k = Matrix<T>::Zero(len, d);
    Matrix<T> d_v = Matrix<T>::Zero(len, d);
    for (int h = 0; h < config.heads; ++h) {
      const Eigen::Index c0 = h * dh;
      const auto& a = lt.attention[static_cast<std::size_t>(h)];
      Matrix<T> d_a(len, len);
      d_a.noalias() = d_context.middleCols(c0, dh) * lt.v.middleCols(c0, dh).transpose();
      d_v.middleCols(c0, dh).noalias() += a.transpose() * d_context.middleCols(c0, dh);
      Matrix<T> d_s(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        const T inner = a.row(i).dot(d_a.row(i));
        d_s.row(i) = a.row(i).cwiseProduct((d_a.row(i).array() - inner).matrix());
      }
      d_s *= scale;
      d_q.middleCols(c0, dh).noalias() += d_s * lt.k.middleCols(c0, dh);
      d_k.middleCols(c0, dh).noalias() += d_s.transpose() * lt.q.middleCols(c0, dh);
    }
    g.wq.noalias() += lt.ln1_out.transpose() * d_q;
    g.bq += d_q.colwise().sum();
    g.wk.noalias() += lt.ln1_out.transpose() * d_k;
    g.bk += d_k.colwise().sum();
    g.wv.noalias() += lt.ln1_out.transpose() * d_v;
    g.bv += d_v.colwise().sum();
    Matrix<T> d_ln1(len, d);
    d_ln1.noalias() = d_q * p.wq.transpose();
    d_ln1.noalias() += d_k * p.wk.transpose();
    d_ln1.noalias() += d_v * p.wv.transpose();
    dx = d_mid + layer_norm_backward(d_ln1, lt.ln1_hat, lt.ln1_rstd, p.ln1_scale, g.ln1_scale, g.ln1_offset);
  }

  for (Eigen::Index i = 0; i < len; ++i) {
    grads.token_embedding.row(tr.ids[static_cast<std::size_t>(i)]) += dx.row(i);
    grads.position_embedding.row(i) += dx.row(i);
  }
}

template <typename T>
std::vector<T> mc_logits(const Parameters<T>& params, const EncoderConfig& config, std::span<const TokenSeq> choices) {
  if (choices.size() < 2) throw ValidationError("multiple-choice scoring needs at least 2 choices");
  std::vector<T> out;
  out.reserve(choices.size());
  for (const auto& seq : choices) {
    auto pooled = forward_encode(params, config, seq);
    out.push_back(pooled.dot(params.mc_weight.col(0)) + params.mc_bias(0, 0));
  }
  return out;
}

template <typename T>
std::vector<T> sc_logits(const Parameters<T>& params, const EncoderConfig& config, const TokenSeq& packed) {
  auto pooled = forward_encode(params, config, packed);
  RowVector<T> z = pooled * params.sc_weight + params.sc_bias;
  return std::vector<T>(z.data(), z.data() + z.size());
}

template <typename T>
T cross_entropy(std::span<const T> logits, int gold) {
  using std::exp;
  using std::log;
  if (gold < 0 || static_cast<std::size_t>(gold) >= logits.size()) {
    throw ValidationError("gold index " + std::to_string(gold) + " out of range for " +
                          std::to_string(logits.size()) + " logits");
  }
  const T m = *std::max_element(logits.begin(), logits.end());
  T total = 0;
  for (T z : logits) total += exp(z - m);
  return log(total) - (logits[static_cast<std::size_t>(gold)] - m);
}

template <typename T>
std::vector<T> cross_entropy_grad(std::span<const T> logits, int gold) {
  using std::exp;
  if (gold < 0 || static_cast<std::size_t>(gold) >= logits.size()) {
    throw ValidationError("gold index " + std::to_string(gold) + " out of range for " +
                          std::to_string(logits.size()) + " logits");
  }
  const T m = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = exp(logits[i] - m);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  p[static_cast<std::size_t>(gold)] -= T(1);
  return p;
}

EncodedInstance encode_instance(const MergeTable& table, const QAInstance& instance, Head head, std::size_t max_len,
                                std::string_view instruction_prefix) {
  EncodedInstance out;
  out.id = instance.id;
  out.gold = instance.gold_index;
  out.num_choices = static_cast<int>(instance.choices.size());
  std::string question = std::string(instruction_prefix) + instance.question;
  if (head == Head::mc) {
    if (instance.choices.size() < 2) throw ValidationError("instance '" + instance.id + "' has fewer than 2 choices");
    for (const auto& choice : instance.choices) out.sequences.push_back(encode_pair(table, question, choice, max_len));
  } else {
    if (instance.choices.size() != static_cast<std::size_t>(kScClasses)) {
      throw ValidationError("instance '" + instance.id + "': the sc head needs exactly 4 choices");
    }
    out.sequences.push_back(encode_packed(table, question, instance.choices, max_len));
  }
  return out;
}

template <typename T>
std::vector<T> logits(const Parameters<T>& params, const EncoderConfig& config, const EncodedInstance& instance,
                      Head head) {
  if (head == Head::mc) return mc_logits(params, config, std::span<const TokenSeq>(instance.sequences));
  if (instance.sequences.size() != 1) throw ValidationError("sc instances carry exactly one packed sequence");
  return sc_logits(params, config, instance.sequences.front());
}

template <typename T>
int predict(const Parameters<T>& params, const EncoderConfig& config, const EncodedInstance& instance, Head head) {
  auto z = logits(params, config, instance, head);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

template <typename T>
GradientReport<T> backward(const Parameters<T>& params, const EncoderConfig& config,
                           std::span<const EncodedInstance> batch, Head head) {
  if (batch.empty()) throw ValidationError("backward needs a non-empty batch");
  GradientReport<T> report{Parameters<T>::zeros(config), T(0)};
  auto& grads = report.grads;
  const T inv_batch = T(1) / static_cast<T>(batch.size());

  for (const auto& instance : batch) {
    if (head == Head::mc) {
      if (instance.sequences.size() < 2) throw ValidationError("instance '" + instance.id + "' has fewer than 2 choices");
      std::vector<EncodeTrace<T>> traces;
      std::vector<T> z;
      for (const auto& seq : instance.sequences) {
        traces.push_back(trace_encode(params, config, seq));
        z.push_back(traces.back().pooled.dot(params.mc_weight.col(0)) + params.mc_bias(0, 0));
      }
      report.loss += cross_entropy(std::span<const T>(z), instance.gold) * inv_batch;
      auto dz = cross_entropy_grad(std::span<const T>(z), instance.gold);
      for (std::size_t k = 0; k < traces.size(); ++k) {
        const T dk = dz[k] * inv_batch;
        grads.mc_weight.col(0) += traces[k].pooled.transpose() * dk;
        grads.mc_bias(0, 0) += dk;
        RowVector<T> d_pooled = params.mc_weight.col(0).transpose() * dk;
        backprop_encode(params, config, traces[k], d_pooled, grads);
      }
    } else {
      if (instance.sequences.size() != 1) throw ValidationError("sc instances carry exactly one packed sequence");
      auto trace = trace_encode(params, config, instance.sequences.front());
      RowVector<T> z_row = trace.pooled * params.sc_weight + params.sc_bias;
      std::vector<T> z(z_row.data(), z_row.data() + z_row.size());
      report.loss += cross_entropy(std::span<const T>(z), instance.gold) * inv_batch;
      auto dz = cross_entropy_grad(std::span<const T>(z), instance.gold);
      RowVector<T> dz_row(kScClasses);
      for (int c = 0; c < kScClasses; ++c) dz_row(c) = dz[static_cast<std::size_t>(c)] * inv_batch;
      grads.sc_weight.noalias() += trace.pooled.transpose() * dz_row;
      grads.sc_bias += dz_row;
      RowVector<T> d_pooled = dz_row * params.sc_weight.transpose();
      backprop_encode(params, config, trace, d_pooled, grads);
    }
  }
  return report;
}

template <typename T>
T batch_loss(const Parameters<T>& params, const EncoderConfig& config, std::span<const EncodedInstance> batch,
             Head head) {
  if (batch.empty()) throw ValidationError("batch_loss needs a non-empty batch");
  T total = 0;
  for (const auto& instance : batch) {
    auto z = logits(params, config, instance, head);
    total += cross_entropy(std::span<const T>(z), instance.gold);
  }
  return total / static_cast<T>(batch.size());
}

#define LTQA_INSTANTIATE_MODEL(T)                                                                                 \
  template struct Parameters<T>;                                                                                  \
  template Parameters<T> init_params<T>(const EncoderConfig&, std::uint64_t);                                     \
  template EncodeTrace<T> trace_encode<T>(const Parameters<T>&, const EncoderConfig&, const TokenSeq&,             \
                                          const std::vector<bool>&);                                              \
  template RowVector<T> forward_encode<T>(const Parameters<T>&, const EncoderConfig&, const TokenSeq&,             \
                                          const std::vector<bool>&);                                              \
  template void backprop_encode<T>(const Parameters<T>&, const EncoderConfig&, const EncodeTrace<T>&,              \
                                   const RowVector<T>&, Parameters<T>&);                                          \
  template std::vector<T> mc_logits<T>(const Parameters<T>&, const EncoderConfig&, std::span<const TokenSeq>);    \
  template std::vector<T> sc_logits<T>(const Parameters<T>&, const EncoderConfig&, const TokenSeq&);              \
  template T cross_entropy<T>(std::span<const T>, int);                                                           \
  template std::vector<T> cross_entropy_grad<T>(std::span<const T>, int);                                         \
  template std::vector<T> logits<T>(const Parameters<T>&, const EncoderConfig&, const EncodedInstance&, Head);    \
  template int predict<T>(const Parameters<T>&, const EncoderConfig&, const EncodedInstance&, Head);              \
  template GradientReport<T> backward<T>(const Parameters<T>&, const EncoderConfig&,                              \
                                         std::span<const EncodedInstance>, Head);                                 \
  template T batch_loss<T>(const Parameters<T>&, const EncoderConfig&, std::span<const EncodedInstance>, Head);

LTQA_INSTANTIATE_MODEL(float)
LTQA_INSTANTIATE_MODEL(double)
LTQA_INSTANTIATE_MODEL(long double)

#undef LTQA_INSTANTIATE_MODEL

}  // namespace ltqa
