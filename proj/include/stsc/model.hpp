// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "stsc/corpus.hpp"
#include "stsc/error.hpp"
#include "stsc/features.hpp"
#include "stsc/nn/layers.hpp"
#include "stsc/nn/tensor.hpp"
#include "stsc/random.hpp"

namespace stsc {

enum class EncoderType { Cnn, CnnLstm, CnnGru };

inline std::string to_string(EncoderType e) {
  switch (e) {
  case EncoderType::Cnn: return "CNN";
  case EncoderType::CnnLstm: return "CNN_LSTM";
  case EncoderType::CnnGru: return "CNN_GRU";
  }
  return "?";
}

inline EncoderType parse_encoder(const std::string &s) {
  if (s == "CNN") return EncoderType::Cnn;
  if (s == "CNN_LSTM") return EncoderType::CnnLstm;
  if (s == "CNN_GRU") return EncoderType::CnnGru;
  fail(Errc::ConfigInvalid, "encoder: unknown type '" + s + "' (expected CNN, CNN_LSTM or CNN_GRU)");
}

inline constexpr std::array<int, 5> kGridSampleSizes = {5, 10, 15, 30, 60};
inline constexpr std::array<int, 3> kGridKernelSizes = {3, 5, 7};
inline constexpr std::array<EncoderType, 3> kGridEncoders = {EncoderType::Cnn, EncoderType::CnnLstm,
                                                             EncoderType::CnnGru};

struct ModelConfig {
  EncoderType encoder = EncoderType::CnnGru;
  int kernel_size = 5;
  int n_fragments = 15;
  int n_filters = 128;
  int rnn_hidden = 128;
  int feature_dim = 128;
  int head_hidden = 128;
  double dropout = 0.1;
  int input_bands = 128;
  int input_frames = kFragmentFrames;

  /// Shape sanity only; used for reduced test configurations.
  void validate_shapes() const {
    auto pos = [](int v, const char *key) {
      if (v < 1)
        fail(Errc::ConfigInvalid, std::string(key) + ": must be >= 1");
    };
    pos(n_fragments, "n_fragments");
    pos(n_filters, "n_filters");
    pos(rnn_hidden, "rnn_hidden");
    pos(feature_dim, "feature_dim");
    pos(head_hidden, "head_hidden");
    pos(input_bands, "input_bands");
    pos(input_frames, "input_frames");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      fail(Errc::ConfigInvalid, "kernel_size: must be a positive odd number");
    if (!(dropout >= 0.0 && dropout < 1.0))
      fail(Errc::ConfigInvalid, "dropout: must be in [0, 1)");
  }

  /// Full check against the searchable configuration domain.
  void validate() const {
    validate_shapes();
    auto in = [](int v, const auto &set) {
      return std::find(set.begin(), set.end(), v) != set.end();
    };
    if (!in(kernel_size, kGridKernelSizes))
      fail(Errc::ConfigInvalid, "kernel_size: must be one of 3, 5, 7");
    if (!in(n_fragments, kGridSampleSizes))
      fail(Errc::ConfigInvalid, "n_fragments: must be one of 5, 10, 15, 30, 60");
    if (feature_dim != 128)
      fail(Errc::ConfigInvalid, "feature_dim: must be 128");
    if (input_bands != 128 || input_frames != kFragmentFrames)
      fail(Errc::ConfigInvalid, "input shape must be 128 x 16");
  }

  std::string label() const {
    return to_string(encoder) + "/k" + std::to_string(kernel_size) + "/N" +
           std::to_string(n_fragments);
  }

  nlohmann::json to_json() const {
    return {{"encoder", to_string(encoder)}, {"kernel_size", kernel_size},
            {"n_fragments", n_fragments},    {"n_filters", n_filters},
            {"rnn_hidden", rnn_hidden},      {"feature_dim", feature_dim},
            {"head_hidden", head_hidden},    {"dropout", dropout},
            {"input_bands", input_bands},    {"input_frames", input_frames}};
  }

  /// Missing keys keep their defaults; wrongly typed keys are ConfigInvalid.
  static ModelConfig from_json(const nlohmann::json &j) {
    ModelConfig c;
    auto get_int = [&](const char *key, int &dst) {
      if (!j.contains(key))
        return;
      if (!j.at(key).is_number_integer())
        fail(Errc::ConfigInvalid, std::string(key) + ": expected an integer");
      dst = j.at(key).get<int>();
    };
    if (j.contains("encoder")) {
      if (!j.at("encoder").is_string())
        fail(Errc::ConfigInvalid, "encoder: expected a string");
      c.encoder = parse_encoder(j.at("encoder").get<std::string>());
    }
    get_int("kernel_size", c.kernel_size);
    get_int("n_fragments", c.n_fragments);
    get_int("n_filters", c.n_filters);
    get_int("rnn_hidden", c.rnn_hidden);
    get_int("feature_dim", c.feature_dim);
    get_int("head_hidden", c.head_hidden);
    get_int("input_bands", c.input_bands);
    get_int("input_frames", c.input_frames);
    if (j.contains("dropout")) {
      if (!j.at("dropout").is_number())
        fail(Errc::ConfigInvalid, "dropout: expected a number");
      c.dropout = j.at("dropout").get<double>();
    }
    return c;
  }

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

// ---------------------------------------------------------------------------
// Parameters

template <typename T> struct ModelParams {
  EncoderType encoder = EncoderType::CnnGru;
  nn::Conv1dParams<T> conv;
  nn::LstmParams<T> lstm;
  nn::GruParams<T> gru;
  nn::DenseParams<T> enc;
  nn::DenseParams<T> head1;
  nn::DenseParams<T> head2;

  /// Named tensors in a fixed order; gradients and optimizer moments use the
  /// same order.
  std::vector<nn::Named<T>> tensors() {
    std::vector<nn::Named<T>> out;
    auto add = [&](std::vector<nn::Named<T>> v) { out.insert(out.end(), v.begin(), v.end()); };
    add(conv.tensors("conv"));
    if (encoder == EncoderType::CnnLstm)
      add(lstm.tensors("lstm"));
    if (encoder == EncoderType::CnnGru)
      add(gru.tensors("gru"));
    add(enc.tensors("encoder_dense"));
    add(head1.tensors("head_dense"));
    add(head2.tensors("output"));
    return out;
  }

  std::vector<std::pair<std::string, const nn::Mat<T> *>> tensors() const {
    auto named = const_cast<ModelParams *>(this)->tensors();
    std::vector<std::pair<std::string, const nn::Mat<T> *>> out;
    for (auto &[n, m] : named)
      out.emplace_back(n, m);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto &[_, m] : tensors())
      n += static_cast<std::size_t>(m->size());
    return n;
  }

  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto &[_, m] : z.tensors())
      m->setZero();
    return z;
  }

  void set_zero() {
    for (auto &[_, m] : tensors())
      m->setZero();
  }

  template <typename U> ModelParams<U> cast() const {
    ModelParams<U> out;
    out.encoder = encoder;
    out.conv.kernel = conv.kernel;
    auto dst = out.tensors();
    const auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i)
      *dst[i].second = src[i].second->template cast<U>();
    return out;
  }
};

template <typename T> struct Model {
  ModelConfig config;
  ModelParams<T> params;

  template <typename U> Model<U> cast() const { return {config, params.template cast<U>()}; }
};

/// Glorot-uniform weights and zero biases, drawn in a fixed layer order.
template <typename T = float>
Model<T> init_model(const ModelConfig &config, std::uint64_t seed) {
  config.validate_shapes();
  Rng rng(derive_seed(seed, 0x1417));
  Model<T> m;
  m.config = config;
  auto &p = m.params;
  p.encoder = config.encoder;
  p.conv = nn::init_conv1d<T>(config.input_frames, config.n_filters, config.kernel_size, rng);
  int pooled = config.n_filters;
  if (config.encoder == EncoderType::CnnLstm) {
    p.lstm = nn::init_lstm<T>(config.n_filters, config.rnn_hidden, rng);
    pooled = config.rnn_hidden;
  } else if (config.encoder == EncoderType::CnnGru) {
    p.gru = nn::init_gru<T>(config.n_filters, config.rnn_hidden, rng);
    pooled = config.rnn_hidden;
  }
  p.enc = nn::init_dense<T>(pooled, config.feature_dim, rng);
  p.head1 = nn::init_dense<T>(config.n_fragments * config.feature_dim, config.head_hidden, rng);
  p.head2 = nn::init_dense<T>(config.head_hidden, 1, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T> struct EncoderCache {
  nn::Conv1dCache<T> conv;
  nn::LstmCache<T> lstm;
  nn::GruCache<T> gru;
  nn::MaxPoolCache pool;
  nn::DenseCache<T> dense;
  nn::DropoutCache<T> drop;
};

template <typename T> struct HeadCache {
  nn::DenseCache<T> hidden;
  nn::DropoutCache<T> drop;
  nn::DenseCache<T> out;
};

template <typename T> struct ForwardCache {
  std::vector<EncoderCache<T>> encoders;
  HeadCache<T> head;
};

/// Band-major fragment as an (n_bands x n_frames) matrix: the frequency axis
/// is the sequence axis and the 16 frames are input channels.
template <typename T> nn::Mat<T> fragment_input(const MelFragment &f) {
  nn::Mat<T> x(f.n_bands, f.n_frames);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<T>(f.values[static_cast<std::size_t>(i)]);
  return x;
}

/// One fragment -> 1 x feature_dim.
template <typename T>
nn::Mat<T> encode(const Model<T> &m, const nn::Mat<T> &x, nn::Mode mode, Rng *rng,
                  EncoderCache<T> *cache) {
  const auto &cfg = m.config;
  const auto &p = m.params;
  nn::require_shape(x, cfg.input_bands, cfg.input_frames, "fragment");
  nn::Mat<T> h = nn::conv1d_forward(x, p.conv, cache ? &cache->conv : nullptr);
  if (cfg.encoder == EncoderType::CnnLstm)
    h = nn::lstm_forward(h, p.lstm, cache ? &cache->lstm : nullptr);
  else if (cfg.encoder == EncoderType::CnnGru)
    h = nn::gru_forward(h, p.gru, cache ? &cache->gru : nullptr);
  nn::Mat<T> pooled = nn::global_max_pool_forward(h, cache ? &cache->pool : nullptr);
  nn::Mat<T> f = nn::dense_forward(pooled, p.enc, nn::Activation::Relu,
                                   cache ? &cache->dense : nullptr);
  f = nn::dropout_forward(f, cfg.dropout, mode, rng, cache ? &cache->drop : nullptr);
  nn::check_finite(f, "encoder output");
  return f;
}

template <typename T>
nn::Mat<T> encode_backward(const Model<T> &m, const nn::Mat<T> &d_feature,
                           const EncoderCache<T> &cache, ModelParams<T> &grad) {
  const auto &p = m.params;
  nn::Mat<T> d = nn::dropout_backward(d_feature, cache.drop);
  d = nn::dense_backward(d, p.enc, nn::Activation::Relu, cache.dense, grad.enc);
  d = nn::global_max_pool_backward(d, cache.pool);
  if (m.config.encoder == EncoderType::CnnLstm)
    d = nn::lstm_backward(d, p.lstm, cache.lstm, grad.lstm);
  else if (m.config.encoder == EncoderType::CnnGru)
    d = nn::gru_backward(d, p.gru, cache.gru, grad.gru);
  return nn::conv1d_backward(d, p.conv, cache.conv, grad.conv);
}

/// Flattened N x feature_dim row -> logit.
template <typename T>
T head_logit(const Model<T> &m, const nn::Mat<T> &flat, nn::Mode mode, Rng *rng,
             HeadCache<T> *cache) {
  nn::Mat<T> h = nn::dense_forward(flat, m.params.head1, nn::Activation::Relu,
                                   cache ? &cache->hidden : nullptr);
  h = nn::dropout_forward(h, m.config.dropout, mode, rng, cache ? &cache->drop : nullptr);
  const nn::Mat<T> out = nn::dense_forward(h, m.params.head2, nn::Activation::None,
                                           cache ? &cache->out : nullptr);
  nn::check_finite(out, "output logit");
  return out(0, 0);
}

template <typename T>
nn::Mat<T> flatten_features(const std::vector<nn::Mat<T>> &features) {
  const Eigen::Index width = features.empty() ? 0 : features[0].cols();
  nn::Mat<T> flat(1, width * static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i)
    flat.block(0, static_cast<Eigen::Index>(i) * width, 1, width) = features[i];
  return flat;
}

/// Fragments in draw order -> logit. Dropout draws consume `rng` fragment by
/// fragment, then the head.
template <typename T>
T forward_logit(const Model<T> &m, const std::vector<nn::Mat<T>> &inputs, nn::Mode mode, Rng *rng,
                ForwardCache<T> *cache) {
  if (static_cast<int>(inputs.size()) != m.config.n_fragments)
    fail(Errc::BatchSizeMismatch, "model expects " + std::to_string(m.config.n_fragments) +
                                      " fragments, got " + std::to_string(inputs.size()));
  if (cache)
    cache->encoders.resize(inputs.size());
  std::vector<nn::Mat<T>> features;
  features.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    features.push_back(encode(m, inputs[i], mode, rng, cache ? &cache->encoders[i] : nullptr));
  return head_logit(m, flatten_features(features), mode, rng, cache ? &cache->head : nullptr);
}

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logit).
/// Returns the gradient with respect to each input fragment.
template <typename T>
std::vector<nn::Mat<T>> backward(const Model<T> &m, T d_logit, const ForwardCache<T> &cache,
                                 ModelParams<T> &grad) {
  const auto &p = m.params;
  nn::Mat<T> d(1, 1);
  d(0, 0) = d_logit;
  d = nn::dense_backward(d, p.head2, nn::Activation::None, cache.head.out, grad.head2);
  d = nn::dropout_backward(d, cache.head.drop);
  const nn::Mat<T> d_flat =
      nn::dense_backward(d, p.head1, nn::Activation::Relu, cache.head.hidden, grad.head1);
  const Eigen::Index width = m.config.feature_dim;
  std::vector<nn::Mat<T>> d_inputs;
  d_inputs.reserve(cache.encoders.size());
  for (std::size_t i = 0; i < cache.encoders.size(); ++i) {
    const nn::Mat<T> d_feat = d_flat.block(0, static_cast<Eigen::Index>(i) * width, 1, width);
    d_inputs.push_back(encode_backward(m, d_feat, cache.encoders[i], grad));
  }
  return d_inputs;
}

// ---------------------------------------------------------------------------
// Fragment-level API

/// Inference-mode 128-d feature vector of one fragment.
template <typename T>
std::vector<float> encode_fragment(const Model<T> &m, const MelFragment &fragment) {
  if (fragment.n_bands != m.config.input_bands || fragment.n_frames != m.config.input_frames)
    fail(Errc::ShapeMismatch, "fragment is " + std::to_string(fragment.n_bands) + "x" +
                                  std::to_string(fragment.n_frames));
  const nn::Mat<T> f = encode(m, fragment_input<T>(fragment), nn::Mode::Infer, nullptr,
                              static_cast<EncoderCache<T> *>(nullptr));
  std::vector<float> out(static_cast<std::size_t>(f.cols()));
  for (Eigen::Index i = 0; i < f.cols(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<float>(f(0, i));
  return out;
}

/// Probability for one fragment bag. `rng` is only consumed in training mode.
template <typename T>
double predict(const Model<T> &m, const FragmentBatch &batch, nn::Mode mode = nn::Mode::Infer,
               Rng *rng = nullptr) {
  for (const auto &f : batch.fragments)
    if (f.n_bands != m.config.input_bands || f.n_frames != m.config.input_frames)
      fail(Errc::ShapeMismatch, "fragment shape does not match the model input");
  std::vector<nn::Mat<T>> inputs;
  inputs.reserve(batch.fragments.size());
  for (const auto &f : batch.fragments)
    inputs.push_back(fragment_input<T>(f));
  const T logit = forward_logit(m, inputs, mode, rng, static_cast<ForwardCache<T> *>(nullptr));
  return static_cast<double>(nn::sigmoid(logit));
}

inline constexpr int kDefaultRepeats = 10;

/// Mean inference-mode probability over `repeats` fresh fragment draws.
/// Fragment encodings are shared between draws within the call.
template <typename T>
double predict_subject(const Model<T> &m, const SpeakerRecord &record, int repeats, Rng &rng) {
  require(repeats >= 1, Errc::InvalidArgument, "repeats must be >= 1");
  std::map<std::size_t, nn::Mat<T>> encoded;
  double sum = 0.0;
  for (int r = 0; r < repeats; ++r) {
    const auto picks = sample_fragment_indices(record, m.config.n_fragments, rng);
    std::vector<nn::Mat<T>> features;
    features.reserve(picks.size());
    for (std::size_t idx : picks) {
      auto it = encoded.find(idx);
      if (it == encoded.end()) {
        const MelFragment frag = record.fragment(record.fragments[idx]);
        it = encoded
                 .emplace(idx, encode(m, fragment_input<T>(frag), nn::Mode::Infer, nullptr,
                                      static_cast<EncoderCache<T> *>(nullptr)))
                 .first;
      }
      features.push_back(it->second);
    }
    const T logit = head_logit(m, flatten_features(features), nn::Mode::Infer, nullptr,
                               static_cast<HeadCache<T> *>(nullptr));
    sum += static_cast<double>(nn::sigmoid(logit));
  }
  return sum / repeats;
}

// ---------------------------------------------------------------------------
// Checkpoints
//   "STSC" | u16 version | u32 header_len | JSON header | parameter blocks (f32 LE)
//   | optimizer blocks (f64 LE, optional) | u32 CRC32 of every preceding byte

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Per-tensor first/second moments in ModelParams::tensors() order.
struct OptimizerState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> s;
};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  int fold = -1;
  std::string corpus_fingerprint;
  double val_pr_auc = 0.0;

  nlohmann::json to_json() const {
    return {{"seed", seed}, {"epoch", epoch}, {"fold", fold},
            {"corpus_fingerprint", corpus_fingerprint}, {"val_pr_auc", val_pr_auc}};
  }
  static CheckpointMeta from_json(const nlohmann::json &j) {
    CheckpointMeta m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epoch = j.at("epoch").get<int>();
    m.fold = j.at("fold").get<int>();
    m.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
    m.val_pr_auc = j.at("val_pr_auc").get<double>();
    return m;
  }
};

struct Checkpoint {
  Model<float> model;
  CheckpointMeta meta;
  std::optional<OptimizerState> optimizer;
};

namespace detail {

inline void append_bytes(std::vector<unsigned char> &out, const void *p, std::size_t n) {
  const auto *b = static_cast<const unsigned char *>(p);
  out.insert(out.end(), b, b + n);
}

inline std::uint32_t crc32_of(const unsigned char *p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

} // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const Checkpoint &ck) {
  const auto tensors = ck.model.params.tensors();
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto &[name, m] : tensors) {
    manifest.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()},
                        {"offset", offset}, {"dtype", "f32"}});
    offset += static_cast<std::size_t>(m->size()) * sizeof(float);
  }
  nlohmann::json header = {{"config", ck.model.config.to_json()},
                           {"metadata", ck.meta.to_json()},
                           {"parameters", manifest},
                           {"parameter_bytes", offset}};
  if (ck.optimizer) {
    require(ck.optimizer->m.size() == tensors.size() && ck.optimizer->s.size() == tensors.size(),
            Errc::ShapeMismatch, "optimizer state does not match parameters");
    header["optimizer"] = {{"step", ck.optimizer->step}, {"dtype", "f64"}};
  }
  const std::string text = header.dump();

  std::vector<unsigned char> out;
  out.insert(out.end(), {'S', 'T', 'S', 'C'});
  stsc::detail::put_u16(out, kCheckpointVersion);
  stsc::detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto &[_, m] : tensors)
    detail::append_bytes(out, m->data(), static_cast<std::size_t>(m->size()) * sizeof(float));
  if (ck.optimizer) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto n = static_cast<std::size_t>(tensors[i].second->size());
      require(ck.optimizer->m[i].size() == n && ck.optimizer->s[i].size() == n,
              Errc::ShapeMismatch, "optimizer moment size mismatch for " + tensors[i].first);
      detail::append_bytes(out, ck.optimizer->m[i].data(), n * sizeof(double));
      detail::append_bytes(out, ck.optimizer->s[i].data(), n * sizeof(double));
    }
  }
  stsc::detail::put_u32(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

inline Checkpoint deserialize_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "STSC", 4) != 0)
    fail(Errc::CorruptFile, "not a checkpoint (bad magic)");
  const std::uint16_t version = stsc::detail::read_u16(bytes.data() + 4);
  if (version != kCheckpointVersion)
    fail(Errc::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                    ", expected " + std::to_string(kCheckpointVersion));
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = stsc::detail::read_u32(bytes.data() + body);
  if (detail::crc32_of(bytes.data(), body) != stored)
    fail(Errc::ChecksumFailure, "checkpoint CRC32 mismatch");

  const std::uint32_t header_len = stsc::detail::read_u32(bytes.data() + 6);
  if (10 + static_cast<std::size_t>(header_len) > body)
    fail(Errc::CorruptFile, "checkpoint header length exceeds file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 10, bytes.begin() + 10 + header_len);
  } catch (const nlohmann::json::exception &e) {
    fail(Errc::CorruptFile, std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.model.config = ModelConfig::from_json(header.at("config"));
    ck.meta = CheckpointMeta::from_json(header.at("metadata"));
  } catch (const nlohmann::json::exception &e) {
    fail(Errc::CorruptFile, std::string("checkpoint header: ") + e.what());
  }
  // allocate the parameter layout implied by the config, then fill it
  ck.model = init_model<float>(ck.model.config, 0);
  auto tensors = ck.model.params.tensors();
  const auto &manifest = header.at("parameters");
  if (!manifest.is_array() || manifest.size() != tensors.size())
    fail(Errc::CorruptFile, "checkpoint parameter manifest does not match its config");

  const std::size_t data0 = 10 + header_len;
  std::size_t pos = data0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto &[name, m] = tensors[i];
    const auto &entry = manifest[i];
    if (entry.at("name").get<std::string>() != name || entry.at("rows").get<Eigen::Index>() != m->rows() ||
        entry.at("cols").get<Eigen::Index>() != m->cols() ||
        entry.at("offset").get<std::size_t>() != pos - data0)
      fail(Errc::CorruptFile, "checkpoint tensor '" + name + "' has an unexpected layout");
    const std::size_t n = static_cast<std::size_t>(m->size()) * sizeof(float);
    if (pos + n > body)
      fail(Errc::CorruptFile, "checkpoint truncated in tensor '" + name + "'");
    std::memcpy(m->data(), bytes.data() + pos, n);
    pos += n;
  }
  if (header.contains("optimizer")) {
    OptimizerState st;
    st.step = header.at("optimizer").at("step").get<std::int64_t>();
    for (const auto &[name, m] : tensors) {
      const auto n = static_cast<std::size_t>(m->size());
      if (pos + 2 * n * sizeof(double) > body)
        fail(Errc::CorruptFile, "checkpoint truncated in optimizer state of '" + name + "'");
      st.m.emplace_back(n);
      st.s.emplace_back(n);
      std::memcpy(st.m.back().data(), bytes.data() + pos, n * sizeof(double));
      pos += n * sizeof(double);
      std::memcpy(st.s.back().data(), bytes.data() + pos, n * sizeof(double));
      pos += n * sizeof(double);
    }
    ck.optimizer = std::move(st);
  }
  if (pos != body)
    fail(Errc::CorruptFile, "checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &path) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    fail(Errc::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    fail(Errc::IoError, "short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path))
    fail(Errc::FileNotFound, path.string());
  const auto bytes = read_file_bytes(path);
  return deserialize_checkpoint(bytes);
}

} // namespace stsc
