#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nmg/dataset.hpp"
#include "nmg/error.hpp"
#include "nmg/text.hpp"

namespace nmg {

/// Negative-side slope of the hidden-layer leaky ReLU.
inline constexpr double kLeakySlope = 0.01;

struct LossConfig {
  double alpha = 0.5;
  double beta = 0.5;

  void validate() const {
    require(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0, ErrorKind::invalid_argument,
            "alpha and beta must lie in (0, 1)");
  }
};

/// Fully connected network. Parameters live in one flat vector, layer by
/// layer: the weight block W (fan_in rows x fan_out columns, row-major) then
/// the bias vector.
struct MLPModel {
  std::vector<std::size_t> layer_sizes;
  std::vector<double> params;
  int dimension = 1;
  std::size_t patch_size = 0;
  std::uint64_t seed = 0;
  std::uint64_t manifest_hash = 0;

  std::size_t n_layers() const noexcept { return layer_sizes.size() - 1; }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }

  std::size_t weight_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k) off += (layer_sizes[k] + 1) * layer_sizes[k + 1];
    return off;
  }
  std::size_t bias_offset(std::size_t l) const { return weight_offset(l) + layer_sizes[l] * layer_sizes[l + 1]; }

  static std::size_t parameter_count(const std::vector<std::size_t>& sizes) {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) n += (sizes[k] + 1) * sizes[k + 1];
    return n;
  }

  friend bool operator==(const MLPModel&, const MLPModel&) = default;
};

/// He-normal weights, zero biases.
inline MLPModel init_mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  require(layer_sizes.size() >= 2, ErrorKind::invalid_argument, "an MLP needs at least two layers");
  for (auto s : layer_sizes) require(s > 0, ErrorKind::invalid_argument, "layer sizes must be positive");
  MLPModel m;
  m.layer_sizes = layer_sizes;
  m.seed = seed;
  m.params.assign(MLPModel::parameter_count(layer_sizes), 0.0);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < m.n_layers(); ++l) {
    std::normal_distribution<double> n01(0.0, std::sqrt(2.0 / static_cast<double>(layer_sizes[l])));
    const std::size_t w = m.weight_offset(l);
    for (std::size_t k = 0; k < layer_sizes[l] * layer_sizes[l + 1]; ++k) m.params[w + k] = n01(rng);
  }
  return m;
}

namespace detail {

inline double leaky(double z) { return z > 0.0 ? z : kLeakySlope * z; }
inline double leaky_grad(double z) { return z > 0.0 ? 1.0 : kLeakySlope; }

/// Row-major batch activations; acts[0] is the input, acts[l+1] the output
/// of layer l, pre[l] its pre-activation.
struct Trace {
  std::size_t batch = 0;
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> pre;
};

inline void forward_batch(const MLPModel& m, const std::vector<const std::vector<double>*>& xs, Trace& t) {
  const std::size_t nb = xs.size();
  t.batch = nb;
  t.acts.resize(m.n_layers() + 1);
  t.pre.resize(m.n_layers());
  const std::size_t in = m.input_size();
  t.acts[0].resize(nb * in);
  for (std::size_t b = 0; b < nb; ++b) {
    require(xs[b]->size() == in, ErrorKind::invalid_argument,
            "input length " + std::to_string(xs[b]->size()) + " != " + std::to_string(in));
    std::copy(xs[b]->begin(), xs[b]->end(), t.acts[0].begin() + static_cast<std::ptrdiff_t>(b * in));
  }
  for (std::size_t l = 0; l < m.n_layers(); ++l) {
    const std::size_t fi = m.layer_sizes[l], fo = m.layer_sizes[l + 1];
    const double* w = m.params.data() + m.weight_offset(l);
    const double* bias = m.params.data() + m.bias_offset(l);
    auto& z = t.pre[l];
    z.resize(nb * fo);
    for (std::size_t b = 0; b < nb; ++b) {
      double* zb = z.data() + b * fo;
      std::copy(bias, bias + fo, zb);
      const double* xb = t.acts[l].data() + b * fi;
      for (std::size_t i = 0; i < fi; ++i) {
        const double xi = xb[i];
        const double* wi = w + i * fo;
        for (std::size_t o = 0; o < fo; ++o) zb[o] += xi * wi[o];
      }
    }
    auto& a = t.acts[l + 1];
    a = z;
    if (l + 1 < m.n_layers())
      for (auto& v : a) v = leaky(v);
  }
}

}  // namespace detail

inline std::vector<double> forward(const MLPModel& model, std::span<const double> x) {
  const std::vector<double> xv(x.begin(), x.end());
  detail::Trace t;
  detail::forward_batch(model, {&xv}, t);
  return t.acts.back();
}

/// (1/alpha)|sum(q_pred) - 1| + (1/beta)||q_pred - q_true||_2
inline double penalty(std::span<const double> q_pred, std::span<const double> q_true, const LossConfig& cfg) {
  require(q_pred.size() == q_true.size(), ErrorKind::invalid_argument, "penalty rows differ in length");
  double sum = 0.0, sq = 0.0;
  for (std::size_t j = 0; j < q_pred.size(); ++j) {
    sum += q_pred[j];
    sq += (q_pred[j] - q_true[j]) * (q_pred[j] - q_true[j]);
  }
  return std::abs(sum - 1.0) / cfg.alpha + std::sqrt(sq) / cfg.beta;
}

/// MSE over raw B entries plus the per-member penalties on Q rows
/// (B row / lumped mass). Writes d(loss)/d(y_pred) when `grad` is non-empty.
inline double loss_and_gradient(std::span<const double> y_true, std::span<const double> y_pred,
                                 std::span<const double> aux, const LossConfig& cfg, std::span<double> grad) {
  require(y_true.size() == y_pred.size() && !aux.empty() && y_true.size() % aux.size() == 0,
          ErrorKind::invalid_argument, "loss shapes are inconsistent");
  const std::size_t n = y_true.size(), width = n / aux.size();
  double mse = 0.0;
  for (std::size_t i = 0; i < n; ++i) mse += (y_pred[i] - y_true[i]) * (y_pred[i] - y_true[i]);
  mse /= static_cast<double>(n);
  if (!grad.empty())
    for (std::size_t i = 0; i < n; ++i) grad[i] = 2.0 * (y_pred[i] - y_true[i]) / static_cast<double>(n);

  double pen = 0.0;
  for (std::size_t k = 0; k < aux.size(); ++k) {
    const double d = aux[k];
    require(d > 0.0, ErrorKind::invalid_mass, "nonpositive lumped mass in loss");
    double sum = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double qp = y_pred[k * width + j] / d, qt = y_true[k * width + j] / d;
      sum += qp;
      sq += (qp - qt) * (qp - qt);
    }
    const double norm = std::sqrt(sq);
    pen += std::abs(sum - 1.0) / cfg.alpha + norm / cfg.beta;
    if (grad.empty()) continue;
    const double s = sum > 1.0 ? 1.0 : (sum < 1.0 ? -1.0 : 0.0);
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t i = k * width + j;
      double g = s / cfg.alpha;
      if (norm > 0.0) g += (y_pred[i] - y_true[i]) / d / norm / cfg.beta;
      grad[i] += g / d;
    }
  }
  return mse + pen;
}

inline double loss(std::span<const double> y_true, std::span<const double> y_pred, std::span<const double> aux,
                   const LossConfig& cfg) {
  return loss_and_gradient(y_true, y_pred, aux, cfg, {});
}

/// Mean loss over `batch` and its exact gradient with respect to every
/// parameter (subgradient 0 at the kinks of |.| and ||.||).
inline double backward(const MLPModel& model, std::span<const PatchRecord* const> batch, const LossConfig& cfg,
                       std::vector<double>& grad) {
  grad.assign(model.params.size(), 0.0);
  if (batch.empty()) return 0.0;
  std::vector<const std::vector<double>*> xs;
  for (const auto* r : batch) xs.push_back(&r->features);
  detail::Trace t;
  detail::forward_batch(model, xs, t);

  const std::size_t nb = batch.size(), out = model.output_size();
  std::vector<double> delta(nb * out);
  double total = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    require(batch[b]->target.size() == out, ErrorKind::invalid_argument, "target length mismatch");
    std::span<const double> yp(t.acts.back().data() + b * out, out);
    std::span<double> g(delta.data() + b * out, out);
    total += loss_and_gradient(batch[b]->target, yp, batch[b]->aux_lumped, cfg, g);
  }
  const double scale = 1.0 / static_cast<double>(nb);
  for (auto& v : delta) v *= scale;

  for (std::size_t l = model.n_layers(); l-- > 0;) {
    const std::size_t fi = model.layer_sizes[l], fo = model.layer_sizes[l + 1];
    if (l + 1 < model.n_layers()) {
      const auto& z = t.pre[l];
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] *= detail::leaky_grad(z[k]);
    }
    double* gw = grad.data() + model.weight_offset(l);
    double* gb = grad.data() + model.bias_offset(l);
    const double* w = model.params.data() + model.weight_offset(l);
    std::vector<double> prev(l > 0 ? nb * fi : 0);
    for (std::size_t b = 0; b < nb; ++b) {
      const double* db = delta.data() + b * fo;
      const double* xb = t.acts[l].data() + b * fi;
      for (std::size_t o = 0; o < fo; ++o) gb[o] += db[o];
      for (std::size_t i = 0; i < fi; ++i) {
        const double xi = xb[i];
        double* gwi = gw + i * fo;
        for (std::size_t o = 0; o < fo; ++o) gwi[o] += xi * db[o];
      }
      if (l > 0) {
        double* pb = prev.data() + b * fi;
        for (std::size_t i = 0; i < fi; ++i) {
          const double* wi = w + i * fo;
          double s = 0.0;
          for (std::size_t o = 0; o < fo; ++o) s += wi[o] * db[o];
          pb[i] = s;
        }
      }
    }
    delta.swap(prev);
  }
  return total * scale;
}

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(AdamState& s, std::vector<double>& params, std::span<const double> grads) {
  require(grads.size() == params.size(), ErrorKind::invalid_argument, "gradient shape mismatch");
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    params[i] -= s.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.eps);
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double lr_decay = 1.0;  // multiplied into lr after each epoch
  // With biases held at zero the network is positively homogeneous of degree
  // one, like the map M -> B, so predicted Q rows do not depend on mesh scale.
  bool train_biases = true;
  LossConfig loss;

  void validate() const {
    require(batch_size > 0, ErrorKind::invalid_argument, "batch size must be positive");
    require(lr > 0.0 && lr_decay > 0.0 && lr_decay <= 1.0, ErrorKind::invalid_argument,
            "lr must be positive and lr_decay in (0, 1]");
    loss.validate();
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainResult {
  MLPModel model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

inline double mean_loss(const MLPModel& model, const std::vector<PatchRecord>& records, const LossConfig& cfg) {
  if (records.empty()) return 0.0;
  double total = 0.0;
  std::vector<const std::vector<double>*> xs;
  const std::size_t chunk = 256;
  detail::Trace t;
  for (std::size_t s = 0; s < records.size(); s += chunk) {
    const std::size_t e = std::min(records.size(), s + chunk);
    xs.clear();
    for (std::size_t i = s; i < e; ++i) xs.push_back(&records[i].features);
    detail::forward_batch(model, xs, t);
    const std::size_t out = model.output_size();
    for (std::size_t i = s; i < e; ++i)
      total += loss(records[i].target, std::span<const double>(t.acts.back().data() + (i - s) * out, out),
                    records[i].aux_lumped, cfg);
  }
  return total / static_cast<double>(records.size());
}

/// Mini-batch Adam; returns the parameters of the epoch with the lowest
/// validation loss (training loss when there is no validation split).
inline void zero_bias_gradients(const MLPModel& model, std::span<double> grad) {
  for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
    const auto b = model.bias_offset(l);
    std::fill_n(grad.begin() + static_cast<std::ptrdiff_t>(b), model.layer_sizes[l + 1], 0.0);
  }
}

inline TrainResult train(const MLPModel& init, const std::vector<PatchRecord>& train_set,
                         const std::vector<PatchRecord>& validation, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult res{init, {}, 0};
  if (cfg.epochs == 0) return res;
  require(!train_set.empty(), ErrorKind::invalid_argument, "training split is empty");
  for (const auto& r : train_set)
    require(r.features.size() == init.input_size() && r.target.size() == init.output_size(),
            ErrorKind::wrong_family, "record shape does not match the model");

  MLPModel model = init;
  AdamState adam;
  adam.lr = cfg.lr;
  std::vector<std::size_t> order(train_set.size());
  std::vector<double> grad;
  std::vector<const PatchRecord*> batch;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      batch.clear();
      for (std::size_t i = s; i < e; ++i) batch.push_back(&train_set[order[i]]);
      const double l = backward(model, batch, cfg.loss, grad);
      if (!std::isfinite(l))
        fail(ErrorKind::training_failure, "loss is not finite in epoch " + std::to_string(epoch));
      sum += l * static_cast<double>(e - s);
      if (!cfg.train_biases) zero_bias_gradients(model, grad);
      adam_step(adam, model.params, grad);
    }
    EpochStats st{epoch, sum / static_cast<double>(order.size()), 0.0};
    st.val_loss = validation.empty() ? st.train_loss : mean_loss(model, validation, cfg.loss);
    if (!std::isfinite(st.val_loss))
      fail(ErrorKind::training_failure, "validation loss is not finite in epoch " + std::to_string(epoch));
    res.history.push_back(st);
    if (st.val_loss < best) {
      best = st.val_loss;
      res.model = model;
      res.best_epoch = epoch;
    }
    adam.lr *= cfg.lr_decay;
  }
  return res;
}

inline void write_history_csv(std::ostream& os, const std::vector<EpochStats>& h) {
  os << "epoch,train_loss,val_loss\n";
  for (const auto& e : h) os << e.epoch << ',' << format_real(e.train_loss) << ',' << format_real(e.val_loss) << '\n';
}

/// Raw B entries for one record, patch_size rows of equal width.
inline std::vector<double> predict_b_rows(const MLPModel& model, std::span<const double> features) {
  if (features.size() != model.input_size())
    fail(ErrorKind::wrong_family, "feature length " + std::to_string(features.size()) + " does not fit a model with " +
                                      std::to_string(model.input_size()) + " inputs");
  return forward(model, features);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kModelMagic[8] = {'N', 'M', 'G', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

class ByteWriter {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  std::vector<unsigned char> bytes;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> b) : b_(b) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > b_.size()) fail(ErrorKind::corrupt_model, "checkpoint is truncated");
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> serialize_model(const MLPModel& m) {
  detail::ByteWriter w;
  for (char c : detail::kModelMagic) w.put(c);
  w.put(detail::kModelVersion);
  w.put(static_cast<std::int32_t>(m.dimension));
  w.put(static_cast<std::uint64_t>(m.patch_size));
  w.put(static_cast<std::uint64_t>(m.layer_sizes.size()));
  for (auto s : m.layer_sizes) w.put(static_cast<std::uint64_t>(s));
  w.put(m.seed);
  w.put(m.manifest_hash);
  for (double p : m.params) w.put(p);
  Fnv1a h;
  h.update(w.bytes);
  w.put(h.value());
  return w.bytes;
}

inline MLPModel deserialize_model(std::span<const unsigned char> bytes) {
  if (bytes.size() < sizeof(std::uint64_t)) fail(ErrorKind::corrupt_model, "checkpoint is truncated");
  const auto body = bytes.first(bytes.size() - sizeof(std::uint64_t));
  Fnv1a h;
  h.update(body);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof stored);
  if (stored != h.value()) fail(ErrorKind::corrupt_model, "checksum mismatch");

  detail::ByteReader r(body);
  for (char c : detail::kModelMagic)
    if (r.get<char>() != c) fail(ErrorKind::corrupt_model, "bad magic");
  if (r.get<std::uint32_t>() != detail::kModelVersion) fail(ErrorKind::corrupt_model, "unsupported version");
  MLPModel m;
  m.dimension = r.get<std::int32_t>();
  m.patch_size = static_cast<std::size_t>(r.get<std::uint64_t>());
  const auto n = r.get<std::uint64_t>();
  if (n < 2 || n > 64) fail(ErrorKind::corrupt_model, "implausible layer count");
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto s = r.get<std::uint64_t>();
    if (s == 0 || s > (1u << 20)) fail(ErrorKind::corrupt_model, "implausible layer size");
    m.layer_sizes.push_back(static_cast<std::size_t>(s));
  }
  m.seed = r.get<std::uint64_t>();
  m.manifest_hash = r.get<std::uint64_t>();
  const std::size_t count = MLPModel::parameter_count(m.layer_sizes);
  if (r.remaining() != count * sizeof(double)) fail(ErrorKind::corrupt_model, "parameter block does not match shape");
  m.params.resize(count);
  for (auto& p : m.params) {
    p = r.get<double>();
    if (!std::isfinite(p)) fail(ErrorKind::corrupt_model, "non-finite parameter");
  }
  return m;
}

inline void save_model(const std::string& path, const MLPModel& m) {
  const auto bytes = serialize_model(m);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorKind::io_error, "write to " + path + " failed");
}

inline MLPModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io_error, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

/// Default hidden layers: 1D (64, 64); 2D (256, 256, 256).
inline std::vector<std::size_t> default_architecture(int dimension, std::size_t patch_size) {
  const auto shape = family_shape(dimension, patch_size);
  if (dimension == 1) return {shape.feature_len, 64, 64, shape.target_len};
  return {shape.feature_len, 256, 256, 256, shape.target_len};
}

}  // namespace nmg
