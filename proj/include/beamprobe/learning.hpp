#pragma once

// Joint learner: a trainable phase-only probing codebook followed by an MLP
// beam classifier, trained end to end with Adam on cross-entropy.
//
// The probing layer holds phases Theta (Nt x N_W); its beams are
// W = (cos Theta + j sin Theta) / sqrt(Nt), so every update keeps the
// constant-modulus constraint. Complex arithmetic is carried out on real and
// imaginary parts separately:
//
//   z_re = W_re^T h_re + W_im^T h_im
//   z_im = W_re^T h_im - W_im^T h_re
//   y    = sqrt(P_T) z + n,   x = y_re^2 + y_im^2
//
// The MLP sees standardized powers (x - mean) / std; the statistics are part
// of the model and are constants for differentiation.

#include "beamprobe/binary_io.hpp"
#include "beamprobe/channel.hpp"
#include "beamprobe/codebooks.hpp"
#include "beamprobe/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace beamprobe {

struct DenseLayer {
  RealMatrix weights;  // out x in
  RealVector biases;   // out
};

struct FeatureScaler {
  RealVector mean;
  RealVector stddev;

  RealMatrix apply(const RealMatrix& x) const {
    return (x.colwise() - mean).array().colwise() / stddev.array();
  }
};

struct ProbingModel {
  RealMatrix theta;                // Nt x N_W phase shifts, radians
  std::vector<DenseLayer> layers;  // hidden layers (ReLU) then the output layer
  FeatureScaler scaler;
  std::uint64_t seed = 0;  // training seed; also keys the data split

  std::size_t num_elements() const { return static_cast<std::size_t>(theta.rows()); }
  std::size_t num_probing() const { return static_cast<std::size_t>(theta.cols()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(layers.back().biases.size()); }

  std::vector<std::size_t> hidden_sizes() const {
    std::vector<std::size_t> sizes;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) sizes.push_back(static_cast<std::size_t>(layers[l].biases.size()));
    return sizes;
  }

  double weight_scale() const { return 1.0 / std::sqrt(static_cast<double>(theta.rows())); }
  RealMatrix weights_real() const { return weight_scale() * theta.array().cos().matrix(); }
  RealMatrix weights_imag() const { return weight_scale() * theta.array().sin().matrix(); }

  void validate() const {
    require(theta.rows() >= 1 && theta.cols() >= 1, "probing layer must be non-empty");
    require(!layers.empty(), "model needs an output layer");
    Eigen::Index width = theta.cols();
    for (const auto& layer : layers) {
      require(layer.weights.cols() == width, "MLP layer input width mismatch");
      require(layer.weights.rows() == layer.biases.size(), "MLP layer bias size mismatch");
      width = layer.weights.rows();
    }
    require(scaler.mean.size() == theta.cols() && scaler.stddev.size() == theta.cols(),
            "feature scaler size mismatch");
    require((scaler.stddev.array() > 0.0).all(), "feature scaler std must be positive");
  }
};

/// Theta ~ U[0, 2 pi); weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0;
/// identity feature scaling.
inline ProbingModel create_model(std::size_t num_elements, std::size_t num_probing, std::size_t num_classes,
                                 const std::vector<std::size_t>& hidden_sizes, std::uint64_t seed) {
  require(num_elements >= 1 && num_probing >= 1 && num_classes >= 1, "model dimensions must be positive");
  for (auto h : hidden_sizes) require(h >= 1, "hidden widths must be positive");
  ProbingModel m;
  m.seed = seed;
  RandomStream rng(derive_key(seed, 0x1417));
  m.theta.resize(static_cast<Eigen::Index>(num_elements), static_cast<Eigen::Index>(num_probing));
  for (Eigen::Index i = 0; i < m.theta.cols(); ++i) {
    for (Eigen::Index n = 0; n < m.theta.rows(); ++n) m.theta(n, i) = rng.uniform(0.0, 2.0 * kPi);
  }
  std::vector<std::size_t> widths{num_probing};
  widths.insert(widths.end(), hidden_sizes.begin(), hidden_sizes.end());
  widths.push_back(num_classes);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(widths[l]);
    const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{RealMatrix(fan_out, fan_in), RealVector::Zero(fan_out)};
    for (Eigen::Index c = 0; c < fan_in; ++c) {
      for (Eigen::Index r = 0; r < fan_out; ++r) layer.weights(r, c) = rng.uniform(-bound, bound);
    }
    m.layers.push_back(std::move(layer));
  }
  m.scaler.mean = RealVector::Zero(static_cast<Eigen::Index>(num_probing));
  m.scaler.stddev = RealVector::Ones(static_cast<Eigen::Index>(num_probing));
  return m;
}

/// Fixes the probing phases to those of an existing codebook.
inline void set_probing_codebook(ProbingModel& model, const Codebook& codebook) {
  require(codebook.num_elements() == model.num_elements() && codebook.num_beams() == model.num_probing(),
          "codebook shape does not match the probing layer");
  model.theta = codebook.weights.unaryExpr([](const Complex& w) { return std::arg(w); });
}

inline Codebook export_probing_codebook(const ProbingModel& model) {
  Codebook cb;
  cb.kind = CodebookKind::learned_probing;
  const double s = model.weight_scale();
  cb.weights = model.theta.unaryExpr([s](double t) { return std::polar(s, t); });
  return cb;
}

// ---------------------------------------------------------------------------
// Batched forward / backward
// ---------------------------------------------------------------------------

struct ForwardCache {
  RealMatrix h_re, h_im;  // Nt x B
  RealMatrix y_re, y_im;  // N_W x B
  RealMatrix powers;      // x, N_W x B
  std::vector<RealMatrix> activations;  // standardized input, then each hidden output
  std::vector<RealMatrix> pre_activations;
  RealMatrix logits;  // N_V x B
  RealMatrix probs;
};

inline RealMatrix softmax_columns(const RealMatrix& logits) {
  RealMatrix p = logits;
  for (Eigen::Index b = 0; b < p.cols(); ++b) {
    const double top = p.col(b).maxCoeff();
    p.col(b) = (p.col(b).array() - top).exp();
    p.col(b) /= p.col(b).sum();
  }
  return p;
}

/// Powers of probing measurements for a batch of channels. `noise` is either
/// empty (noiseless) or N_W x B.
inline void probe_powers(const ProbingModel& model, const ComplexMatrix& channels, const ComplexMatrix& noise,
                         double transmit_power, ForwardCache& cache) {
  require(static_cast<std::size_t>(channels.rows()) == model.num_elements(),
          "channel length does not match the probing layer");
  require(noise.size() == 0 || (noise.rows() == model.theta.cols() && noise.cols() == channels.cols()),
          "noise draw shape mismatch");
  const RealMatrix w_re = model.weights_real();
  const RealMatrix w_im = model.weights_imag();
  cache.h_re = channels.real();
  cache.h_im = channels.imag();
  const double amp = std::sqrt(transmit_power);
  cache.y_re = amp * (w_re.transpose() * cache.h_re + w_im.transpose() * cache.h_im);
  cache.y_im = amp * (w_re.transpose() * cache.h_im - w_im.transpose() * cache.h_re);
  if (noise.size() != 0) {
    cache.y_re += noise.real();
    cache.y_im += noise.imag();
  }
  cache.powers = cache.y_re.array().square() + cache.y_im.array().square();
}

/// MLP on raw (unstandardized) powers.
inline void classify(const ProbingModel& model, const RealMatrix& powers, ForwardCache& cache) {
  cache.activations.clear();
  cache.pre_activations.clear();
  cache.activations.push_back(model.scaler.apply(powers));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    RealMatrix pre = (layer.weights * cache.activations.back()).colwise() + layer.biases;
    if (l + 1 == model.layers.size()) {
      cache.logits = std::move(pre);
    } else {
      cache.activations.push_back(pre.cwiseMax(0.0));
      cache.pre_activations.push_back(std::move(pre));
    }
  }
  cache.probs = softmax_columns(cache.logits);
}

inline ForwardCache forward_batch(const ProbingModel& model, const ComplexMatrix& channels,
                                  const ComplexMatrix& noise, double transmit_power) {
  ForwardCache cache;
  probe_powers(model, channels, noise, transmit_power, cache);
  classify(model, cache.powers, cache);
  return cache;
}

struct ForwardResult {
  RealVector powers;
  RealVector logits;
  RealVector probs;
};

/// Single-channel forward pass. `noise` may be empty for a noiseless probe.
inline ForwardResult forward(const ProbingModel& model, const ComplexVector& h, const ComplexVector& noise,
                             double transmit_power) {
  require(noise.size() == 0 || static_cast<std::size_t>(noise.size()) == model.num_probing(),
          "noise draw length must equal the number of probing beams");
  const ComplexMatrix noise_matrix = noise.size() == 0 ? ComplexMatrix() : ComplexMatrix(noise);
  const ForwardCache cache = forward_batch(model, ComplexMatrix(h), noise_matrix, transmit_power);
  return {cache.powers.col(0), cache.logits.col(0), cache.probs.col(0)};
}

struct ModelGradients {
  RealMatrix theta;
  std::vector<DenseLayer> layers;
};

struct LossAndGradients {
  double loss = 0.0;
  ModelGradients grads;
};

inline double cross_entropy(const RealMatrix& logits, std::span<const std::size_t> labels) {
  double total = 0.0;
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const double top = logits.col(b).maxCoeff();
    const double lse = top + std::log((logits.col(b).array() - top).exp().sum());
    total += lse - logits(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(b)]), b);
  }
  return total / static_cast<double>(logits.cols());
}

/// Mean cross-entropy over the batch and its gradient with respect to every
/// trainable tensor. Noise draws are constants.
inline LossAndGradients loss_and_gradients(const ProbingModel& model, const ComplexMatrix& channels,
                                           std::span<const std::size_t> labels, const ComplexMatrix& noise,
                                           double transmit_power) {
  require(channels.cols() >= 1, "empty batch");
  require(labels.size() == static_cast<std::size_t>(channels.cols()), "label count does not match batch");
  for (auto y : labels) require(y < model.num_classes(), "label out of range");

  const ForwardCache cache = forward_batch(model, channels, noise, transmit_power);
  const auto batch = static_cast<double>(channels.cols());

  LossAndGradients out;
  out.loss = cross_entropy(cache.logits, labels);

  RealMatrix grad = cache.probs;
  for (Eigen::Index b = 0; b < grad.cols(); ++b) grad(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(b)]), b) -= 1.0;
  grad /= batch;

  out.grads.layers.resize(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const RealMatrix& input = cache.activations[l];
    out.grads.layers[l].weights = grad * input.transpose();
    out.grads.layers[l].biases = grad.rowwise().sum();
    grad = model.layers[l].weights.transpose() * grad;
    if (l > 0) grad = (cache.pre_activations[l - 1].array() > 0.0).select(grad, 0.0);
  }

  // grad is now dL/d(standardized x); chain through scaling and |y|^2.
  const RealMatrix grad_x = grad.array().colwise() / model.scaler.stddev.array();
  const double amp = std::sqrt(transmit_power);
  const RealMatrix grad_z_re = 2.0 * amp * grad_x.cwiseProduct(cache.y_re);
  const RealMatrix grad_z_im = 2.0 * amp * grad_x.cwiseProduct(cache.y_im);

  const RealMatrix w_re = model.weights_real();
  const RealMatrix w_im = model.weights_imag();
  const RealMatrix a = cache.h_im * grad_z_re.transpose() - cache.h_re * grad_z_im.transpose();
  const RealMatrix c = cache.h_re * grad_z_re.transpose() + cache.h_im * grad_z_im.transpose();
  out.grads.theta = w_re.cwiseProduct(a) - w_im.cwiseProduct(c);
  return out;
}

// ---------------------------------------------------------------------------
// Labels and prediction
// ---------------------------------------------------------------------------

/// Optimal narrow beam of every channel (noiseless argmax, lowest index on ties).
inline std::vector<std::size_t> label_dataset(const ChannelDataset& dataset, const Codebook& narrow) {
  require(narrow.kind == CodebookKind::dft_narrow, "labels are defined on a narrow DFT codebook");
  require(dataset.size() > 0, "cannot label an empty dataset");
  std::vector<std::size_t> labels(dataset.size());
  for (std::size_t u = 0; u < dataset.size(); ++u) {
    const ComplexVector h = dataset.channels.col(static_cast<Eigen::Index>(u));
    const RealVector gains = beamforming_gains(narrow, h);
    require(gains.maxCoeff() > 0.0, "channel " + std::to_string(u) + " has no defined optimal beam");
    labels[u] = argmax(gains);
  }
  return labels;
}

/// Indices of the k largest scores, descending, lowest index first on ties.
inline std::vector<std::size_t> topk_indices(const RealVector& scores, std::size_t k) {
  require(k >= 1 && k <= static_cast<std::size_t>(scores.size()), "k out of range");
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
  });
  order.resize(k);
  return order;
}

/// Top-k beams from a raw measurement vector. Ranked by logits, which order
/// the same way as the posterior but without softmax rounding ties.
inline std::vector<std::size_t> predict_topk(const ProbingModel& model, const RealVector& measurement, std::size_t k) {
  require(static_cast<std::size_t>(measurement.size()) == model.num_probing(),
          "measurement length must equal the number of probing beams");
  require(k >= 1 && k <= model.num_classes(), "k out of range");
  ForwardCache cache;
  classify(model, RealMatrix(measurement), cache);
  return topk_indices(cache.logits.col(0), k);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t num_probing = 12;
  std::vector<std::size_t> hidden_sizes{256, 256};
  std::size_t epochs = 200;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t rng_seed = 0;
  double noise_power = 0.0;     // mW on the normalized scale
  double transmit_power = 10.0;  // mW
  bool train_with_noise = true;
  /// False keeps Theta fixed (a predetermined probing codebook).
  bool train_probing = true;

  void validate() const {
    require(num_probing >= 1, "num_probing must be positive");
    require(epochs >= 1 && batch_size >= 1, "epochs and batch_size must be positive");
    require(learning_rate > 0.0 && adam_eps > 0.0, "learning rate and eps must be positive");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "Adam betas must lie in [0, 1)");
    require(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0,
            "split fractions must be positive");
    require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) < 1e-9, "split fractions must sum to 1");
    require(noise_power >= 0.0 && transmit_power > 0.0, "invalid power settings");
    for (auto h : hidden_sizes) require(h >= 1, "hidden widths must be positive");
  }
};

struct DataSplit {
  std::vector<std::size_t> train, val, test;
};

/// Seeded 60/20/20-style permutation split; depends only on (n, fractions, seed).
inline DataSplit split_indices(std::size_t n, double train_fraction, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng(derive_key(seed, 0x5E1));
  shuffle(order, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
  DataSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train)));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(split.train.size()),
                   order.begin() + static_cast<std::ptrdiff_t>(split.train.size() + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(split.train.size() + n_val), order.end());
  return split;
}

inline DataSplit split_indices(std::size_t n, const TrainConfig& config) {
  return split_indices(n, config.train_fraction, config.val_fraction, config.rng_seed);
}

class AdamOptimizer {
 public:
  AdamOptimizer(const ProbingModel& model, double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_theta_ = RealMatrix::Zero(model.theta.rows(), model.theta.cols());
    v_theta_ = m_theta_;
    for (const auto& layer : model.layers) {
      m_layers_.push_back({RealMatrix::Zero(layer.weights.rows(), layer.weights.cols()),
                           RealVector::Zero(layer.biases.size())});
    }
    v_layers_ = m_layers_;
  }

  std::uint64_t steps() const { return step_; }

  void step(ProbingModel& model, const ModelGradients& grads, bool update_theta) {
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    if (update_theta) update(model.theta, grads.theta, m_theta_, v_theta_, c1, c2);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      update(model.layers[l].weights, grads.layers[l].weights, m_layers_[l].weights, v_layers_[l].weights, c1, c2);
      update(model.layers[l].biases, grads.layers[l].biases, m_layers_[l].biases, v_layers_[l].biases, c1, c2);
    }
  }

 private:
  template <typename Param, typename Grad>
  void update(Param& param, const Grad& grad, Param& m, Param& v, double c1, double c2) {
    m = beta1_ * m + (1.0 - beta1_) * grad;
    v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  double lr_, beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
  RealMatrix m_theta_, v_theta_;
  std::vector<DenseLayer> m_layers_, v_layers_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
};

struct TrainResult {
  ProbingModel model;
  std::vector<EpochRecord> history;
  DataSplit split;
};

namespace detail {

inline constexpr std::uint64_t kShuffleStream = 0x5F1;
inline constexpr std::uint64_t kTrainNoiseStream = 0x7A1;
inline constexpr std::uint64_t kValNoiseStream = 0x7A2;

inline ComplexMatrix gather_columns(const ComplexMatrix& source, std::span<const std::size_t> indices) {
  ComplexMatrix out(source.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = source.col(static_cast<Eigen::Index>(indices[j]));
  return out;
}

/// Noise for sample `index` in stream `key`: N_W complex Gaussian draws.
inline ComplexMatrix noise_columns(std::uint64_t key, std::span<const std::size_t> indices, std::size_t num_probing,
                                   double noise_power) {
  ComplexMatrix out(static_cast<Eigen::Index>(num_probing), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    RandomStream rng(derive_key(key, indices[j]));
    for (std::size_t i = 0; i < num_probing; ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.complex_normal(noise_power);
  }
  return out;
}

inline FeatureScaler fit_scaler(const RealMatrix& powers) {
  FeatureScaler s;
  const auto n = static_cast<double>(powers.cols());
  s.mean = powers.rowwise().mean();
  s.stddev = ((powers.colwise() - s.mean).array().square().rowwise().sum() / n).sqrt();
  for (Eigen::Index i = 0; i < s.stddev.size(); ++i) {
    if (!(s.stddev[i] > 1e-12 * std::max(1.0, std::abs(s.mean[i])))) s.stddev[i] = 1.0;
  }
  return s;
}

}  // namespace detail

/// Trains on the 60/20/20 split of a normalized dataset. Split, shuffling,
/// initialization and noise draws are all derived from config.rng_seed; the
/// final-epoch model is returned.
inline TrainResult train(const ChannelDataset& dataset, const Codebook& narrow, const TrainConfig& config,
                         const ProbingModel* initial = nullptr) {
  config.validate();
  require(dataset.normalized(), "training requires a normalized dataset");
  require(narrow.num_elements() == dataset.num_elements(), "codebook does not match dataset array size");
  const std::vector<std::size_t> labels = label_dataset(dataset, narrow);

  TrainResult result;
  result.split = split_indices(dataset.size(), config);
  const auto& split = result.split;
  require(split.train.size() >= config.batch_size && !split.val.empty() && !split.test.empty(),
          "dataset too small: the training split must hold at least one batch and val/test must be non-empty");

  ProbingModel model = initial ? *initial
                               : create_model(dataset.num_elements(), config.num_probing, narrow.num_beams(),
                                              config.hidden_sizes, config.rng_seed);
  model.seed = config.rng_seed;
  require(model.num_elements() == dataset.num_elements() && model.num_classes() == narrow.num_beams(),
          "initial model does not match dataset/codebook");
  const std::size_t n_w = model.num_probing();
  const double noise_power = config.train_with_noise ? config.noise_power : 0.0;
  const bool noisy = noise_power > 0.0;

  const ComplexMatrix train_h = detail::gather_columns(dataset.channels, split.train);
  const ComplexMatrix val_h = detail::gather_columns(dataset.channels, split.val);
  std::vector<std::size_t> val_labels;
  for (auto i : split.val) val_labels.push_back(labels[i]);
  const ComplexMatrix val_noise =
      noisy ? detail::noise_columns(derive_key(config.rng_seed, detail::kValNoiseStream), split.val, n_w, noise_power)
            : ComplexMatrix();

  AdamOptimizer adam(model, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
  std::vector<std::size_t> order(split.train.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t noise_key = derive_key(config.rng_seed, detail::kTrainNoiseStream, epoch);
    const ComplexMatrix epoch_noise =
        noisy ? detail::noise_columns(noise_key, split.train, n_w, noise_power) : ComplexMatrix();

    // Feature statistics for this epoch, from the current probing beams.
    ForwardCache stats_cache;
    probe_powers(model, train_h, epoch_noise, config.transmit_power, stats_cache);
    model.scaler = detail::fit_scaler(stats_cache.powers);

    std::iota(order.begin(), order.end(), std::size_t{0});
    RandomStream shuffle_rng(derive_key(config.rng_seed, detail::kShuffleStream, epoch));
    shuffle(order, shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      ComplexMatrix h = detail::gather_columns(train_h, batch);
      ComplexMatrix n = noisy ? detail::gather_columns(epoch_noise, batch) : ComplexMatrix();
      std::vector<std::size_t> y;
      for (auto j : batch) y.push_back(labels[split.train[j]]);
      const LossAndGradients lg = loss_and_gradients(model, h, y, n, config.transmit_power);
      loss_sum += lg.loss * static_cast<double>(batch.size());
      adam.step(model, lg.grads, config.train_probing);
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    const ForwardCache val = forward_batch(model, val_h, val_noise, config.transmit_power);
    rec.val_loss = cross_entropy(val.logits, val_labels);
    std::size_t correct = 0;
    for (Eigen::Index b = 0; b < val.logits.cols(); ++b) {
      if (argmax(RealVector(val.logits.col(b))) == val_labels[static_cast<std::size_t>(b)]) ++correct;
    }
    rec.val_top1 = static_cast<double>(correct) / static_cast<double>(val_labels.size());
    result.history.push_back(rec);
  }
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// BAMD model file (little-endian):
//   "BAMD" | u32 version=1 | u32 Nt | u32 N_W | u32 N_V | u32 hidden count |
//   u32 hidden sizes... | u64 seed |
//   Theta (Nt x N_W, row-major) |
//   per layer: weights (out x in, row-major), biases |
//   scaler mean (N_W) | scaler std (N_W)
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

inline void write_matrix(io::LittleEndianWriter& w, const RealMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
  }
}

inline RealMatrix read_matrix(io::LittleEndianReader& r, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
  RealMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f64(field);
  }
  return m;
}

}  // namespace detail

inline void write_model(std::ostream& out, const ProbingModel& model) {
  model.validate();
  io::LittleEndianWriter w(out);
  w.bytes("BAMD");
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.num_elements()));
  w.u32(static_cast<std::uint32_t>(model.num_probing()));
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  const auto hidden = model.hidden_sizes();
  w.u32(static_cast<std::uint32_t>(hidden.size()));
  for (auto h : hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u64(model.seed);
  detail::write_matrix(w, model.theta);
  for (const auto& layer : model.layers) {
    detail::write_matrix(w, layer.weights);
    detail::write_matrix(w, layer.biases);
  }
  detail::write_matrix(w, model.scaler.mean);
  detail::write_matrix(w, model.scaler.stddev);
}

inline ProbingModel read_model(std::istream& in) {
  io::LittleEndianReader r(in);
  if (r.bytes(4, "magic") != "BAMD") throw FormatError("bad magic: expected \"BAMD\"");
  const std::uint32_t version = r.u32("version");
  if (version != kModelFormatVersion) throw FormatError("unsupported version " + std::to_string(version));
  const auto nt = static_cast<Eigen::Index>(r.u32("num_elements"));
  const auto n_w = static_cast<Eigen::Index>(r.u32("num_probing"));
  const auto n_v = static_cast<Eigen::Index>(r.u32("num_classes"));
  if (nt == 0 || n_w == 0 || n_v == 0) throw FormatError("invalid model dimensions");
  const std::uint32_t n_hidden = r.u32("hidden count");
  if (n_hidden > 64) throw FormatError("invalid hidden count " + std::to_string(n_hidden));
  std::vector<Eigen::Index> widths{n_w};
  for (std::uint32_t i = 0; i < n_hidden; ++i) {
    const auto h = static_cast<Eigen::Index>(r.u32("hidden size"));
    if (h == 0) throw FormatError("invalid hidden size 0");
    widths.push_back(h);
  }
  widths.push_back(n_v);
  ProbingModel m;
  m.seed = r.u64("seed");
  m.theta = detail::read_matrix(r, nt, n_w, "theta");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.weights = detail::read_matrix(r, widths[l + 1], widths[l], "layer weights");
    layer.biases = detail::read_matrix(r, widths[l + 1], 1, "layer biases");
    m.layers.push_back(std::move(layer));
  }
  m.scaler.mean = detail::read_matrix(r, n_w, 1, "scaler mean");
  m.scaler.stddev = detail::read_matrix(r, n_w, 1, "scaler std");
  if (!r.at_end()) throw FormatError("trailing bytes after model payload");
  m.validate();
  return m;
}

inline void save_model(const ProbingModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_model(out, model);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline ProbingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file not found: " + path.string());
  return read_model(in);
}

}  // namespace beamprobe
