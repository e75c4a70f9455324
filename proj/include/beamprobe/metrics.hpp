#pragma once

// Accuracy, SNR, sweep/feedback complexity and clustering quality.

#include "beamprobe/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace beamprobe {

enum class StrategyKind { proposed, exhaustive, two_tier, binary, genie };

inline std::string to_string(StrategyKind s) {
  switch (s) {
    case StrategyKind::proposed: return "proposed";
    case StrategyKind::exhaustive: return "exhaustive";
    case StrategyKind::two_tier: return "two_tier";
    case StrategyKind::binary: return "binary";
    case StrategyKind::genie: return "genie";
  }
  return "unknown";
}

inline StrategyKind strategy_from_string(const std::string& s) {
  if (s == "proposed") return StrategyKind::proposed;
  if (s == "exhaustive") return StrategyKind::exhaustive;
  if (s == "two_tier") return StrategyKind::two_tier;
  if (s == "binary") return StrategyKind::binary;
  if (s == "genie") return StrategyKind::genie;
  throw DomainError("unknown strategy \"" + s + "\"");
}

struct AlignmentOutcome {
  std::size_t selected_beam = 0;
  std::size_t beams_swept = 0;
  StrategyKind strategy = StrategyKind::genie;
  /// Ranked candidate beams (top-k prediction for the proposed method,
  /// the selected beam otherwise).
  std::vector<std::size_t> candidates;
};

struct ExperimentResult {
  StrategyKind strategy = StrategyKind::genie;
  double top1_accuracy = 0.0;
  double topk_containment_accuracy = 0.0;
  double post_sweep_accuracy = 0.0;
  double mean_snr_db = 0.0;
  double snr_p10_db = 0.0;
  double snr_p50_db = 0.0;
  double snr_p90_db = 0.0;
  double mean_optimal_snr_db = 0.0;
  double mean_beams_swept = 0.0;
  std::size_t sample_count = 0;
  // Configuration echo.
  std::size_t num_elements = 0;
  std::size_t num_narrow = 0;
  std::size_t num_probing = 0;  // N_W (probing or wide beams); 0 when unused
  std::size_t k = 1;
  double transmit_power = 0.0;  // mW
  double noise_power = 0.0;     // mW, normalized scale
  std::uint64_t noise_seed = 0;
};

/// 10 log10(P_T gain / noise). gain = 0 maps to -infinity.
inline double snr_db(double gain, double transmit_power, double noise_power) {
  require(noise_power > 0.0, "SNR needs a positive noise power");
  require(gain >= 0.0 && transmit_power > 0.0, "gain must be >= 0 and transmit power > 0");
  if (gain == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(transmit_power * gain / noise_power);
}

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

/// Thermal noise power in dBm from a PSD (dBm/Hz) and bandwidth (Hz).
inline double noise_power_dbm(double psd_dbm_per_hz, double bandwidth_hz) {
  require(bandwidth_hz > 0.0, "bandwidth must be positive");
  return psd_dbm_per_hz + 10.0 * std::log10(bandwidth_hz);
}

inline double accuracy(std::span<const AlignmentOutcome> outcomes, std::span<const std::size_t> labels) {
  require(outcomes.size() == labels.size(), "outcome and label counts differ");
  require(!outcomes.empty(), "accuracy of an empty evaluation");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) hits += outcomes[i].selected_beam == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

/// Fraction of samples whose label is among the first k candidates.
inline double containment_accuracy(std::span<const AlignmentOutcome> outcomes, std::span<const std::size_t> labels,
                                   std::size_t k) {
  require(outcomes.size() == labels.size(), "outcome and label counts differ");
  require(!outcomes.empty(), "accuracy of an empty evaluation");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& c = outcomes[i].candidates;
    const auto end = c.begin() + static_cast<std::ptrdiff_t>(std::min(k, c.size()));
    hits += std::find(c.begin(), end, labels[i]) != end ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

namespace detail {

inline std::size_t exact_log2(std::size_t n) {
  require(n >= 1 && std::has_single_bit(n), "value must be a power of two");
  return static_cast<std::size_t>(std::countr_zero(n));
}

}  // namespace detail

/// Beam slots needed to align K UEs.
inline std::size_t sweep_complexity(StrategyKind strategy, std::size_t num_ues, std::size_t num_narrow,
                                    std::size_t num_probing, std::size_t k) {
  require(num_ues >= 1, "need at least one UE");
  require(num_narrow >= 1, "narrow codebook must be non-empty");
  switch (strategy) {
    case StrategyKind::proposed:
      require(num_probing >= 1, "proposed method needs probing beams");
      require(k >= 1 && k <= num_narrow, "k must lie in [1, N_V]");
      return num_probing + (k > 1 ? num_ues * k : 0);
    case StrategyKind::two_tier:
      require(num_probing >= 2 && num_narrow % num_probing == 0, "N_W must divide N_V");
      return num_probing + num_ues * (num_narrow / num_probing);
    case StrategyKind::binary:
      require(num_narrow >= 2, "binary search needs N_V >= 2");
      return 2 + 2 * num_ues * detail::exact_log2(num_narrow / 2);
    case StrategyKind::exhaustive:
      return num_narrow;
    case StrategyKind::genie:
      return 0;
  }
  throw DomainError("unknown strategy");
}

struct FeedbackComplexity {
  std::size_t power_reports = 0;
  std::size_t beam_indices = 0;
  bool operator==(const FeedbackComplexity&) const = default;
};

inline FeedbackComplexity feedback_complexity(StrategyKind strategy, std::size_t num_ues, std::size_t num_probing,
                                              std::size_t num_narrow, std::size_t k) {
  switch (strategy) {
    case StrategyKind::proposed: return {num_ues * num_probing, k > 1 ? num_ues : 0};
    case StrategyKind::two_tier: return {0, 2 * num_ues};
    case StrategyKind::binary: return {0, num_ues * detail::exact_log2(num_narrow)};
    case StrategyKind::exhaustive: return {0, num_ues};
    case StrategyKind::genie: return {0, 0};
  }
  throw DomainError("unknown strategy");
}

/// Mean silhouette coefficient with Euclidean distance. Rows of `features`
/// are samples. Samples alone in their cluster contribute 0.
inline double silhouette(const RealMatrix& features, std::span<const std::size_t> labels) {
  const auto m = static_cast<std::size_t>(features.rows());
  require(m >= 2, "silhouette needs at least two samples");
  require(labels.size() == m, "label count does not match feature rows");

  std::map<std::size_t, std::size_t> compact;
  for (auto y : labels) compact.emplace(y, compact.size());
  require(compact.size() >= 2, "silhouette needs at least two distinct labels");
  std::vector<std::size_t> cluster(m);
  std::vector<std::size_t> cluster_size(compact.size(), 0);
  for (std::size_t i = 0; i < m; ++i) {
    cluster[i] = compact.at(labels[i]);
    ++cluster_size[cluster[i]];
  }

  double total = 0.0;
  std::vector<double> sums(compact.size());
  for (std::size_t i = 0; i < m; ++i) {
    if (cluster_size[cluster[i]] < 2) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      sums[cluster[j]] += (features.row(static_cast<Eigen::Index>(i)) - features.row(static_cast<Eigen::Index>(j))).norm();
    }
    const double a = sums[cluster[i]] / static_cast<double>(cluster_size[cluster[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c == cluster[i]) continue;
      b = std::min(b, sums[c] / static_cast<double>(cluster_size[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(m);
}

/// Linear-interpolated percentile (q in [0, 100]) of a copy of `values`.
inline double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace beamprobe
