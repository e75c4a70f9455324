#pragma once

// Noisy beam-sweep measurements and the five beam-selection strategies:
// the learned-probing method, exhaustive search, 2-tier and binary
// hierarchical search, and the noiseless genie.

#include "beamprobe/channel.hpp"
#include "beamprobe/codebooks.hpp"
#include "beamprobe/core.hpp"
#include "beamprobe/learning.hpp"
#include "beamprobe/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace beamprobe {

struct NoiseModel {
  double noise_power = 0.0;  // mW on the normalized scale
  std::uint64_t rng_seed = 0;
};

/// Stream id of stage `stage` (probing sweep, re-sweep, hierarchy tier) of
/// the sample with stream id `sample_stream`.
inline std::uint64_t stage_stream(std::uint64_t sample_stream, std::uint64_t stage) {
  return derive_key(sample_stream, stage);
}

/// Received powers |sqrt(P_T) h^H w_i + n_i|^2 for the listed beams, with
/// fresh noise per beam drawn in list order from stream (seed, stream_id).
/// With zero noise the result is exactly P_T |h^H w_i|^2.
inline RealVector measure_beams(const ComplexVector& h, const Codebook& codebook, std::span<const std::size_t> beams,
                                double transmit_power, const NoiseModel& noise, std::uint64_t stream_id) {
  require(static_cast<std::size_t>(h.size()) == codebook.num_elements(), "channel length does not match codebook");
  require(noise.noise_power >= 0.0, "noise power must be >= 0");
  require(transmit_power > 0.0, "transmit power must be positive");
  RealVector x(static_cast<Eigen::Index>(beams.size()));
  if (noise.noise_power == 0.0) {
    for (std::size_t i = 0; i < beams.size(); ++i) {
      require(beams[i] < codebook.num_beams(), "beam index out of range");
      x[static_cast<Eigen::Index>(i)] =
          transmit_power * std::norm(beam_response(codebook.weights.col(static_cast<Eigen::Index>(beams[i])), h));
    }
    return x;
  }
  RandomStream rng(derive_key(noise.rng_seed, stream_id));
  const double amp = std::sqrt(transmit_power);
  for (std::size_t i = 0; i < beams.size(); ++i) {
    require(beams[i] < codebook.num_beams(), "beam index out of range");
    const Complex y = amp * beam_response(codebook.weights.col(static_cast<Eigen::Index>(beams[i])), h) +
                      rng.complex_normal(noise.noise_power);
    x[static_cast<Eigen::Index>(i)] = std::norm(y);
  }
  return x;
}

inline std::vector<std::size_t> all_beams(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

inline RealVector measure(const ComplexVector& h, const Codebook& codebook, double transmit_power,
                          const NoiseModel& noise, std::uint64_t stream_id) {
  const auto beams = all_beams(codebook.num_beams());
  return measure_beams(h, codebook, beams, transmit_power, noise, stream_id);
}

/// Beam with the largest measured power; ties go to the lowest beam index.
inline std::size_t select_best(std::span<const std::size_t> beams, const RealVector& powers) {
  require(!beams.empty() && static_cast<std::size_t>(powers.size()) == beams.size(), "nothing to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < beams.size(); ++i) {
    const double p = powers[static_cast<Eigen::Index>(i)];
    const double q = powers[static_cast<Eigen::Index>(best)];
    if (strictly_greater(p, q) || (!strictly_greater(q, p) && beams[i] < beams[best])) best = i;
  }
  return beams[best];
}

inline AlignmentOutcome genie_select(const ComplexVector& h, const Codebook& narrow) {
  const RealVector gains = beamforming_gains(narrow, h);
  require(gains.maxCoeff() > 0.0, "zero channel has no optimal beam");
  const std::size_t best = argmax(gains);
  return {best, 0, StrategyKind::genie, {best}};
}

inline AlignmentOutcome exhaustive_search(const ComplexVector& h, const Codebook& narrow, double transmit_power,
                                          const NoiseModel& noise, std::uint64_t stream_id = 0) {
  const auto beams = all_beams(narrow.num_beams());
  const RealVector x = measure_beams(h, narrow, beams, transmit_power, noise, stage_stream(stream_id, 0));
  const std::size_t best = select_best(beams, x);
  return {best, beams.size(), StrategyKind::exhaustive, {best}};
}

struct DescentResult {
  std::size_t leaf_beam = 0;
  std::size_t beams_swept = 0;
};

/// Generic hierarchical descent. `probe(tier, beams)` returns one power per
/// listed beam; all of tier 0 is probed, then the children of each tier's
/// winner, down to the leaf tier.
template <typename Probe>
DescentResult hierarchical_descent(const HierarchicalCodebook& hierarchy, Probe&& probe) {
  hierarchy.validate();
  std::vector<std::size_t> candidates = all_beams(hierarchy.tiers.front().codebook.num_beams());
  DescentResult out;
  for (std::size_t t = 0; t < hierarchy.tiers.size(); ++t) {
    const RealVector powers = probe(t, std::span<const std::size_t>(candidates));
    require(static_cast<std::size_t>(powers.size()) == candidates.size(), "probe returned the wrong number of powers");
    out.beams_swept += candidates.size();
    const std::size_t best = select_best(candidates, powers);
    if (t + 1 == hierarchy.tiers.size()) {
      out.leaf_beam = best;
      break;
    }
    candidates = hierarchy.tiers[t].children[best];
  }
  return out;
}

namespace detail {

inline auto codebook_probe(const ComplexVector& h, const HierarchicalCodebook& hierarchy, double transmit_power,
                           const NoiseModel& noise, std::uint64_t stream_id) {
  return [&, transmit_power, stream_id](std::size_t tier, std::span<const std::size_t> beams) {
    return measure_beams(h, hierarchy.tiers[tier].codebook, beams, transmit_power, noise, stage_stream(stream_id, tier));
  };
}

}  // namespace detail

inline AlignmentOutcome two_tier_search(const ComplexVector& h, const HierarchicalCodebook& hierarchy,
                                        double transmit_power, const NoiseModel& noise, std::uint64_t stream_id = 0) {
  require(hierarchy.kind == HierarchyKind::two_tier && hierarchy.tiers.size() == 2,
          "2-tier search needs a two-tier hierarchy");
  const auto r = hierarchical_descent(hierarchy, detail::codebook_probe(h, hierarchy, transmit_power, noise, stream_id));
  return {r.leaf_beam, r.beams_swept, StrategyKind::two_tier, {r.leaf_beam}};
}

inline void validate_binary_tree(const HierarchicalCodebook& hierarchy) {
  require(hierarchy.kind == HierarchyKind::binary_tree, "binary search needs a binary-tree hierarchy");
  hierarchy.validate();
  require(hierarchy.tiers.front().codebook.num_beams() == 2, "binary tree root tier must hold two beams");
  for (std::size_t t = 0; t + 1 < hierarchy.tiers.size(); ++t) {
    for (const auto& kids : hierarchy.tiers[t].children) require(kids.size() == 2, "binary tree node without two children");
  }
}

inline AlignmentOutcome binary_search(const ComplexVector& h, const HierarchicalCodebook& hierarchy,
                                      double transmit_power, const NoiseModel& noise, std::uint64_t stream_id = 0) {
  validate_binary_tree(hierarchy);
  const auto r = hierarchical_descent(hierarchy, detail::codebook_probe(h, hierarchy, transmit_power, noise, stream_id));
  return {r.leaf_beam, r.beams_swept, StrategyKind::binary, {r.leaf_beam}};
}

/// A trained model together with its exported probing codebook.
struct ProbingDeployment {
  const ProbingModel* model;
  Codebook probing;

  explicit ProbingDeployment(const ProbingModel& m) : model(&m), probing(export_probing_codebook(m)) {}
};

/// Sweeps the probing codebook, predicts the top-k narrow beams and, for
/// k > 1, re-measures those beams with fresh noise and keeps the strongest.
inline AlignmentOutcome proposed_search(const ComplexVector& h, const ProbingDeployment& deployment,
                                        const Codebook& narrow, std::size_t k, double transmit_power,
                                        const NoiseModel& noise, std::uint64_t stream_id = 0) {
  const ProbingModel& model = *deployment.model;
  require(k >= 1 && k <= model.num_classes(), "k must lie in [1, N_V]");
  require(narrow.num_beams() == model.num_classes(), "narrow codebook does not match the model's classes");
  const RealVector x = measure(h, deployment.probing, transmit_power, noise, stage_stream(stream_id, 0));
  AlignmentOutcome out;
  out.strategy = StrategyKind::proposed;
  out.candidates = predict_topk(model, x, k);
  out.beams_swept = model.num_probing();
  if (k == 1) {
    out.selected_beam = out.candidates.front();
    return out;
  }
  const RealVector y = measure_beams(h, narrow, out.candidates, transmit_power, noise, stage_stream(stream_id, 1));
  out.selected_beam = select_best(out.candidates, y);
  out.beams_swept += k;
  return out;
}

inline AlignmentOutcome proposed_search(const ComplexVector& h, const ProbingModel& model, const Codebook& narrow,
                                        std::size_t k, double transmit_power, const NoiseModel& noise,
                                        std::uint64_t stream_id = 0) {
  return proposed_search(h, ProbingDeployment(model), narrow, k, transmit_power, noise, stream_id);
}

// ---------------------------------------------------------------------------
// Dataset evaluation
// ---------------------------------------------------------------------------

struct GenieStrategy {};
struct ExhaustiveStrategy {};
struct HierarchicalStrategy {
  const HierarchicalCodebook* hierarchy;
};
struct ProposedStrategy {
  const ProbingDeployment* deployment;
  std::size_t k = 1;
};
using Strategy = std::variant<GenieStrategy, ExhaustiveStrategy, HierarchicalStrategy, ProposedStrategy>;

struct EvaluationSetup {
  double transmit_power = 10.0;  // mW
  NoiseModel noise;
  /// Noise power used to express achieved SNR; independent of the
  /// measurement noise.
  double snr_reference_noise = 0.0;
};

/// Runs one strategy on the given sample of a normalized dataset.
/// Sample u uses stream id u, so its outcome does not depend on which
/// other samples are evaluated.
inline AlignmentOutcome align_sample(const ComplexVector& h, const Codebook& narrow, const Strategy& strategy,
                                     const EvaluationSetup& setup, std::uint64_t stream_id) {
  return std::visit(
      [&](const auto& s) -> AlignmentOutcome {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, GenieStrategy>) {
          return genie_select(h, narrow);
        } else if constexpr (std::is_same_v<S, ExhaustiveStrategy>) {
          return exhaustive_search(h, narrow, setup.transmit_power, setup.noise, stream_id);
        } else if constexpr (std::is_same_v<S, HierarchicalStrategy>) {
          return s.hierarchy->kind == HierarchyKind::two_tier
                     ? two_tier_search(h, *s.hierarchy, setup.transmit_power, setup.noise, stream_id)
                     : binary_search(h, *s.hierarchy, setup.transmit_power, setup.noise, stream_id);
        } else {
          return proposed_search(h, *s.deployment, narrow, s.k, setup.transmit_power, setup.noise, stream_id);
        }
      },
      strategy);
}

inline StrategyKind strategy_kind(const Strategy& strategy) {
  return std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, GenieStrategy>) return StrategyKind::genie;
        else if constexpr (std::is_same_v<S, ExhaustiveStrategy>) return StrategyKind::exhaustive;
        else if constexpr (std::is_same_v<S, HierarchicalStrategy>)
          return s.hierarchy->kind == HierarchyKind::two_tier ? StrategyKind::two_tier : StrategyKind::binary;
        else return StrategyKind::proposed;
      },
      strategy);
}

inline ExperimentResult evaluate_strategy(const ChannelDataset& dataset, std::span<const std::size_t> labels,
                                          std::span<const std::size_t> indices, const Codebook& narrow,
                                          const Strategy& strategy, const EvaluationSetup& setup,
                                          std::vector<AlignmentOutcome>* outcomes_out = nullptr) {
  require(labels.size() == dataset.size(), "labels must cover the dataset");
  require(!indices.empty(), "nothing to evaluate");
  require(setup.snr_reference_noise > 0.0, "SNR reference noise must be positive");

  std::vector<AlignmentOutcome> outcomes;
  std::vector<std::size_t> sample_labels;
  std::vector<double> snrs;
  double optimal_snr_sum = 0.0;
  double swept_sum = 0.0;
  for (auto u : indices) {
    require(u < dataset.size(), "sample index out of range");
    const ComplexVector h = dataset.channels.col(static_cast<Eigen::Index>(u));
    AlignmentOutcome o = align_sample(h, narrow, strategy, setup, u);
    const RealVector gains = beamforming_gains(narrow, h);
    snrs.push_back(snr_db(gains[static_cast<Eigen::Index>(o.selected_beam)], setup.transmit_power,
                          setup.snr_reference_noise));
    optimal_snr_sum += snr_db(gains[static_cast<Eigen::Index>(labels[u])], setup.transmit_power,
                              setup.snr_reference_noise);
    swept_sum += static_cast<double>(o.beams_swept);
    sample_labels.push_back(labels[u]);
    outcomes.push_back(std::move(o));
  }

  ExperimentResult r;
  r.strategy = strategy_kind(strategy);
  r.sample_count = outcomes.size();
  const auto n = static_cast<double>(outcomes.size());
  r.post_sweep_accuracy = accuracy(outcomes, sample_labels);
  r.top1_accuracy = containment_accuracy(outcomes, sample_labels, 1);
  r.topk_containment_accuracy = containment_accuracy(outcomes, sample_labels, outcomes.front().candidates.size());
  double snr_sum = 0.0;
  for (double s : snrs) snr_sum += s;
  r.mean_snr_db = snr_sum / n;
  r.snr_p10_db = percentile(snrs, 10.0);
  r.snr_p50_db = percentile(snrs, 50.0);
  r.snr_p90_db = percentile(snrs, 90.0);
  r.mean_optimal_snr_db = optimal_snr_sum / n;
  r.mean_beams_swept = swept_sum / n;
  r.num_elements = dataset.num_elements();
  r.num_narrow = narrow.num_beams();
  r.transmit_power = setup.transmit_power;
  r.noise_power = setup.noise.noise_power;
  r.noise_seed = setup.noise.rng_seed;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, HierarchicalStrategy>) {
          if (s.hierarchy->kind == HierarchyKind::two_tier) r.num_probing = s.hierarchy->tiers.front().codebook.num_beams();
        } else if constexpr (std::is_same_v<S, ProposedStrategy>) {
          r.num_probing = s.deployment->model->num_probing();
          r.k = s.k;
        }
      },
      strategy);
  if (outcomes_out) *outcomes_out = std::move(outcomes);
  return r;
}

struct DegradationPoint {
  double noise_power = 0.0;
  double mean_optimal_snr_db = 0.0;
  double accuracy = 0.0;
  double accuracy_drop = 0.0;
};

/// Accuracy loss relative to noiseless measurement at each noise level,
/// against the mean SNR of the optimal narrow beams at that level.
inline std::vector<DegradationPoint> accuracy_degradation_curve(const ChannelDataset& dataset,
                                                                std::span<const std::size_t> labels,
                                                                std::span<const std::size_t> indices,
                                                                const Codebook& narrow, const Strategy& strategy,
                                                                double transmit_power, std::uint64_t noise_seed,
                                                                std::span<const double> noise_levels) {
  require(!noise_levels.empty(), "noise level list is empty");
  EvaluationSetup clean{transmit_power, {0.0, noise_seed}, 1.0};
  const double base = evaluate_strategy(dataset, labels, indices, narrow, strategy, clean).post_sweep_accuracy;
  std::vector<DegradationPoint> curve;
  for (double level : noise_levels) {
    require(level >= 0.0, "noise levels must be >= 0");
    DegradationPoint p;
    p.noise_power = level;
    EvaluationSetup setup{transmit_power, {level, noise_seed}, level > 0.0 ? level : 1.0};
    const ExperimentResult r = evaluate_strategy(dataset, labels, indices, narrow, strategy, setup);
    p.accuracy = r.post_sweep_accuracy;
    p.accuracy_drop = base - r.post_sweep_accuracy;
    p.mean_optimal_snr_db = level > 0.0 ? r.mean_optimal_snr_db : std::numeric_limits<double>::infinity();
    curve.push_back(p);
  }
  return curve;
}

}  // namespace beamprobe
