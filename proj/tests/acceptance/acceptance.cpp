// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "beamprobe/experiment.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace beamprobe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << what << " [" << detail << "]" << std::endl;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

void gradient_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    RandomStream rng(derive_key(0x6AD, inst));
    ProbingModel m = create_model(8, 4, 16, {32, 32}, derive_key(0x6AE, inst));
    for (Eigen::Index i = 0; i < m.scaler.mean.size(); ++i) {
      m.scaler.mean[i] = rng.uniform(0.0, 1.0);
      m.scaler.stddev[i] = rng.uniform(0.2, 1.0);
    }
    for (auto& layer : m.layers) {
      for (auto& b : layer.biases) b = rng.uniform(-0.1, 0.1);
    }
    ComplexMatrix h(8, 8), n(4, 8);
    std::vector<std::vector<oracle::cd>> hs, ns;
    std::vector<std::size_t> y;
    for (Eigen::Index j = 0; j < 8; ++j) {
      for (Eigen::Index i = 0; i < 8; ++i) h(i, j) = rng.complex_normal(1.0);
      for (Eigen::Index i = 0; i < 4; ++i) n(i, j) = rng.complex_normal(0.05);
      hs.push_back(oracle::to_std(h.col(j)));
      ns.push_back(oracle::to_std(n.col(j)));
      y.push_back(rng.below(16));
    }
    const double p_t = 2.0;
    const LossAndGradients lg = loss_and_gradients(m, h, y, n, p_t);
    auto check = [&](double analytic, double& param) {
      bool kink = false;
      const double fd = oracle::finite_difference(m, param, hs, y, ns, p_t, 1e-6, &kink);
      const double err = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
      worst = std::max(worst, err);
      ++checked;
      kinks += kink ? 1 : 0;
    };
    for (Eigen::Index i = 0; i < m.theta.size(); ++i) check(lg.grads.theta.data()[i], m.theta.data()[i]);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      for (Eigen::Index i = 0; i < m.layers[l].weights.size(); ++i) {
        check(lg.grads.layers[l].weights.data()[i], m.layers[l].weights.data()[i]);
      }
      for (Eigen::Index i = 0; i < m.layers[l].biases.size(); ++i) {
        check(lg.grads.layers[l].biases[i], m.layers[l].biases[i]);
      }
    }
  }
  const double t = seconds_since(t0);
  report(1, worst < 1e-4 && t < 10.0, "gradients match central finite differences",
         std::to_string(checked) + " entries, max rel err " + fmt("%.3g", worst) + ", one-sided at ReLU kinks " +
             std::to_string(kinks) + ", " + fmt("%.2f s", t));
}

void genie_equivalence() {
  RunConfig c = preset_config("full");
  c.seed = 2;
  const ChannelDataset ds = normalize_dataset(generate_dataset(c.scene(), 1000, c.array)).dataset;
  const Codebook narrow = dft_codebook(c.array, c.num_narrow);
  std::size_t match = 0;
  for (std::size_t u = 0; u < ds.size(); ++u) {
    const ComplexVector h = ds.channels.col(static_cast<Eigen::Index>(u));
    match += exhaustive_search(h, narrow, 10.0, {0.0, 0}, u).selected_beam == genie_select(h, narrow).selected_beam;
  }
  report(2, match == 1000, "noiseless exhaustive search equals genie",
         std::to_string(match) + "/1000, Nt=64, N_V=128, seed 2");
}

void complexity_table() {
  bool ok = true;
  ok &= sweep_complexity(StrategyKind::proposed, 10, 128, 12, 3) == 42;
  ok &= sweep_complexity(StrategyKind::binary, 10, 128, 0, 1) == 122;
  ok &= sweep_complexity(StrategyKind::two_tier, 10, 128, 16, 1) == 96;
  ok &= sweep_complexity(StrategyKind::exhaustive, 10, 128, 0, 1) == 128;
  ok &= feedback_complexity(StrategyKind::proposed, 10, 12, 128, 3) == FeedbackComplexity{120, 10};
  ok &= feedback_complexity(StrategyKind::two_tier, 10, 16, 128, 1) == FeedbackComplexity{0, 20};
  ok &= feedback_complexity(StrategyKind::binary, 10, 0, 128, 1) == FeedbackComplexity{0, 70};
  ok &= feedback_complexity(StrategyKind::exhaustive, 10, 0, 128, 1) == FeedbackComplexity{0, 10};
  const double ratio = 100.0 * 42.0 / 122.0;
  ok &= std::round(ratio * 10.0) / 10.0 == 34.4 && ratio <= 35.4;
  report(3, ok, "sweep and feedback complexity rows", "42/122/96/128, ratio " + fmt("%.1f%%", ratio));
}

void noise_power() {
  const double dbm = noise_power_dbm(-161.0, 100e6);
  report(4, dbm == -81.0, "thermal noise floor", fmt("%.17g dBm", dbm));
}

// ---------------------------------------------------------------------------
// Desk-scale run shared by criteria 5, 6, 7, 9.

struct DeskRun {
  RunConfig config;
  ChannelDataset dataset;
  Codebook narrow;
  std::vector<std::size_t> labels;
  double transmit_power = 0.0;
  double noise = 0.0;  // normalized
  TrainResult learned, dft;
  double seconds = 0.0;
};

DeskRun desk_run() {
  const auto t0 = Clock::now();
  DeskRun r;
  r.config = preset_config("desk");
  r.config.seed = 1;
  const RunConfig& c = r.config;
  NormalizedDataset nd = normalize_dataset(generate_dataset(c.scene(), c.num_samples, c.array));
  const double factor = *nd.dataset.normalization_factor;
  r.dataset = std::move(nd.dataset);
  r.narrow = dft_codebook(c.array, c.num_narrow);
  r.labels = label_dataset(r.dataset, r.narrow);
  r.transmit_power = dbm_to_mw(c.radio.transmit_power_dbm);
  r.noise = dbm_to_mw(c.radio.noise_dbm()) / (factor * factor);

  const std::size_t n_w = c.sweep.num_probing.front();
  TrainConfig tc = c.train_config(n_w, r.noise);
  r.learned = train(r.dataset, r.narrow, tc);
  tc.train_probing = false;
  ProbingModel init = create_model(c.array.num_elements, n_w, c.num_narrow, tc.hidden_sizes, tc.rng_seed);
  set_probing_codebook(init, subsampled_dft_codebook(c.array, c.num_narrow, n_w));
  r.dft = train(r.dataset, r.narrow, tc, &init);
  r.seconds = seconds_since(t0);
  return r;
}

RealMatrix standardized_features(const DeskRun& r, const ProbingModel& m, const std::vector<std::size_t>& idx) {
  const Codebook probing = export_probing_codebook(m);
  const NoiseModel noise{r.noise, r.config.noise_seed()};
  RealMatrix x(static_cast<Eigen::Index>(m.num_probing()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = measure(r.dataset.channels.col(static_cast<Eigen::Index>(idx[j])), probing,
                                                  r.transmit_power, noise, stage_stream(idx[j], 0));
  }
  return m.scaler.apply(x).transpose();
}

void learned_vs_dft(const DeskRun& r, double& learned_sil, double& dft_sil) {
  const auto& test = r.learned.split.test;
  const EvaluationSetup setup{r.transmit_power, {r.noise, r.config.noise_seed()}, r.noise};
  const ProbingDeployment learned(r.learned.model), dft(r.dft.model);
  const double acc_l =
      evaluate_strategy(r.dataset, r.labels, test, r.narrow, ProposedStrategy{&learned, 1}, setup).top1_accuracy;
  const double acc_d =
      evaluate_strategy(r.dataset, r.labels, test, r.narrow, ProposedStrategy{&dft, 1}, setup).top1_accuracy;
  const double gap = 100.0 * (acc_l - acc_d);
  report(5, gap >= 5.0 && r.seconds < 600.0, "learned probing beats DFT-subsampled probing by >= 5 pp",
         "learned " + fmt("%.4f", acc_l) + ", dft " + fmt("%.4f", acc_d) + ", gap " + fmt("%.2f pp", gap) +
             ", Nt=16, N_V=32, N_W=6, 20000 samples, seed 1, " + fmt("%.0f s", r.seconds));

  std::vector<std::size_t> test_labels;
  for (auto u : test) test_labels.push_back(r.labels[u]);
  learned_sil = silhouette(standardized_features(r, r.learned.model, test), test_labels);
  dft_sil = silhouette(standardized_features(r, r.dft.model, test), test_labels);
  report(6, learned_sil > dft_sil, "silhouette of learned features exceeds DFT features",
         "learned " + fmt("%.4f", learned_sil) + ", dft " + fmt("%.4f", dft_sil));
}

void topk_containment(const DeskRun& r) {
  const auto& test = r.learned.split.test;
  const EvaluationSetup setup{r.transmit_power, {r.noise, r.config.noise_seed()}, r.noise};
  const ProbingDeployment dep(r.learned.model);
  std::vector<double> acc;
  std::string detail;
  const std::size_t n_v = r.config.num_narrow;
  for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{3}, n_v}) {
    acc.push_back(evaluate_strategy(r.dataset, r.labels, test, r.narrow, ProposedStrategy{&dep, k}, setup)
                      .topk_containment_accuracy);
    detail += "k=" + std::to_string(k) + " " + fmt("%.4f", acc.back()) + (k == n_v ? "" : ", ");
  }
  const bool ok = std::is_sorted(acc.begin(), acc.end()) && acc.back() == 1.0;
  report(7, ok, "top-k containment non-decreasing and 1.0 at k=N_V", detail);
}

void baseline_ordering(const DeskRun& r) {
  const auto& test = r.learned.split.test;
  double ref = 0.0;
  for (auto u : test) {
    const RealVector g = beamforming_gains(r.narrow, r.dataset.channels.col(static_cast<Eigen::Index>(u)));
    ref += snr_db(g[static_cast<Eigen::Index>(r.labels[u])], r.transmit_power, 1.0);
  }
  ref /= static_cast<double>(test.size());
  const double noise = db_to_linear(ref - 15.0);
  const EvaluationSetup setup{r.transmit_power, {noise, r.config.noise_seed()}, noise};
  const HierarchicalCodebook two = build_two_tier(r.config.array, r.config.num_narrow, r.config.sweep.two_tier_wide.front());
  const HierarchicalCodebook bin = build_binary_tree(r.config.array, r.config.num_narrow);
  const ExperimentResult ex = evaluate_strategy(r.dataset, r.labels, test, r.narrow, ExhaustiveStrategy{}, setup);
  const double a_two =
      evaluate_strategy(r.dataset, r.labels, test, r.narrow, HierarchicalStrategy{&two}, setup).post_sweep_accuracy;
  const double a_bin =
      evaluate_strategy(r.dataset, r.labels, test, r.narrow, HierarchicalStrategy{&bin}, setup).post_sweep_accuracy;
  const double a_ex = ex.post_sweep_accuracy;
  report(9, a_ex >= a_two && a_two >= a_bin, "exhaustive >= two-tier >= binary at moderate noise",
         "mean optimal SNR " + fmt("%.2f dB", ex.mean_optimal_snr_db) + ", exhaustive " + fmt("%.4f", a_ex) +
             ", two-tier " + fmt("%.4f", a_two) + ", binary " + fmt("%.4f", a_bin));
}

// ---------------------------------------------------------------------------

void constant_modulus(const DeskRun& r) {
  double constructed = 0.0, learned = 0.0;
  for (std::size_t nt : {8u, 16u, 64u}) {
    const ArrayConfig a{nt, 0.5, 28.0};
    for (std::size_t n : {nt, 2 * nt, 3 * nt}) constructed = std::max(constructed, dft_codebook(a, n).modulus_error());
    constructed = std::max(constructed, subsampled_dft_codebook(a, 2 * nt, nt / 2).modulus_error());
    for (const auto& tier : build_two_tier(a, 2 * nt, 4).tiers) constructed = std::max(constructed, tier.codebook.modulus_error());
    for (const auto& tier : build_binary_tree(a, 2 * nt).tiers) constructed = std::max(constructed, tier.codebook.modulus_error());
  }
  learned = std::max(export_probing_codebook(r.learned.model).modulus_error(),
                     export_probing_codebook(r.dft.model).modulus_error());
  for (std::uint64_t s = 0; s < 20; ++s) {
    ProbingModel m = create_model(64, 16, 128, {4}, s);
    RandomStream rng(s);
    for (Eigen::Index i = 0; i < m.theta.size(); ++i) m.theta.data()[i] = rng.uniform(-50.0, 50.0);
    learned = std::max(learned, export_probing_codebook(m).modulus_error());
  }
  report(8, constructed <= 1e-9 && learned <= 1e-12, "constant modulus 1/sqrt(Nt)",
         "constructed max dev " + fmt("%.3g", constructed) + ", learned exports max dev " + fmt("%.3g", learned));
}

void reproducibility() {
  const fs::path root = fs::temp_directory_path() / "beamprobe_acceptance_repro";
  fs::remove_all(root);
  Json cfg = Json::parse(R"({
    "preset": "desk", "seed": 7, "num_samples": 1500,
    "training": {"epochs": 4, "batch_size": 64, "hidden_sizes": [16, 16]},
    "sweep": {"num_probing": [6], "k": [1, 3], "noise_power_dbm": [-81.0, -70.0]}
  })");
  RunContext a{config_from_json(cfg), root / "a", nullptr};
  cmd_gen(a);
  cmd_train(a);
  run_evaluation(a, true);
  run_evaluation(a, false);

  auto from_manifest = [&](const std::string& cmd) {
    return RunContext{config_from_json(read_json_file(root / "a" / ("manifest_" + cmd + ".json"))), root / "b", nullptr};
  };
  cmd_gen(from_manifest("gen"));
  cmd_train(from_manifest("train"));
  run_evaluation(from_manifest("eval"), true);
  run_evaluation(from_manifest("baseline"), false);

  std::size_t same = 0, total = 0;
  std::string diff;
  for (const char* f : {"dataset.bacd", "model_nw6.bamd", "history_nw6.csv", "results_eval.json", "results_eval.csv",
                        "results_baseline.json", "results_baseline.csv"}) {
    ++total;
    const std::string x = slurp(root / "a" / f);
    if (!x.empty() && x == slurp(root / "b" / f)) {
      ++same;
    } else {
      diff += std::string(" ") + f;
    }
  }
  fs::remove_all(root);
  report(10, same == total, "manifest re-run gives byte-identical outputs",
         std::to_string(same) + "/" + std::to_string(total) + " files identical" + diff);
}

}  // namespace

int main() {
  try {
    gradient_oracle();
    genie_equivalence();
    complexity_table();
    noise_power();
    const DeskRun run = desk_run();
    double learned_sil = 0.0, dft_sil = 0.0;
    learned_vs_dft(run, learned_sil, dft_sil);
    topk_containment(run);
    constant_modulus(run);
    baseline_ordering(run);
    reproducibility();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
