#pragma once

// Run configuration, presets and the gen/train/eval/baseline/report
// pipeline used by the command-line tool.

#include "beamprobe/alignment.hpp"
#include "beamprobe/channel.hpp"
#include "beamprobe/codebooks.hpp"
#include "beamprobe/learning.hpp"
#include "beamprobe/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace beamprobe {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct RadioConfig {
  double transmit_power_dbm = 10.0;
  double noise_psd_dbm_per_hz = -161.0;
  double bandwidth_hz = 100e6;
  /// Overrides the PSD/bandwidth noise floor when set.
  std::optional<double> noise_power_dbm;

  double noise_dbm() const { return noise_power_dbm ? *noise_power_dbm : beamprobe::noise_power_dbm(noise_psd_dbm_per_hz, bandwidth_hz); }
};

struct TrainingSection {
  std::size_t epochs = 200;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  std::vector<std::size_t> hidden_sizes{256, 256};
  bool train_with_noise = true;
  /// "learned" trains Theta; "dft" freezes it to a subsampled DFT codebook.
  std::string probing = "learned";
};

struct SweepSection {
  std::vector<std::string> strategies{"genie", "exhaustive", "two_tier", "binary", "proposed"};
  std::vector<std::size_t> num_probing{12};
  std::vector<std::size_t> k{1, 3};
  /// Empty means the radio noise floor only.
  std::vector<double> noise_power_dbm;
  std::vector<std::size_t> two_tier_wide{16};
};

struct InputSection {
  std::string dataset;    // default: <out>/dataset.bacd
  std::string model_dir;  // default: <out>
  std::vector<std::string> results;
};

struct RunConfig {
  std::string preset = "full";
  std::uint64_t seed = 1;
  ArrayConfig array;
  std::vector<ClusterSpec> clusters;
  double los_probability = 1.0;
  std::size_t num_samples = 20000;
  std::size_t num_narrow = 128;
  RadioConfig radio;
  TrainingSection training;
  SweepSection sweep;
  InputSection inputs;

  std::uint64_t scene_seed() const { return derive_key(seed, 0xD5); }
  std::uint64_t train_seed() const { return derive_key(seed, 0x7E); }
  std::uint64_t noise_seed() const { return derive_key(seed, 0xE7); }

  SceneConfig scene() const {
    SceneConfig s;
    s.clusters = clusters;
    s.los_probability = los_probability;
    s.rng_seed = scene_seed();
    return s;
  }

  void validate() const {
    array.validate();
    scene().validate();
    require(num_samples >= 1, "num_samples must be >= 1");
    require(num_narrow >= 1, "num_narrow must be >= 1");
    require(training.probing == "learned" || training.probing == "dft", "training.probing must be \"learned\" or \"dft\"");
    train_config(sweep.num_probing.empty() ? 1 : sweep.num_probing.front(), 1.0).validate();
    require(!sweep.num_probing.empty() && !sweep.k.empty(), "sweep.num_probing and sweep.k must be non-empty");
    for (auto n : sweep.num_probing) require(n >= 1, "sweep.num_probing entries must be >= 1");
    for (auto k : sweep.k) require(k >= 1 && k <= num_narrow, "sweep.k entries must lie in [1, num_narrow]");
    for (const auto& s : sweep.strategies) (void)strategy_from_string(s);
  }

  TrainConfig train_config(std::size_t num_probing, double normalized_noise) const {
    TrainConfig c;
    c.num_probing = num_probing;
    c.hidden_sizes = training.hidden_sizes;
    c.epochs = training.epochs;
    c.batch_size = training.batch_size;
    c.learning_rate = training.learning_rate;
    c.adam_beta1 = training.adam_beta1;
    c.adam_beta2 = training.adam_beta2;
    c.adam_eps = training.adam_eps;
    c.train_fraction = training.train_fraction;
    c.val_fraction = training.val_fraction;
    c.test_fraction = training.test_fraction;
    c.rng_seed = train_seed();
    c.noise_power = normalized_noise;
    c.transmit_power = dbm_to_mw(radio.transmit_power_dbm);
    c.train_with_noise = training.train_with_noise;
    c.train_probing = training.probing == "learned";
    return c;
  }
};

/// Two-cluster scene used by both presets: a strong LOS-like cluster that is
/// present 70% of the time and a weaker, wider-spread reflection cluster.
inline std::vector<ClusterSpec> default_clusters() {
  return {{0.35, 0.15, -60.0, 3.0, 1}, {-0.7, 0.08, -68.0, 4.0, 3}};
}

inline RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.clusters = default_clusters();
  c.los_probability = 0.7;
  if (name == "full") {
    c.array = {64, 0.5, 28.0};
    c.num_narrow = 128;
    c.sweep.num_probing = {4, 6, 8, 10, 12, 14, 16};
    c.sweep.two_tier_wide = {16};
  } else if (name == "desk") {
    c.array = {16, 0.5, 28.0};
    c.num_narrow = 32;
    c.num_samples = 20000;
    c.training.batch_size = 256;
    c.sweep.num_probing = {6};
    c.sweep.two_tier_wide = {4};
  } else {
    throw ConfigError("unknown preset \"" + name + "\" (expected \"full\" or \"desk\")");
  }
  return c;
}

namespace detail {

/// Reads the keys of one JSON object, rejecting keys that were never asked for.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    read(key, v);
    out = v;
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void ignore(const char* key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key \"" + where_ + "." + key + "\"");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Json to_json(const RunConfig& c) {
  Json clusters = Json::array();
  for (const auto& cl : c.clusters) {
    clusters.push_back({{"mean_azimuth", cl.mean_azimuth},
                        {"angular_spread", cl.angular_spread},
                        {"mean_gain_db", cl.mean_gain_db},
                        {"gain_spread_db", cl.gain_spread_db},
                        {"path_count", cl.path_count}});
  }
  Json radio = {{"transmit_power_dbm", c.radio.transmit_power_dbm},
                {"noise_psd_dbm_per_hz", c.radio.noise_psd_dbm_per_hz},
                {"bandwidth_hz", c.radio.bandwidth_hz}};
  radio["noise_power_dbm"] = c.radio.noise_power_dbm ? Json(*c.radio.noise_power_dbm) : Json(nullptr);
  const auto& t = c.training;
  return {{"preset", c.preset},
          {"seed", c.seed},
          {"array",
           {{"num_elements", c.array.num_elements},
            {"element_spacing_ratio", c.array.element_spacing_ratio},
            {"carrier_ghz", c.array.carrier_ghz}}},
          {"scene", {{"clusters", clusters}, {"los_probability", c.los_probability}}},
          {"num_samples", c.num_samples},
          {"num_narrow", c.num_narrow},
          {"radio", radio},
          {"training",
           {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"adam_beta1", t.adam_beta1},
            {"adam_beta2", t.adam_beta2},
            {"adam_eps", t.adam_eps},
            {"train_fraction", t.train_fraction},
            {"val_fraction", t.val_fraction},
            {"test_fraction", t.test_fraction},
            {"hidden_sizes", t.hidden_sizes},
            {"train_with_noise", t.train_with_noise},
            {"probing", t.probing}}},
          {"sweep",
           {{"strategies", c.sweep.strategies},
            {"num_probing", c.sweep.num_probing},
            {"k", c.sweep.k},
            {"noise_power_dbm", c.sweep.noise_power_dbm},
            {"two_tier_wide", c.sweep.two_tier_wide}}},
          {"inputs",
           {{"dataset", c.inputs.dataset}, {"model_dir", c.inputs.model_dir}, {"results", c.inputs.results}}}};
}

/// Parses a config document. Keys absent from `j` keep the values of the
/// preset it names (default "full"); unknown keys are an error. A
/// top-level "record" object (written into manifests) is ignored.
inline RunConfig config_from_json(const Json& j, const std::optional<std::string>& preset_override = std::nullopt) {
  detail::StrictObject top(j, "config");
  std::string preset = "full";
  top.read("preset", preset);
  if (preset_override) preset = *preset_override;
  RunConfig c = preset_config(preset);
  top.read("seed", c.seed);
  top.ignore("record");
  if (const Json* a = top.child("array")) {
    detail::StrictObject o(*a, "array");
    o.read("num_elements", c.array.num_elements);
    o.read("element_spacing_ratio", c.array.element_spacing_ratio);
    o.read("carrier_ghz", c.array.carrier_ghz);
    o.finish();
  }
  if (const Json* s = top.child("scene")) {
    detail::StrictObject o(*s, "scene");
    o.read("los_probability", c.los_probability);
    if (const Json* cl = o.child("clusters")) {
      if (!cl->is_array()) throw ConfigError("scene.clusters must be an array");
      c.clusters.clear();
      for (std::size_t i = 0; i < cl->size(); ++i) {
        detail::StrictObject e((*cl)[i], "scene.clusters[" + std::to_string(i) + "]");
        ClusterSpec spec;
        e.read("mean_azimuth", spec.mean_azimuth);
        e.read("angular_spread", spec.angular_spread);
        e.read("mean_gain_db", spec.mean_gain_db);
        e.read("gain_spread_db", spec.gain_spread_db);
        e.read("path_count", spec.path_count);
        e.finish();
        c.clusters.push_back(spec);
      }
    }
    o.finish();
  }
  top.read("num_samples", c.num_samples);
  top.read("num_narrow", c.num_narrow);
  if (const Json* r = top.child("radio")) {
    detail::StrictObject o(*r, "radio");
    o.read("transmit_power_dbm", c.radio.transmit_power_dbm);
    o.read("noise_psd_dbm_per_hz", c.radio.noise_psd_dbm_per_hz);
    o.read("bandwidth_hz", c.radio.bandwidth_hz);
    o.read_optional("noise_power_dbm", c.radio.noise_power_dbm);
    o.finish();
  }
  if (const Json* t = top.child("training")) {
    detail::StrictObject o(*t, "training");
    auto& tr = c.training;
    o.read("epochs", tr.epochs);
    o.read("batch_size", tr.batch_size);
    o.read("learning_rate", tr.learning_rate);
    o.read("adam_beta1", tr.adam_beta1);
    o.read("adam_beta2", tr.adam_beta2);
    o.read("adam_eps", tr.adam_eps);
    o.read("train_fraction", tr.train_fraction);
    o.read("val_fraction", tr.val_fraction);
    o.read("test_fraction", tr.test_fraction);
    o.read("hidden_sizes", tr.hidden_sizes);
    o.read("train_with_noise", tr.train_with_noise);
    o.read("probing", tr.probing);
    o.finish();
  }
  if (const Json* s = top.child("sweep")) {
    detail::StrictObject o(*s, "sweep");
    o.read("strategies", c.sweep.strategies);
    o.read("num_probing", c.sweep.num_probing);
    o.read("k", c.sweep.k);
    o.read("noise_power_dbm", c.sweep.noise_power_dbm);
    o.read("two_tier_wide", c.sweep.two_tier_wide);
    o.finish();
  }
  if (const Json* in = top.child("inputs")) {
    detail::StrictObject o(*in, "inputs");
    o.read("dataset", c.inputs.dataset);
    o.read("model_dir", c.inputs.model_dir);
    o.read("results", c.inputs.results);
    o.finish();
  }
  top.finish();
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct RunContext {
  RunConfig config;
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;

  std::filesystem::path dataset_path() const {
    return config.inputs.dataset.empty() ? out_dir / "dataset.bacd" : std::filesystem::path(config.inputs.dataset);
  }
  std::filesystem::path model_dir() const {
    return config.inputs.model_dir.empty() ? out_dir : std::filesystem::path(config.inputs.model_dir);
  }
  static std::string model_name(std::size_t num_probing) { return "model_nw" + std::to_string(num_probing) + ".bamd"; }
  static std::string history_name(std::size_t num_probing) { return "history_nw" + std::to_string(num_probing) + ".csv"; }
};

/// Writes <out>/manifest_<command>.json: the resolved config (a valid input
/// config in its own right) plus a "record" block with derived values.
inline void write_manifest(const RunContext& ctx, const std::string& command, Json record) {
  Json m = to_json(ctx.config);
  m["inputs"]["dataset"] = std::filesystem::absolute(ctx.dataset_path()).lexically_normal().string();
  m["inputs"]["model_dir"] = std::filesystem::absolute(ctx.model_dir()).lexically_normal().string();
  record["command"] = command;
  record["scene_seed"] = ctx.config.scene_seed();
  record["train_seed"] = ctx.config.train_seed();
  record["noise_seed"] = ctx.config.noise_seed();
  m["record"] = std::move(record);
  write_text_file(ctx.out_dir / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

inline ChannelDataset cmd_gen(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  ChannelDataset ds = generate_dataset(c.scene(), c.num_samples, c.array);
  const auto path = ctx.out_dir / "dataset.bacd";
  std::filesystem::create_directories(ctx.out_dir);
  save_dataset(ds, path);
  write_manifest(ctx, "gen", {{"outputs", {path.string()}}, {"count", ds.size()}});
  if (ctx.log) {
    *ctx.log << "wrote " << path.string() << ": " << ds.size() << " samples, Nt=" << ds.num_elements()
             << ", seed=" << c.scene_seed() << "\n";
  }
  return ds;
}

/// Normalized dataset, narrow codebook, labels and noise scaling shared by
/// train/eval/baseline.
struct PreparedData {
  ChannelDataset dataset;
  double factor = 1.0;
  Codebook narrow;
  std::vector<std::size_t> labels;
  double transmit_power = 0.0;  // mW

  /// dBm noise power mapped to the normalized scale.
  double normalized_noise(double dbm) const { return dbm_to_mw(dbm) / (factor * factor); }
};

inline PreparedData prepare_data(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  if (!std::filesystem::exists(ctx.dataset_path())) {
    throw std::runtime_error("dataset not found: " + ctx.dataset_path().string());
  }
  const ChannelDataset raw = load_dataset(ctx.dataset_path());
  if (raw.num_elements() != c.array.num_elements) {
    throw DomainError("dataset has Nt=" + std::to_string(raw.num_elements()) + " but the config expects Nt=" +
                      std::to_string(c.array.num_elements));
  }
  PreparedData p;
  NormalizedDataset nd = normalize_dataset(raw);
  p.factor = *nd.dataset.normalization_factor;
  p.dataset = std::move(nd.dataset);
  p.narrow = dft_codebook(c.array, c.num_narrow);
  p.labels = label_dataset(p.dataset, p.narrow);
  p.transmit_power = dbm_to_mw(c.radio.transmit_power_dbm);
  return p;
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream s;
  s << std::setprecision(17) << "epoch,train_loss,val_loss,val_top1\n";
  for (const auto& r : history) s << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_top1 << '\n';
  return s.str();
}

inline std::vector<TrainResult> cmd_train(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  const PreparedData data = prepare_data(ctx);
  const double noise = data.normalized_noise(c.radio.noise_dbm());
  std::filesystem::create_directories(ctx.out_dir);
  std::vector<TrainResult> results;
  Json outputs = Json::array();
  Json split;
  for (std::size_t n_w : c.sweep.num_probing) {
    const TrainConfig tc = c.train_config(n_w, noise);
    ProbingModel init = create_model(c.array.num_elements, n_w, c.num_narrow, tc.hidden_sizes, tc.rng_seed);
    if (!tc.train_probing) set_probing_codebook(init, subsampled_dft_codebook(c.array, c.num_narrow, n_w));
    TrainResult r = train(data.dataset, data.narrow, tc, &init);
    const auto model_path = ctx.out_dir / RunContext::model_name(n_w);
    const auto history_path = ctx.out_dir / RunContext::history_name(n_w);
    save_model(r.model, model_path);
    write_text_file(history_path, history_csv(r.history));
    outputs.push_back(model_path.string());
    outputs.push_back(history_path.string());
    split = {{"train", r.split.train.size()}, {"val", r.split.val.size()}, {"test", r.split.test.size()}};
    if (ctx.log) {
      *ctx.log << "trained N_W=" << n_w << ": final val top-1 " << r.history.back().val_top1 << ", wrote "
               << model_path.string() << "\n";
    }
    results.push_back(std::move(r));
  }
  write_manifest(ctx, "train",
                 {{"outputs", outputs},
                  {"normalization_factor", data.factor},
                  {"normalized_noise_power", noise},
                  {"split_sizes", split}});
  return results;
}

/// One evaluated grid cell.
struct ResultRecord {
  ExperimentResult result;
  double noise_power_dbm = 0.0;
  /// Accuracy of the same strategy with noiseless measurements.
  double noiseless_accuracy = 0.0;
};

inline Json to_json(const ResultRecord& rec) {
  const ExperimentResult& r = rec.result;
  return {{"strategy", to_string(r.strategy)},
          {"num_elements", r.num_elements},
          {"num_narrow", r.num_narrow},
          {"num_probing", r.num_probing},
          {"k", r.k},
          {"noise_power_dbm", rec.noise_power_dbm},
          {"transmit_power", r.transmit_power},
          {"noise_power", r.noise_power},
          {"noise_seed", r.noise_seed},
          {"sample_count", r.sample_count},
          {"top1_accuracy", r.top1_accuracy},
          {"topk_containment_accuracy", r.topk_containment_accuracy},
          {"post_sweep_accuracy", r.post_sweep_accuracy},
          {"noiseless_accuracy", rec.noiseless_accuracy},
          {"mean_snr_db", r.mean_snr_db},
          {"snr_p10_db", r.snr_p10_db},
          {"snr_p50_db", r.snr_p50_db},
          {"snr_p90_db", r.snr_p90_db},
          {"mean_optimal_snr_db", r.mean_optimal_snr_db},
          {"mean_beams_swept", r.mean_beams_swept}};
}

inline ResultRecord record_from_json(const Json& j) {
  ResultRecord rec;
  ExperimentResult& r = rec.result;
  try {
    r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    r.num_elements = j.at("num_elements").get<std::size_t>();
    r.num_narrow = j.at("num_narrow").get<std::size_t>();
    r.num_probing = j.at("num_probing").get<std::size_t>();
    r.k = j.at("k").get<std::size_t>();
    rec.noise_power_dbm = j.at("noise_power_dbm").get<double>();
    r.transmit_power = j.at("transmit_power").get<double>();
    r.noise_power = j.at("noise_power").get<double>();
    r.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    r.sample_count = j.at("sample_count").get<std::size_t>();
    r.top1_accuracy = j.at("top1_accuracy").get<double>();
    r.topk_containment_accuracy = j.at("topk_containment_accuracy").get<double>();
    r.post_sweep_accuracy = j.at("post_sweep_accuracy").get<double>();
    rec.noiseless_accuracy = j.at("noiseless_accuracy").get<double>();
    r.mean_snr_db = j.at("mean_snr_db").get<double>();
    r.snr_p10_db = j.at("snr_p10_db").get<double>();
    r.snr_p50_db = j.at("snr_p50_db").get<double>();
    r.snr_p90_db = j.at("snr_p90_db").get<double>();
    r.mean_optimal_snr_db = j.at("mean_optimal_snr_db").get<double>();
    r.mean_beams_swept = j.at("mean_beams_swept").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed results record: ") + e.what());
  }
  return rec;
}

inline const char* kResultsCsvHeader =
    "strategy,num_elements,num_narrow,num_probing,k,noise_power_dbm,sample_count,top1_accuracy,"
    "topk_containment_accuracy,post_sweep_accuracy,noiseless_accuracy,mean_snr_db,snr_p10_db,snr_p50_db,"
    "snr_p90_db,mean_optimal_snr_db,mean_beams_swept\n";

inline std::string results_csv(const std::vector<ResultRecord>& records) {
  std::ostringstream s;
  s << std::setprecision(17) << kResultsCsvHeader;
  for (const auto& rec : records) {
    const auto& r = rec.result;
    s << to_string(r.strategy) << ',' << r.num_elements << ',' << r.num_narrow << ',' << r.num_probing << ',' << r.k
      << ',' << rec.noise_power_dbm << ',' << r.sample_count << ',' << r.top1_accuracy << ','
      << r.topk_containment_accuracy << ',' << r.post_sweep_accuracy << ',' << rec.noiseless_accuracy << ','
      << r.mean_snr_db << ',' << r.snr_p10_db << ',' << r.snr_p50_db << ',' << r.snr_p90_db << ','
      << r.mean_optimal_snr_db << ',' << r.mean_beams_swept << '\n';
  }
  return s.str();
}

/// Evaluates the requested strategies over the (N_W, k, noise) grid on the
/// test split. `learned` selects eval (all strategies) or baseline
/// (non-learned strategies only).
inline std::vector<ResultRecord> run_evaluation(const RunContext& ctx, bool learned) {
  const RunConfig& c = ctx.config;
  const PreparedData data = prepare_data(ctx);
  const TrainConfig tc = c.train_config(c.sweep.num_probing.front(), 0.0);
  const DataSplit split = split_indices(data.dataset.size(), tc);
  require(!split.test.empty(), "test split is empty");
  std::filesystem::create_directories(ctx.out_dir);

  std::vector<double> levels = c.sweep.noise_power_dbm;
  if (levels.empty()) levels.push_back(c.radio.noise_dbm());

  std::vector<ResultRecord> records;
  auto run_cell = [&](const Strategy& strategy) {
    const EvaluationSetup clean{data.transmit_power, {0.0, c.noise_seed()}, data.normalized_noise(levels.front())};
    const double noiseless = evaluate_strategy(data.dataset, data.labels, split.test, data.narrow, strategy, clean)
                                 .post_sweep_accuracy;
    for (double dbm : levels) {
      const double noise = data.normalized_noise(dbm);
      const EvaluationSetup setup{data.transmit_power, {noise, c.noise_seed()}, noise};
      ResultRecord rec;
      rec.result = evaluate_strategy(data.dataset, data.labels, split.test, data.narrow, strategy, setup);
      rec.noise_power_dbm = dbm;
      rec.noiseless_accuracy = noiseless;
      records.push_back(rec);
    }
  };

  for (const auto& name : c.sweep.strategies) {
    switch (strategy_from_string(name)) {
      case StrategyKind::genie: run_cell(GenieStrategy{}); break;
      case StrategyKind::exhaustive: run_cell(ExhaustiveStrategy{}); break;
      case StrategyKind::two_tier:
        for (std::size_t n_w : c.sweep.two_tier_wide) {
          const HierarchicalCodebook h = build_two_tier(c.array, c.num_narrow, n_w);
          run_cell(HierarchicalStrategy{&h});
        }
        break;
      case StrategyKind::binary: {
        const HierarchicalCodebook h = build_binary_tree(c.array, c.num_narrow);
        run_cell(HierarchicalStrategy{&h});
        break;
      }
      case StrategyKind::proposed: {
        if (!learned) break;
        for (std::size_t n_w : c.sweep.num_probing) {
          const auto path = ctx.model_dir() / RunContext::model_name(n_w);
          if (!std::filesystem::exists(path)) throw std::runtime_error("model not found: " + path.string());
          const ProbingModel model = load_model(path);
          if (model.num_elements() != data.dataset.num_elements()) {
            throw DomainError("model has Nt=" + std::to_string(model.num_elements()) + " but the dataset has Nt=" +
                              std::to_string(data.dataset.num_elements()));
          }
          require(model.num_classes() == c.num_narrow, "model class count does not match num_narrow");
          require(model.seed == tc.rng_seed, "model was trained with a different seed; its test split is unknown");
          const ProbingDeployment deployment(model);
          for (std::size_t k : c.sweep.k) run_cell(ProposedStrategy{&deployment, k});
        }
        break;
      }
    }
  }

  const std::string stem = learned ? "results_eval" : "results_baseline";
  Json all = Json::array();
  for (const auto& rec : records) all.push_back(to_json(rec));
  write_text_file(ctx.out_dir / (stem + ".json"), all.dump(2) + "\n");
  write_text_file(ctx.out_dir / (stem + ".csv"), results_csv(records));
  write_manifest(ctx, learned ? "eval" : "baseline",
                 {{"outputs", {(ctx.out_dir / (stem + ".json")).string(), (ctx.out_dir / (stem + ".csv")).string()}},
                  {"normalization_factor", data.factor},
                  {"split_sizes",
                   {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}}},
                  {"cells", records.size()}});
  if (ctx.log) *ctx.log << "evaluated " << records.size() << " cells on " << split.test.size() << " test samples\n";
  return records;
}

inline std::vector<ResultRecord> load_results(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  if (!j.is_array()) throw FormatError(path.string() + ": results file must hold an array of records");
  std::vector<ResultRecord> out;
  for (const auto& e : j) out.push_back(record_from_json(e));
  return out;
}

/// UE counts used for the complexity table.
inline constexpr std::size_t kReportUeCounts[] = {1, 5, 10, 15};

struct ReportTables {
  std::string accuracy_vs_nw;
  std::string snr_vs_nw;
  std::string complexity_vs_nw;
  std::string degradation_vs_snr;
};

inline ReportTables build_report(const std::vector<ResultRecord>& records) {
  require(!records.empty(), "no results to report");
  const auto& first = records.front().result;
  for (const auto& rec : records) {
    if (rec.result.num_narrow != first.num_narrow || rec.result.num_elements != first.num_elements) {
      throw ConfigError("conflicting inputs: N_V/Nt " + std::to_string(first.num_narrow) + "/" +
                        std::to_string(first.num_elements) + " vs " + std::to_string(rec.result.num_narrow) + "/" +
                        std::to_string(rec.result.num_elements));
    }
  }
  std::vector<ResultRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), [](const ResultRecord& a, const ResultRecord& b) {
    const auto ka = std::make_tuple(to_string(a.result.strategy), a.result.k, a.noise_power_dbm, a.result.num_probing);
    const auto kb = std::make_tuple(to_string(b.result.strategy), b.result.k, b.noise_power_dbm, b.result.num_probing);
    return ka < kb;
  });

  std::ostringstream acc, snr, cx, deg;
  for (auto* s : {&acc, &snr, &cx, &deg}) *s << std::setprecision(17);
  acc << "strategy,k,noise_power_dbm,num_probing,top1_accuracy,topk_containment_accuracy,post_sweep_accuracy\n";
  snr << "strategy,k,noise_power_dbm,num_probing,mean_snr_db,snr_p10_db,snr_p50_db,snr_p90_db,mean_optimal_snr_db\n";
  cx << "strategy,k,num_probing,num_narrow,num_ues,sweep_complexity,power_reports,beam_indices\n";
  deg << "strategy,k,num_probing,noise_power_dbm,mean_optimal_snr_db,accuracy,accuracy_drop\n";

  std::set<std::tuple<std::string, std::size_t, std::size_t>> complexity_rows;
  for (const auto& rec : sorted) {
    const auto& r = rec.result;
    const std::string name = to_string(r.strategy);
    acc << name << ',' << r.k << ',' << rec.noise_power_dbm << ',' << r.num_probing << ',' << r.top1_accuracy << ','
        << r.topk_containment_accuracy << ',' << r.post_sweep_accuracy << '\n';
    snr << name << ',' << r.k << ',' << rec.noise_power_dbm << ',' << r.num_probing << ',' << r.mean_snr_db << ','
        << r.snr_p10_db << ',' << r.snr_p50_db << ',' << r.snr_p90_db << ',' << r.mean_optimal_snr_db << '\n';
    deg << name << ',' << r.k << ',' << r.num_probing << ',' << rec.noise_power_dbm << ',' << r.mean_optimal_snr_db
        << ',' << r.post_sweep_accuracy << ',' << rec.noiseless_accuracy - r.post_sweep_accuracy << '\n';
    if (complexity_rows.insert({name, r.k, r.num_probing}).second) {
      for (std::size_t ues : kReportUeCounts) {
        const auto fb = feedback_complexity(r.strategy, ues, r.num_probing, r.num_narrow, r.k);
        cx << name << ',' << r.k << ',' << r.num_probing << ',' << r.num_narrow << ',' << ues << ','
           << sweep_complexity(r.strategy, ues, r.num_narrow, r.num_probing, r.k) << ',' << fb.power_reports << ','
           << fb.beam_indices << '\n';
      }
    }
  }
  return {acc.str(), snr.str(), cx.str(), deg.str()};
}

inline ReportTables cmd_report(const RunContext& ctx, const std::vector<std::filesystem::path>& inputs) {
  require(!inputs.empty(), "report needs at least one results file");
  std::vector<ResultRecord> records;
  for (const auto& p : inputs) {
    auto part = load_results(p);
    records.insert(records.end(), part.begin(), part.end());
  }
  ReportTables t = build_report(records);
  std::filesystem::create_directories(ctx.out_dir);
  write_text_file(ctx.out_dir / "accuracy_vs_nw.csv", t.accuracy_vs_nw);
  write_text_file(ctx.out_dir / "snr_vs_nw.csv", t.snr_vs_nw);
  write_text_file(ctx.out_dir / "complexity_vs_nw.csv", t.complexity_vs_nw);
  write_text_file(ctx.out_dir / "degradation_vs_snr.csv", t.degradation_vs_snr);
  Json in = Json::array();
  for (const auto& p : inputs) in.push_back(std::filesystem::absolute(p).lexically_normal().string());
  RunContext echo = ctx;
  echo.config.inputs.results.clear();
  for (const auto& p : in) echo.config.inputs.results.push_back(p.get<std::string>());
  write_manifest(echo, "report", {{"outputs", {"accuracy_vs_nw.csv", "snr_vs_nw.csv", "complexity_vs_nw.csv", "degradation_vs_snr.csv"}}});
  if (ctx.log) *ctx.log << "merged " << records.size() << " records from " << inputs.size() << " file(s)\n";
  return t;
}

}  // namespace beamprobe
