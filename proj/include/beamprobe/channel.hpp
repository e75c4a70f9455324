#pragma once

// Ray-based narrowband channels for a uniform linear array, a clustered
// scene generator standing in for ray-traced sites, dataset normalization,
// and the BACD binary dataset format.

#include "beamprobe/binary_io.hpp"
#include "beamprobe/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace beamprobe {

struct ArrayConfig {
  std::size_t num_elements = 64;
  double element_spacing_ratio = 0.5;  // d / lambda
  double carrier_ghz = 28.0;           // metadata only

  void validate() const {
    require(num_elements >= 1, "array must have at least one element");
    require(element_spacing_ratio > 0.0 && std::isfinite(element_spacing_ratio),
            "element spacing ratio must be positive");
  }
};

struct PathSpec {
  Complex gain;
  double azimuth = 0.0;  // radians, open interval (-pi/2, pi/2)
};

struct ClusterSpec {
  double mean_azimuth = 0.0;    // radians
  double angular_spread = 0.0;  // radians, standard deviation
  double mean_gain_db = 0.0;
  double gain_spread_db = 0.0;
  std::size_t path_count = 1;
};

struct SceneConfig {
  std::vector<ClusterSpec> clusters;
  double los_probability = 1.0;  // probability that cluster 0 is present
  std::uint64_t rng_seed = 0;
  /// When set, path phases come from a stream keyed only by this seed and
  /// the (cluster, path) position, so they are identical across samples.
  std::optional<std::uint64_t> fixed_phase_seed;

  void validate() const {
    require(!clusters.empty(), "scene needs at least one cluster");
    require(los_probability >= 0.0 && los_probability <= 1.0,
            "los_probability must lie in [0, 1]");
    for (const auto& c : clusters) {
      require(c.angular_spread >= 0.0 && c.gain_spread_db >= 0.0, "cluster spreads must be >= 0");
      require(c.path_count >= 1, "cluster path_count must be positive");
      require(std::isfinite(c.mean_azimuth) && std::isfinite(c.mean_gain_db),
              "cluster parameters must be finite");
    }
    require(clusters.size() > 1 || los_probability > 0.0,
            "a single-cluster scene with los_probability 0 never produces a path");
  }
};

struct ChannelDataset {
  ArrayConfig array;
  ComplexMatrix channels;  // Nt x count, one sample per column
  std::optional<double> normalization_factor;

  std::size_t size() const { return static_cast<std::size_t>(channels.cols()); }
  std::size_t num_elements() const { return array.num_elements; }
  bool normalized() const { return normalization_factor.has_value(); }
};

inline constexpr double kAzimuthLimit = kPi / 2.0;

/// ULA response for a direction given by its sine; no range check, used for
/// pattern grids in sin-space.
inline ComplexVector steering_vector_sin(double sin_azimuth, const ArrayConfig& array) {
  const auto n_elements = static_cast<Eigen::Index>(array.num_elements);
  const double scale = 1.0 / std::sqrt(static_cast<double>(array.num_elements));
  const double step = 2.0 * kPi * array.element_spacing_ratio * sin_azimuth;
  ComplexVector a(n_elements);
  for (Eigen::Index n = 0; n < n_elements; ++n) {
    a[n] = std::polar(scale, step * static_cast<double>(n));
  }
  return a;
}

inline ComplexVector steering_vector(double azimuth, const ArrayConfig& array) {
  array.validate();
  if (!(azimuth > -kAzimuthLimit && azimuth < kAzimuthLimit)) {
    throw DomainError("azimuth " + std::to_string(azimuth) + " outside (-pi/2, pi/2)");
  }
  return steering_vector_sin(std::sin(azimuth), array);
}

inline ComplexVector synthesize_channel(const std::vector<PathSpec>& paths, const ArrayConfig& array) {
  require(!paths.empty(), "channel needs at least one path");
  ComplexVector h = ComplexVector::Zero(static_cast<Eigen::Index>(array.num_elements));
  for (const auto& p : paths) h += p.gain * steering_vector(p.azimuth, array);
  return h;
}

namespace detail {

inline constexpr double kAzimuthMargin = 1e-6;

inline std::vector<PathSpec> draw_paths(const SceneConfig& scene, RandomStream& rng) {
  std::vector<PathSpec> paths;
  const bool los_present = rng.uniform() < scene.los_probability;
  for (std::size_t c = 0; c < scene.clusters.size(); ++c) {
    const auto& cluster = scene.clusters[c];
    // Draws are consumed even for a dropped cluster.
    std::vector<PathSpec> drawn;
    for (std::size_t p = 0; p < cluster.path_count; ++p) {
      double az = cluster.mean_azimuth + cluster.angular_spread * rng.normal();
      az = std::clamp(az, -kAzimuthLimit + kAzimuthMargin, kAzimuthLimit - kAzimuthMargin);
      const double gain_db = cluster.mean_gain_db + cluster.gain_spread_db * rng.normal();
      double phase = rng.uniform(0.0, 2.0 * kPi);
      if (scene.fixed_phase_seed) {
        RandomStream phase_rng(derive_key(*scene.fixed_phase_seed, c, p));
        phase = phase_rng.uniform(0.0, 2.0 * kPi);
      }
      drawn.push_back({std::polar(std::pow(10.0, gain_db / 20.0), phase), az});
    }
    if (c == 0 && !los_present) continue;
    paths.insert(paths.end(), drawn.begin(), drawn.end());
  }
  return paths;
}

}  // namespace detail

/// Samples `count` channels from the scene. Sample i draws from the stream
/// keyed by (seed, i, attempt), so samples are independent of each other and
/// of generation order. A sample whose every cluster was dropped is redrawn
/// with the next attempt counter.
inline ChannelDataset generate_dataset(const SceneConfig& scene, std::size_t count, const ArrayConfig& array) {
  scene.validate();
  array.validate();
  require(count >= 1, "dataset count must be positive");
  constexpr std::uint64_t kMaxAttempts = 1u << 16;

  ChannelDataset ds;
  ds.array = array;
  ds.channels.resize(static_cast<Eigen::Index>(array.num_elements), static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<PathSpec> paths;
    for (std::uint64_t attempt = 0; paths.empty(); ++attempt) {
      require(attempt < kMaxAttempts, "scene generator failed to produce a non-empty path list");
      RandomStream rng(derive_key(scene.rng_seed, i, attempt));
      paths = detail::draw_paths(scene, rng);
    }
    ds.channels.col(static_cast<Eigen::Index>(i)) = synthesize_channel(paths, array);
  }
  return ds;
}

struct NormalizedDataset {
  ChannelDataset dataset;
  double factor;
};

/// Divides every channel by the largest element magnitude in the dataset.
/// Applying it to an already-normalized dataset returns factor 1 and leaves
/// the channels unchanged; the stored factor accumulates the total scaling.
inline NormalizedDataset normalize_dataset(const ChannelDataset& dataset) {
  require(dataset.size() > 0, "cannot normalize an empty dataset");
  const double factor = dataset.channels.cwiseAbs().maxCoeff();
  require(factor > 0.0 && std::isfinite(factor), "cannot normalize an all-zero dataset");
  NormalizedDataset out{dataset, factor};
  if (factor != 1.0) out.dataset.channels /= factor;
  out.dataset.normalization_factor = dataset.normalization_factor.value_or(1.0) * factor;
  return out;
}

// ---------------------------------------------------------------------------
// BACD file format (all little-endian):
//   "BACD" | u32 version=1 | u32 Nt | f64 d/lambda | f64 carrier GHz |
//   u64 count | u8 normalized | f64 normalization factor (0 when absent) |
//   count x Nt x (f64 re, f64 im), sample-major
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

inline void write_dataset(std::ostream& out, const ChannelDataset& dataset) {
  io::LittleEndianWriter w(out);
  w.bytes("BACD");
  w.u32(kDatasetFormatVersion);
  w.u32(static_cast<std::uint32_t>(dataset.array.num_elements));
  w.f64(dataset.array.element_spacing_ratio);
  w.f64(dataset.array.carrier_ghz);
  w.u64(dataset.size());
  w.u8(dataset.normalized() ? 1 : 0);
  w.f64(dataset.normalization_factor.value_or(0.0));
  for (Eigen::Index j = 0; j < dataset.channels.cols(); ++j) {
    for (Eigen::Index n = 0; n < dataset.channels.rows(); ++n) w.complex(dataset.channels(n, j));
  }
}

inline ChannelDataset read_dataset(std::istream& in) {
  io::LittleEndianReader r(in);
  if (r.bytes(4, "magic") != "BACD") throw FormatError("bad magic: expected \"BACD\"");
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  ChannelDataset ds;
  ds.array.num_elements = r.u32("num_elements");
  ds.array.element_spacing_ratio = r.f64("element_spacing_ratio");
  ds.array.carrier_ghz = r.f64("carrier_ghz");
  if (ds.array.num_elements == 0) throw FormatError("invalid num_elements: 0");
  if (!(ds.array.element_spacing_ratio > 0.0)) throw FormatError("invalid element_spacing_ratio");
  const std::uint64_t count = r.u64("count");
  const std::uint8_t flag = r.u8("normalized flag");
  const double factor = r.f64("normalization_factor");
  if (flag > 1) throw FormatError("invalid normalized flag " + std::to_string(flag));
  if (flag == 1) {
    if (!(factor > 0.0)) throw FormatError("invalid normalization_factor for normalized dataset");
    ds.normalization_factor = factor;
  }
  const auto nt = static_cast<Eigen::Index>(ds.array.num_elements);
  std::vector<Complex> values;
  for (std::uint64_t j = 0; j < count; ++j) {
    for (Eigen::Index n = 0; n < nt; ++n) {
      try {
        values.push_back(r.complex("payload"));
      } catch (const FormatError&) {
        throw FormatError("truncated payload: header count=" + std::to_string(count) + " but " +
                          std::to_string(j) + " records present");
      }
    }
  }
  ds.channels = Eigen::Map<const ComplexMatrix>(values.data(), nt, static_cast<Eigen::Index>(count));
  if (!r.at_end()) throw FormatError("trailing bytes after payload (count=" + std::to_string(count) + ")");
  return ds;
}

inline void save_dataset(const ChannelDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(out, dataset);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline ChannelDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file not found: " + path.string());
  return read_dataset(in);
}

}  // namespace beamprobe
