#pragma once

// Analog beamforming codebooks: DFT narrow beams, constant-modulus wide
// beams, and the two hierarchical structures (2-tier and binary tree) used
// by the baseline searches.

#include "beamprobe/channel.hpp"
#include "beamprobe/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace beamprobe {

enum class CodebookKind { dft_narrow, wide_sector, learned_probing };

inline std::string to_string(CodebookKind kind) {
  switch (kind) {
    case CodebookKind::dft_narrow: return "dft_narrow";
    case CodebookKind::wide_sector: return "wide_sector";
    case CodebookKind::learned_probing: return "learned_probing";
  }
  return "unknown";
}

inline CodebookKind codebook_kind_from_string(const std::string& s) {
  if (s == "dft_narrow") return CodebookKind::dft_narrow;
  if (s == "wide_sector") return CodebookKind::wide_sector;
  if (s == "learned_probing") return CodebookKind::learned_probing;
  throw FormatError("unknown codebook kind \"" + s + "\"");
}

inline constexpr double kModulusTolerance = 1e-9;

/// Nt x N matrix of beamforming columns. Every element must have modulus
/// 1/sqrt(Nt) (phase-shifter-only hardware).
struct Codebook {
  ComplexMatrix weights;
  CodebookKind kind = CodebookKind::dft_narrow;

  std::size_t num_elements() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t num_beams() const { return static_cast<std::size_t>(weights.cols()); }

  /// Largest deviation of any element modulus from 1/sqrt(Nt).
  double modulus_error() const {
    const double target = 1.0 / std::sqrt(static_cast<double>(weights.rows()));
    return (weights.cwiseAbs().array() - target).abs().maxCoeff();
  }

  void validate(double tolerance = kModulusTolerance) const {
    require(weights.rows() >= 1 && weights.cols() >= 1, "codebook must be non-empty");
    require(modulus_error() <= tolerance, "codebook violates the constant-modulus constraint");
  }
};

/// Complex output h^H w of a single beam. All gain and measurement paths go
/// through this so that subsets of a codebook see bit-identical values.
inline Complex beam_response(const Eigen::Ref<const ComplexVector>& beam, const ComplexVector& h) {
  return h.dot(beam);  // sum_n conj(h_n) w_n
}

/// |h^H v_i|^2 for every column.
inline RealVector beamforming_gains(const Codebook& codebook, const ComplexVector& h) {
  require(static_cast<std::size_t>(h.size()) == codebook.num_elements(),
          "channel length does not match codebook rows");
  RealVector gains(codebook.weights.cols());
  for (Eigen::Index i = 0; i < codebook.weights.cols(); ++i) {
    gains[i] = std::norm(beam_response(codebook.weights.col(i), h));
  }
  return gains;
}

/// Center of DFT beam i of N in sin-azimuth: uniform over [-1, 1),
/// symmetric about broadside.
inline double dft_beam_center(std::size_t index, std::size_t num_beams) {
  return (2.0 * static_cast<double>(index) - static_cast<double>(num_beams) + 1.0) /
         static_cast<double>(num_beams);
}

inline Codebook dft_codebook(const ArrayConfig& array, std::size_t num_beams) {
  array.validate();
  require(num_beams >= 1, "DFT codebook needs at least one beam");
  Codebook cb;
  cb.kind = CodebookKind::dft_narrow;
  cb.weights.resize(static_cast<Eigen::Index>(array.num_elements), static_cast<Eigen::Index>(num_beams));
  for (std::size_t i = 0; i < num_beams; ++i) {
    cb.weights.col(static_cast<Eigen::Index>(i)) = steering_vector_sin(dft_beam_center(i, num_beams), array);
  }
  return cb;
}

/// N_W evenly spaced columns of the N_V-beam DFT codebook, column
/// floor((i + 1/2) N_V / N_W) for i = 0..N_W-1.
inline Codebook subsampled_dft_codebook(const ArrayConfig& array, std::size_t num_narrow, std::size_t num_beams) {
  require(num_beams >= 1 && num_beams <= num_narrow, "subsampled beam count must lie in [1, N_V]");
  const Codebook full = dft_codebook(array, num_narrow);
  Codebook cb;
  cb.kind = CodebookKind::dft_narrow;
  cb.weights.resize(full.weights.rows(), static_cast<Eigen::Index>(num_beams));
  for (std::size_t i = 0; i < num_beams; ++i) {
    const std::size_t j = (2 * i + 1) * num_narrow / (2 * num_beams);
    cb.weights.col(static_cast<Eigen::Index>(i)) = full.weights.col(static_cast<Eigen::Index>(j));
  }
  return cb;
}

// ---------------------------------------------------------------------------
// Wide beams
//
// Alternating projections between the flat-top pattern set (grid pattern
// magnitude equal to a target inside the sector and zero outside, phase
// taken from the current iterate; mapped back to weights by least squares)
// and the per-element constant-modulus set.
// ---------------------------------------------------------------------------

/// Interval [lo, hi) in sin-azimuth.
struct SinSector {
  double lo = -1.0;
  double hi = 1.0;
};

struct WideBeamOptions {
  std::size_t max_iters = 300;
  double tol = 1e-9;
  std::size_t grid_size = 1024;
  double min_in_out_ratio = 4.0;
};

struct WideBeamResult {
  ComplexVector weights;
  /// True when the returned beam meets the in/out-of-sector gain contract.
  bool converged = false;
  std::size_t iterations = 0;
  double in_out_ratio = 0.0;
};

/// Sin-space evaluation grid of `grid_size` midpoints over [-1, 1).
inline RealVector pattern_grid(std::size_t grid_size) {
  RealVector u(static_cast<Eigen::Index>(grid_size));
  for (std::size_t g = 0; g < grid_size; ++g) {
    u[static_cast<Eigen::Index>(g)] =
        -1.0 + (2.0 * static_cast<double>(g) + 1.0) / static_cast<double>(grid_size);
  }
  return u;
}

/// |a(u)^H w|^2 over a sin-space grid.
inline RealVector beam_pattern(const ComplexVector& w, const ArrayConfig& array, const RealVector& grid) {
  RealVector p(grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    p[g] = std::norm(beam_response(w, steering_vector_sin(grid[g], array)));
  }
  return p;
}

struct SectorGains {
  double mean_in = 0.0;
  double mean_out = 0.0;
  double min_in = 0.0;
  double max_in = 0.0;

  double in_out_ratio() const {
    return mean_out > 0.0 ? mean_in / mean_out : std::numeric_limits<double>::infinity();
  }
};

inline SectorGains sector_gains(const RealVector& pattern, const RealVector& grid, SinSector sector) {
  SectorGains s;
  s.min_in = std::numeric_limits<double>::infinity();
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    if (grid[g] >= sector.lo && grid[g] < sector.hi) {
      s.mean_in += pattern[g];
      s.min_in = std::min(s.min_in, pattern[g]);
      s.max_in = std::max(s.max_in, pattern[g]);
      ++n_in;
    } else {
      s.mean_out += pattern[g];
      ++n_out;
    }
  }
  if (n_in) s.mean_in /= static_cast<double>(n_in);
  if (n_out) s.mean_out /= static_cast<double>(n_out);
  return s;
}

inline ComplexVector project_constant_modulus(const ComplexVector& w) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.size()));
  ComplexVector out(w.size());
  for (Eigen::Index n = 0; n < w.size(); ++n) {
    out[n] = w[n] == Complex{} ? Complex{scale, 0.0} : std::polar(scale, std::arg(w[n]));
  }
  return out;
}

inline WideBeamResult synthesize_wide_beam(const ArrayConfig& array, SinSector sector,
                                           const WideBeamOptions& options = {}) {
  array.validate();
  require(sector.lo >= -1.0 && sector.hi <= 1.0 && sector.lo < sector.hi, "invalid sin-space sector");
  require(options.max_iters >= 1, "max_iters must be at least 1");
  require(options.grid_size >= 2, "pattern grid too small");

  const auto nt = static_cast<Eigen::Index>(array.num_elements);
  const RealVector grid = pattern_grid(options.grid_size);
  const auto n_grid = grid.size();

  ComplexMatrix steering(nt, n_grid);
  Eigen::Array<bool, Eigen::Dynamic, 1> in_sector(n_grid);
  Eigen::Index n_in = 0;
  for (Eigen::Index g = 0; g < n_grid; ++g) {
    steering.col(g) = steering_vector_sin(grid[g], array);
    in_sector[g] = grid[g] >= sector.lo && grid[g] < sector.hi;
    n_in += in_sector[g] ? 1 : 0;
  }
  require(n_in > 0, "sector narrower than the pattern grid spacing");

  // Least-squares back-projection: w = (A A^H)^{-1} A q.
  const ComplexMatrix gram = steering * steering.adjoint();
  const ComplexMatrix back_projection = gram.ldlt().solve(steering);

  // Flat-top level that carries the full beam energy inside the sector.
  const double fraction = static_cast<double>(n_in) / static_cast<double>(n_grid);
  const double level = std::sqrt(1.0 / (static_cast<double>(nt) * fraction));

  // Start: steer to the sector center and broaden with a quadratic phase
  // whose instantaneous spatial frequency sweeps the sector width.
  const double center = 0.5 * (sector.lo + sector.hi);
  const double width = sector.hi - sector.lo;
  const double curvature =
      nt > 1 ? kPi * array.element_spacing_ratio * width / static_cast<double>(nt - 1) : 0.0;
  ComplexVector w(nt);
  const double scale = 1.0 / std::sqrt(static_cast<double>(nt));
  for (Eigen::Index n = 0; n < nt; ++n) {
    const double offset = static_cast<double>(n) - 0.5 * static_cast<double>(nt - 1);
    const double phase = 2.0 * kPi * array.element_spacing_ratio * center * static_cast<double>(n) +
                         curvature * offset * offset;
    w[n] = std::polar(scale, phase);
  }

  auto mismatch = [&](const ComplexVector& candidate) {
    const ComplexVector pattern = steering.adjoint() * candidate;
    double err = 0.0;
    for (Eigen::Index g = 0; g < n_grid; ++g) {
      const double target = in_sector[g] ? level : 0.0;
      const double d = std::abs(pattern[g]) - target;
      err += d * d;
    }
    return err;
  };

  WideBeamResult result;
  ComplexVector best = w;
  double best_err = mismatch(w);
  std::size_t iter = 0;
  while (iter < options.max_iters) {
    ++iter;
    const ComplexVector pattern = steering.adjoint() * w;
    ComplexVector target(n_grid);
    for (Eigen::Index g = 0; g < n_grid; ++g) {
      target[g] = in_sector[g]
                      ? (pattern[g] == Complex{} ? Complex{level, 0.0} : std::polar(level, std::arg(pattern[g])))
                      : Complex{};
    }
    const ComplexVector next = project_constant_modulus(back_projection * target);
    const double step = (next - w).norm();
    w = next;
    const double err = mismatch(w);
    if (err < best_err) {
      best_err = err;
      best = w;
    }
    if (step < options.tol) break;
  }

  result.weights = best;
  result.iterations = iter;
  const SectorGains gains = sector_gains(beam_pattern(best, array, grid), grid, sector);
  result.in_out_ratio = gains.in_out_ratio();
  result.converged = result.in_out_ratio >= options.min_in_out_ratio;
  return result;
}

/// Angular form: the sector [center - width/2, center + width/2] clipped to
/// the half-space and mapped to sin-azimuth.
inline WideBeamResult synthesize_wide_beam(const ArrayConfig& array, double sector_center, double sector_width,
                                           std::size_t max_iters, double tol) {
  require(sector_width > 0.0 && sector_width <= kPi, "sector width must lie in (0, pi]");
  const double lo = std::max(sector_center - sector_width / 2.0, -kAzimuthLimit);
  const double hi = std::min(sector_center + sector_width / 2.0, kAzimuthLimit);
  require(lo < hi, "sector lies outside the half-space");
  WideBeamOptions options;
  options.max_iters = max_iters;
  options.tol = tol;
  return synthesize_wide_beam(array, SinSector{std::sin(lo), std::sin(hi)}, options);
}

// ---------------------------------------------------------------------------
// Hierarchies
// ---------------------------------------------------------------------------

enum class HierarchyKind { two_tier, binary_tree };

struct HierarchyTier {
  Codebook codebook;
  /// children[i] lists the next-tier beams under beam i; empty on the leaf tier.
  std::vector<std::vector<std::size_t>> children;
  std::size_t unconverged_beams = 0;
};

/// Tier 0 is swept in full; the search then descends into the children of
/// the best beam at each tier. The last tier is the narrow DFT codebook.
struct HierarchicalCodebook {
  HierarchyKind kind = HierarchyKind::two_tier;
  std::vector<HierarchyTier> tiers;

  const Codebook& leaf() const { return tiers.back().codebook; }
  std::size_t num_narrow() const { return leaf().num_beams(); }

  /// Checks that every tier's children partition the next tier's beams.
  void validate() const {
    require(!tiers.empty(), "hierarchy has no tiers");
    for (std::size_t t = 0; t < tiers.size(); ++t) {
      const auto& tier = tiers[t];
      require(tier.codebook.num_elements() == leaf().num_elements(), "tier element count mismatch");
      if (t + 1 == tiers.size()) {
        require(tier.children.empty() || std::all_of(tier.children.begin(), tier.children.end(),
                                                      [](const auto& c) { return c.empty(); }),
                "leaf tier must not have children");
        continue;
      }
      require(tier.children.size() == tier.codebook.num_beams(), "children map size mismatch");
      const std::size_t next = tiers[t + 1].codebook.num_beams();
      std::vector<int> seen(next, 0);
      for (const auto& kids : tier.children) {
        require(!kids.empty(), "non-leaf beam without children");
        for (std::size_t k : kids) {
          require(k < next, "child index out of range");
          ++seen[k];
        }
      }
      require(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }),
              "children do not partition the next tier");
    }
  }
};

namespace detail {

/// Codebook of `num_beams` contiguous sin-space sectors that tile [-1, 1).
inline HierarchyTier sector_tier(const ArrayConfig& array, std::size_t num_beams, std::size_t narrow_per_beam,
                                 std::size_t num_narrow, const WideBeamOptions& options) {
  HierarchyTier tier;
  tier.codebook.kind = CodebookKind::wide_sector;
  tier.codebook.weights.resize(static_cast<Eigen::Index>(array.num_elements), static_cast<Eigen::Index>(num_beams));
  const double narrow_width = 2.0 / static_cast<double>(num_narrow);
  for (std::size_t j = 0; j < num_beams; ++j) {
    const SinSector sector{-1.0 + narrow_width * static_cast<double>(j * narrow_per_beam),
                           -1.0 + narrow_width * static_cast<double>((j + 1) * narrow_per_beam)};
    const WideBeamResult beam = synthesize_wide_beam(array, sector, options);
    if (!beam.converged) ++tier.unconverged_beams;
    tier.codebook.weights.col(static_cast<Eigen::Index>(j)) = beam.weights;
  }
  return tier;
}

inline std::vector<std::vector<std::size_t>> contiguous_children(std::size_t num_parents, std::size_t per_parent) {
  std::vector<std::vector<std::size_t>> children(num_parents);
  for (std::size_t i = 0; i < num_parents; ++i) {
    for (std::size_t c = 0; c < per_parent; ++c) children[i].push_back(i * per_parent + c);
  }
  return children;
}

}  // namespace detail

inline HierarchicalCodebook build_two_tier(const ArrayConfig& array, std::size_t n_narrow, std::size_t n_wide,
                                           const WideBeamOptions& options = {}) {
  array.validate();
  require(n_wide >= 2, "2-tier hierarchy needs at least two wide beams");
  require(n_narrow >= n_wide && n_narrow % n_wide == 0,
          "number of wide beams must divide the number of narrow beams");
  const std::size_t per_wide = n_narrow / n_wide;
  HierarchicalCodebook h;
  h.kind = HierarchyKind::two_tier;
  h.tiers.push_back(detail::sector_tier(array, n_wide, per_wide, n_narrow, options));
  h.tiers[0].children = detail::contiguous_children(n_wide, per_wide);
  h.tiers.push_back(HierarchyTier{dft_codebook(array, n_narrow), {}, 0});
  return h;
}

inline HierarchicalCodebook build_binary_tree(const ArrayConfig& array, std::size_t n_narrow,
                                              const WideBeamOptions& options = {}) {
  array.validate();
  require(n_narrow >= 2 && std::has_single_bit(n_narrow), "binary tree needs a power-of-two narrow codebook");
  const auto levels = static_cast<std::size_t>(std::countr_zero(n_narrow));
  HierarchicalCodebook h;
  h.kind = HierarchyKind::binary_tree;
  for (std::size_t level = 1; level < levels; ++level) {
    const std::size_t beams = std::size_t{1} << level;
    HierarchyTier tier = detail::sector_tier(array, beams, n_narrow / beams, n_narrow, options);
    tier.children = detail::contiguous_children(beams, 2);
    h.tiers.push_back(std::move(tier));
  }
  h.tiers.push_back(HierarchyTier{dft_codebook(array, n_narrow), {}, 0});
  return h;
}

// ---------------------------------------------------------------------------
// Export: BACD payload (columns as records) plus a JSON sidecar with the kind.
// ---------------------------------------------------------------------------

inline std::filesystem::path codebook_sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

inline void save_codebook(const Codebook& codebook, const ArrayConfig& array, const std::filesystem::path& path) {
  require(codebook.num_elements() == array.num_elements, "codebook does not match array size");
  ChannelDataset as_records;
  as_records.array = array;
  as_records.channels = codebook.weights;
  save_dataset(as_records, path);
  nlohmann::json meta = {{"kind", to_string(codebook.kind)},
                         {"num_elements", codebook.num_elements()},
                         {"num_beams", codebook.num_beams()}};
  std::ofstream side(codebook_sidecar_path(path));
  side << meta.dump(2) << '\n';
}

inline Codebook load_codebook(const std::filesystem::path& path) {
  const ChannelDataset records = load_dataset(path);
  std::ifstream side(codebook_sidecar_path(path));
  if (!side) throw FormatError("missing codebook sidecar " + codebook_sidecar_path(path).string());
  const auto meta = nlohmann::json::parse(side);
  Codebook cb;
  cb.kind = codebook_kind_from_string(meta.at("kind").get<std::string>());
  cb.weights = records.channels;
  if (meta.at("num_beams").get<std::size_t>() != cb.num_beams()) {
    throw FormatError("sidecar num_beams disagrees with payload");
  }
  return cb;
}

}  // namespace beamprobe
