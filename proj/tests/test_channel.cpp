#include "beamprobe/channel.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace beamprobe;

namespace {

ArrayConfig ula(std::size_t nt) { return {nt, 0.5, 28.0}; }

SceneConfig two_cluster_scene(std::uint64_t seed) {
  SceneConfig s;
  s.clusters = {{0.3, 0.1, -60.0, 3.0, 2}, {-0.6, 0.05, -70.0, 4.0, 3}};
  s.los_probability = 0.6;
  s.rng_seed = seed;
  return s;
}

std::string serialize(const ChannelDataset& ds) {
  std::ostringstream s;
  write_dataset(s, ds);
  return s.str();
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("beamprobe_test_" + name);
}

}  // namespace

TEST(SteeringVector, BroadsideIsAllEqual) {
  const ComplexVector a = steering_vector(0.0, ula(4));
  for (Eigen::Index n = 0; n < 4; ++n) {
    EXPECT_NEAR(a[n].real(), 0.5, 1e-15);
    EXPECT_NEAR(a[n].imag(), 0.0, 1e-15);
  }
}

TEST(SteeringVector, EndfireLimitAlternatesSign) {
  const ComplexVector a = steering_vector(kPi / 2.0 - 1e-9, ula(2));
  EXPECT_NEAR(a[0].real(), std::sqrt(0.5), 1e-9);
  EXPECT_NEAR(a[1].real(), -std::sqrt(0.5), 1e-9);
  EXPECT_NEAR(a[1].imag(), 0.0, 1e-8);
}

TEST(SteeringVector, ThirtyDegreesStepsByQuarterTurn) {
  const ComplexVector a = steering_vector(kPi / 6.0, ula(4));
  const Complex expected[] = {{0.5, 0.0}, {0.0, 0.5}, {-0.5, 0.0}, {0.0, -0.5}};
  for (Eigen::Index n = 0; n < 4; ++n) {
    EXPECT_NEAR(a[n].real(), expected[n].real(), 1e-15);
    EXPECT_NEAR(a[n].imag(), expected[n].imag(), 1e-15);
  }
}

TEST(SteeringVector, RejectsAzimuthOutsideOpenInterval) {
  EXPECT_THROW(steering_vector(kPi / 2.0, ula(4)), DomainError);
  EXPECT_THROW(steering_vector(-kPi / 2.0, ula(4)), DomainError);
  EXPECT_THROW(steering_vector(2.0, ula(4)), DomainError);
  EXPECT_THROW(steering_vector(std::nan(""), ula(4)), DomainError);
}

TEST(SteeringVector, RejectsInvalidArray) {
  EXPECT_THROW(steering_vector(0.1, ArrayConfig{0, 0.5, 28.0}), DomainError);
  EXPECT_THROW(steering_vector(0.1, ArrayConfig{4, 0.0, 28.0}), DomainError);
}

TEST(SteeringVector, UnitNormAndConstantModulusOverRandomAngles) {
  RandomStream rng(17);
  for (std::size_t nt : {1u, 2u, 7u, 16u, 64u}) {
    for (int t = 0; t < 50; ++t) {
      const double az = rng.uniform(-1.5, 1.5);
      const ComplexVector a = steering_vector(az, ula(nt));
      EXPECT_NEAR(a.norm(), 1.0, 1e-12);
      for (Eigen::Index n = 0; n < a.size(); ++n) {
        EXPECT_NEAR(std::abs(a[n]), 1.0 / std::sqrt(static_cast<double>(nt)), 1e-15);
      }
    }
  }
}

TEST(SteeringVector, MatchesClosedFormWithNonHalfSpacing) {
  const ArrayConfig array{5, 0.7, 60.0};
  const double az = -0.4;
  const ComplexVector a = steering_vector(az, array);
  for (int n = 0; n < 5; ++n) {
    const std::complex<double> want =
        std::exp(std::complex<double>(0.0, 2.0 * kPi * 0.7 * n * std::sin(az))) / std::sqrt(5.0);
    EXPECT_NEAR(std::abs(a[n] - want), 0.0, 1e-14);
  }
}

TEST(SynthesizeChannel, SinglePathReducesToSteeringVector) {
  const ComplexVector h = synthesize_channel({{Complex(1.0, 0.0), 0.0}}, ula(4));
  for (Eigen::Index n = 0; n < 4; ++n) EXPECT_NEAR(std::abs(h[n] - Complex(0.5, 0.0)), 0.0, 1e-15);
}

TEST(SynthesizeChannel, OpposingPathsCancel) {
  const ComplexVector h = synthesize_channel({{Complex(1.0, 0.0), 0.0}, {Complex(-1.0, 0.0), 0.0}}, ula(4));
  EXPECT_EQ(h.norm(), 0.0);
}

TEST(SynthesizeChannel, MatchesScalarLoopOracle) {
  RandomStream rng(23);
  const ArrayConfig array = ula(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PathSpec> paths;
    for (int l = 0; l < 3; ++l) paths.push_back({rng.complex_normal(1.0), rng.uniform(-1.4, 1.4)});
    const ComplexVector h = synthesize_channel(paths, array);
    for (int n = 0; n < 8; ++n) {
      std::complex<double> acc = 0.0;
      for (const auto& p : paths) {
        acc += p.gain * std::exp(std::complex<double>(0.0, kPi * n * std::sin(p.azimuth))) / std::sqrt(8.0);
      }
      EXPECT_NEAR(std::abs(h[n] - acc), 0.0, 1e-13);
    }
  }
}

TEST(SynthesizeChannel, EmptyPathListIsDomainError) {
  EXPECT_THROW(synthesize_channel({}, ula(4)), DomainError);
}

TEST(SynthesizeChannel, LinearInPathGains) {
  RandomStream rng(29);
  std::vector<PathSpec> paths = {{rng.complex_normal(1.0), 0.2}, {rng.complex_normal(1.0), -0.9}};
  const Complex c(0.3, -1.7);
  const ComplexVector h = synthesize_channel(paths, ula(16));
  for (auto& p : paths) p.gain *= c;
  const ComplexVector hc = synthesize_channel(paths, ula(16));
  EXPECT_LT((hc - c * h).norm(), 1e-13);
}

TEST(GenerateDataset, SameSeedIsBitIdentical) {
  const auto a = generate_dataset(two_cluster_scene(7), 100, ula(16));
  const auto b = generate_dataset(two_cluster_scene(7), 100, ula(16));
  EXPECT_EQ(serialize(a), serialize(b));
  const auto c = generate_dataset(two_cluster_scene(8), 100, ula(16));
  EXPECT_NE(serialize(a), serialize(c));
}

TEST(GenerateDataset, SamplesDoNotDependOnCount) {
  const auto small = generate_dataset(two_cluster_scene(7), 10, ula(16));
  const auto large = generate_dataset(two_cluster_scene(7), 100, ula(16));
  EXPECT_EQ(small.channels, large.channels.leftCols(10));
}

TEST(GenerateDataset, DegenerateSceneGivesIdenticalChannels) {
  SceneConfig s;
  s.clusters = {{0.25, 0.0, -50.0, 0.0, 2}};
  s.los_probability = 1.0;
  s.rng_seed = 99;
  s.fixed_phase_seed = 1234;
  const auto ds = generate_dataset(s, 100, ula(8));
  for (Eigen::Index j = 1; j < 100; ++j) EXPECT_EQ(ds.channels.col(j), ds.channels.col(0));
}

TEST(GenerateDataset, RandomPhasesDifferWithoutFixedPhaseSeed) {
  SceneConfig s;
  s.clusters = {{0.25, 0.0, -50.0, 0.0, 1}};
  s.rng_seed = 99;
  const auto ds = generate_dataset(s, 2, ula(8));
  EXPECT_NE(ds.channels.col(0), ds.channels.col(1));
  EXPECT_NEAR(ds.channels.col(0).norm(), ds.channels.col(1).norm(), 1e-15);
}

TEST(GenerateDataset, AzimuthHistogramHasModesAtClusterMeans) {
  const double spread = 0.03;
  SceneConfig s;
  s.clusters = {{kPi / 4.0, spread, 0.0, 0.0, 1}, {-kPi / 4.0, spread, 0.0, 0.0, 1}};
  s.los_probability = 0.5;
  s.rng_seed = 5;
  const ArrayConfig array = ula(32);
  const std::size_t count = 10000;
  const auto ds = generate_dataset(s, count, array);

  // Dominant direction of each channel from a grid scan of |a(phi)^H h|.
  std::vector<std::vector<oracle::cd>> grid;
  std::vector<double> angles;
  for (int g = -360; g <= 360; ++g) {
    const double az = g * (kPi / 720.0) * 0.999;
    angles.push_back(az);
    grid.push_back(oracle::to_std(steering_vector(az, array)));
  }
  std::size_t pos = 0, neg = 0;
  double pos_sum = 0.0, neg_sum = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    const auto h = oracle::to_std(ds.channels.col(static_cast<Eigen::Index>(j)));
    std::vector<double> response;
    for (const auto& a : grid) response.push_back(oracle::gain(h, a));
    const double peak = angles[oracle::scan_argmax(response)];
    if (std::abs(peak - kPi / 4.0) < 5 * spread) {
      ++pos;
      pos_sum += peak;
    } else if (std::abs(peak + kPi / 4.0) < 5 * spread) {
      ++neg;
      neg_sum += peak;
    }
  }
  EXPECT_GE(pos + neg, count * 99 / 100);
  EXPECT_GT(pos, count / 5);
  EXPECT_GT(neg, count / 5);
  EXPECT_NEAR(pos_sum / static_cast<double>(pos), kPi / 4.0, 0.01);
  EXPECT_NEAR(neg_sum / static_cast<double>(neg), -kPi / 4.0, 0.01);
}

TEST(GenerateDataset, LosDropFollowsProbability) {
  SceneConfig s;
  s.clusters = {{0.5, 0.0, 0.0, 0.0, 1}, {-0.5, 0.0, -40.0, 0.0, 1}};
  s.los_probability = 0.3;
  s.rng_seed = 77;
  const auto ds = generate_dataset(s, 5000, ula(8));
  std::size_t strong = 0;
  for (Eigen::Index j = 0; j < 5000; ++j) strong += ds.channels.col(j).norm() > 0.5 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(strong) / 5000.0, 0.3, 0.03);
}

TEST(GenerateDataset, ClampsAzimuthsIntoOpenInterval) {
  SceneConfig s;
  s.clusters = {{1.5, 1.0, 0.0, 0.0, 4}};
  s.rng_seed = 3;
  EXPECT_NO_THROW(generate_dataset(s, 200, ula(8)));
}

TEST(GenerateDataset, NeverEmitsEmptyChannels) {
  SceneConfig s;
  s.clusters = {{0.2, 0.0, 0.0, 0.0, 1}, {-0.2, 0.0, 0.0, 0.0, 1}};
  s.los_probability = 0.0;
  s.rng_seed = 4;
  const auto ds = generate_dataset(s, 50, ula(8));
  for (Eigen::Index j = 0; j < 50; ++j) EXPECT_NEAR(ds.channels.col(j).norm(), 1.0, 1e-12);
}

TEST(GenerateDataset, RejectsInvalidInputs) {
  EXPECT_THROW(generate_dataset(two_cluster_scene(1), 0, ula(8)), DomainError);
  SceneConfig empty;
  EXPECT_THROW(generate_dataset(empty, 10, ula(8)), DomainError);
  SceneConfig negative = two_cluster_scene(1);
  negative.clusters[0].angular_spread = -0.1;
  EXPECT_THROW(generate_dataset(negative, 10, ula(8)), DomainError);
  SceneConfig bad_prob = two_cluster_scene(1);
  bad_prob.los_probability = 1.5;
  EXPECT_THROW(generate_dataset(bad_prob, 10, ula(8)), DomainError);
  SceneConfig never;
  never.clusters = {{0.0, 0.0, 0.0, 0.0, 1}};
  never.los_probability = 0.0;
  EXPECT_THROW(generate_dataset(never, 10, ula(8)), DomainError);
}

TEST(NormalizeDataset, DividesByLargestMagnitude) {
  ChannelDataset ds;
  ds.array = ula(2);
  ds.channels.resize(2, 2);
  ds.channels << Complex(1.0, 0.0), Complex(0.0, -4.0), Complex(2.0, 2.0), Complex(-0.5, 0.0);
  const auto n = normalize_dataset(ds);
  EXPECT_DOUBLE_EQ(n.factor, 4.0);
  EXPECT_DOUBLE_EQ(n.dataset.channels.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_EQ(n.dataset.normalization_factor, 4.0);
  EXPECT_EQ(n.dataset.channels(0, 0), Complex(0.25, 0.0));
}

TEST(NormalizeDataset, MaxOneInputIsIdentity) {
  ChannelDataset ds;
  ds.array = ula(2);
  ds.channels.resize(2, 1);
  ds.channels << Complex(1.0, 0.0), Complex(0.0, 0.5);
  const auto n = normalize_dataset(ds);
  EXPECT_EQ(n.factor, 1.0);
  EXPECT_EQ(n.dataset.channels, ds.channels);
}

TEST(NormalizeDataset, IdempotentOnRandomData) {
  const auto ds = generate_dataset(two_cluster_scene(12), 200, ula(16));
  const auto once = normalize_dataset(ds);
  const auto twice = normalize_dataset(once.dataset);
  EXPECT_NEAR(once.dataset.channels.cwiseAbs().maxCoeff(), 1.0, 1e-12);
  EXPECT_NEAR(twice.factor, 1.0, 1e-12);
  EXPECT_LT((twice.dataset.channels - once.dataset.channels).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(*twice.dataset.normalization_factor, once.factor, 1e-12 * once.factor);
}

TEST(NormalizeDataset, PreservesElementRatios) {
  const auto ds = generate_dataset(two_cluster_scene(13), 20, ula(8));
  const auto n = normalize_dataset(ds);
  for (Eigen::Index j = 1; j < 20; ++j) {
    const Complex before = ds.channels(3, j) / ds.channels(5, 0);
    const Complex after = n.dataset.channels(3, j) / n.dataset.channels(5, 0);
    EXPECT_NEAR(std::abs(before - after), 0.0, 1e-12 * std::abs(before));
  }
}

TEST(NormalizeDataset, AllZeroIsDomainError) {
  ChannelDataset ds;
  ds.array = ula(4);
  ds.channels = ComplexMatrix::Zero(4, 3);
  EXPECT_THROW(normalize_dataset(ds), DomainError);
}

TEST(DatasetFile, RoundTripIsBitExact) {
  const auto ds = generate_dataset(two_cluster_scene(21), 37, ArrayConfig{12, 0.45, 60.0});
  const auto path = temp_file("roundtrip.bacd");
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  EXPECT_EQ(back.array.num_elements, 12u);
  EXPECT_EQ(back.array.element_spacing_ratio, 0.45);
  EXPECT_EQ(back.array.carrier_ghz, 60.0);
  EXPECT_FALSE(back.normalized());
  EXPECT_EQ(back.channels, ds.channels);
  EXPECT_EQ(serialize(back), serialize(ds));

  const auto norm = normalize_dataset(ds).dataset;
  save_dataset(norm, path);
  const auto nback = load_dataset(path);
  EXPECT_EQ(nback.normalization_factor, norm.normalization_factor);
  EXPECT_EQ(nback.channels, norm.channels);
  std::filesystem::remove(path);
}

TEST(DatasetFile, HeaderLayoutIsFixedWidth) {
  ChannelDataset ds;
  ds.array = ula(3);
  ds.channels = ComplexMatrix::Constant(3, 2, Complex(1.0, -2.0));
  const std::string raw = serialize(ds);
  EXPECT_EQ(raw.size(), 4u + 4 + 4 + 8 + 8 + 8 + 1 + 8 + 2 * 3 * 16);
  EXPECT_EQ(raw.substr(0, 4), "BACD");
  EXPECT_EQ(static_cast<unsigned char>(raw[4]), 1u);   // version
  EXPECT_EQ(static_cast<unsigned char>(raw[8]), 3u);   // Nt
  EXPECT_EQ(static_cast<unsigned char>(raw[28]), 2u);  // count
}

TEST(DatasetFile, BadMagicIsFormatError) {
  std::string raw = serialize(generate_dataset(two_cluster_scene(1), 2, ula(4)));
  raw.replace(0, 4, "XXXX");
  std::istringstream in(raw);
  try {
    read_dataset(in);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(DatasetFile, UnsupportedVersionIsFormatError) {
  std::string raw = serialize(generate_dataset(two_cluster_scene(1), 2, ula(4)));
  raw[4] = 2;
  std::istringstream in(raw);
  try {
    read_dataset(in);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(DatasetFile, MissingRecordIsTruncationError) {
  std::string raw = serialize(generate_dataset(two_cluster_scene(1), 5, ula(4)));
  raw.resize(raw.size() - 4 * 16);
  std::istringstream in(raw);
  try {
    read_dataset(in);
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("truncated"), std::string::npos);
    EXPECT_NE(msg.find("count=5"), std::string::npos);
    EXPECT_NE(msg.find("4 records"), std::string::npos);
  }
}

TEST(DatasetFile, TruncatedHeaderNamesField) {
  std::string raw = serialize(generate_dataset(two_cluster_scene(1), 1, ula(4)));
  raw.resize(10);
  std::istringstream in(raw);
  try {
    read_dataset(in);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("num_elements"), std::string::npos);
  }
}

TEST(DatasetFile, TrailingBytesAreRejected) {
  std::string raw = serialize(generate_dataset(two_cluster_scene(1), 2, ula(4)));
  raw += "extra";
  std::istringstream in(raw);
  EXPECT_THROW(read_dataset(in), FormatError);
}

TEST(DatasetFile, MissingFileIsReported) {
  EXPECT_THROW(load_dataset(temp_file("does_not_exist.bacd")), std::runtime_error);
}
