#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "fwi/error.hpp"
#include "fwi/grid_io.hpp"
#include "fwi/model.hpp"
#include "test_util.hpp"

using namespace fwi;
using fwi::testing::random_grid;
using fwi::testing::scratch_dir;

TEST(Ricker, PeakAtZero) { EXPECT_DOUBLE_EQ(ricker(0.0, 5.0), 1.0); }

TEST(Ricker, RootOfPolynomialFactor) {
  for (double f : {2.0, 5.0, 12.5}) EXPECT_NEAR(ricker(1.0 / (std::sqrt(2.0) * std::numbers::pi * f), f), 0.0, 1e-15);
}

TEST(Ricker, SidelobeValue) {
  // 2 pi^2 f^2 t^2 = 4.9348, exp(-2.4674) = 0.08480
  const double a = 2.0 * std::numbers::pi * std::numbers::pi * 25.0 * 0.01;
  EXPECT_NEAR(ricker(0.1, 5.0), (1.0 - a) * std::exp(-a / 2.0), 1e-15);
  EXPECT_NEAR(ricker(0.1, 5.0), -0.3334, 5e-4);
}

TEST(Ricker, EvenSymmetry) {
  for (double t = 0.0; t < 1.0; t += 0.0137) EXPECT_EQ(ricker(t, 7.0), ricker(-t, 7.0));
}

TEST(Ricker, SpectrumPeaksAtPeakFrequency) {
  const double dt = 0.002, f = 5.0;
  const int n = 2048;
  AcquisitionGeometry g;
  g.peak_freq = f;
  g.delay = 1.0 / f;
  std::vector<double> s(n);
  for (int i = 0; i < n; ++i) s[i] = g.wavelet(i * dt);
  const double df = 1.0 / (n * dt);
  int best = 0;
  double best_amp = 0.0;
  for (int k = 1; k < n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int i = 0; i < n; ++i) acc += s[i] * std::polar(1.0, -2.0 * std::numbers::pi * k * i / n);
    if (std::abs(acc) > best_amp) best_amp = std::abs(acc), best = k;
  }
  EXPECT_LE(std::abs(best * df - f), df);
}

TEST(Cfl, LimitMatchesNumericalSymbolMaximum) {
  // Independent: scan the 1D symbol of the second-derivative stencil.
  const double c[5] = {-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0};
  double peak = 0.0;
  for (int i = 0; i <= 200000; ++i) {
    const double th = std::numbers::pi * i / 200000.0;
    double s = c[0];
    for (int k = 1; k <= 4; ++k) s += 2.0 * c[k] * std::cos(k * th);
    peak = std::max(peak, -s);
  }
  EXPECT_NEAR(courant_limit(), 2.0 / std::sqrt(2.0 * peak), 1e-12);
  EXPECT_NEAR(courant_limit(), 0.55463, 1e-5);
}

TEST(Cfl, FarAboveBoundFails) {
  const CflVerdict v = validate_cfl(3000.0, 30.0, 0.05);
  EXPECT_DOUBLE_EQ(v.courant, 5.0);
  EXPECT_FALSE(v.stable);
}

TEST(Cfl, ReferenceSettingCourantNumber) {
  // C = 0.5772 exceeds the bound of this scheme; the 3 ms setting needs
  // two substeps per record sample.
  const CflVerdict v = validate_cfl(5772.0, 30.0, 0.003);
  EXPECT_NEAR(v.courant, 0.5772, 1e-12);
  EXPECT_FALSE(v.stable);
  EXPECT_TRUE(validate_cfl(5772.0, 30.0, 0.0015).stable);
}

TEST(Cfl, RejectsNonPositiveInputs) { EXPECT_THROW(validate_cfl(0.0, 1.0, 1.0), Error); }

namespace {

DataSet synthetic_data(std::size_t shots, std::size_t nr, std::size_t nt, std::uint64_t seed) {
  DataSet d;
  for (std::size_t s = 0; s < shots; ++s)
    d.shots.push_back({static_cast<int>(s), random_grid(nr, nt, seed + s), 0.004});
  return d;
}

}  // namespace

TEST(Noise, ZeroLevelIsIdentity) {
  const DataSet d = synthetic_data(2, 3, 50, 1);
  const DataSet n = add_noise(d, 0.0, 99);
  EXPECT_EQ(n.noise_sigma, 0.0);
  for (std::size_t s = 0; s < d.shots.size(); ++s) EXPECT_EQ(n.shots[s].traces, d.shots[s].traces);
}

TEST(Noise, SigmaIsRelativeToRms) {
  DataSet d;
  d.shots.push_back({0, Grid2(100, 1000, 2.0), 0.004});  // rms 2
  d.shots.push_back({1, Grid2(100, 1000, -2.0), 0.004});
  const DataSet n = add_noise(d, 0.1, 5);
  EXPECT_DOUBLE_EQ(n.noise_sigma, 0.2);
  double sum = 0.0, sq = 0.0;
  std::size_t cnt = 0;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < d.shots[s].traces.size(); ++i) {
      const double e = n.shots[s].traces.values()[i] - d.shots[s].traces.values()[i];
      sum += e;
      sq += e * e;
      ++cnt;
    }
  const double mean = sum / cnt;
  const double sd = std::sqrt(sq / cnt - mean * mean);
  EXPECT_NEAR(sd, 0.2, 0.01);
}

TEST(Noise, DeterministicPerSeed) {
  const DataSet d = synthetic_data(3, 4, 64, 2);
  const DataSet a = add_noise(d, 0.3, 17), b = add_noise(d, 0.3, 17), c = add_noise(d, 0.3, 18);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(a.shots[s].traces, b.shots[s].traces);
    EXPECT_NE(a.shots[s].traces, c.shots[s].traces);
  }
}

TEST(Noise, MeanOverSeedsConvergesToClean) {
  const DataSet d = synthetic_data(1, 2, 16, 3);
  const int seeds = 400;
  Grid2 mean(2, 16);
  double sigma = 0.0;
  for (int k = 0; k < seeds; ++k) {
    const DataSet n = add_noise(d, 0.5, 1000 + k);
    sigma = n.noise_sigma;
    mean += n.shots[0].traces;
  }
  mean *= 1.0 / seeds;
  const double tol = 3.0 * sigma / std::sqrt(static_cast<double>(seeds));
  for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(mean.values()[i], d.shots[0].traces.values()[i], tol);
}

TEST(Model, RejectsInvalidGrids) {
  EXPECT_THROW(VelocityModel(Grid2(7, 20, 1500.0), 10.0), Error);
  EXPECT_THROW(VelocityModel(Grid2(20, 20, 1500.0), 0.0), Error);
  Grid2 g(10, 10, 1500.0);
  g(3, 3) = -1.0;
  EXPECT_THROW(VelocityModel(g, 10.0), Error);
  g(3, 3) = std::nan("");
  EXPECT_THROW(VelocityModel(g, 10.0), Error);
}

TEST(Geometry, ValidateNamesField) {
  AcquisitionGeometry g;
  g.source_x = {1, 1};
  g.receiver_x = {0, 1};
  try {
    g.validate(20, 20);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("source_x"), std::string::npos);
  }
  g.source_x = {1, 25};
  EXPECT_THROW(g.validate(20, 20), Error);
  g.source_x = {1};
  g.nt = 1;
  EXPECT_THROW(g.validate(20, 20), Error);
}

TEST(Geometry, EquallySpacedCoversRange) {
  EXPECT_EQ(equally_spaced(3, 11), (std::vector<int>{0, 5, 10}));
  EXPECT_EQ(equally_spaced(2, 20, 2), (std::vector<int>{2, 17}));
  EXPECT_EQ(equally_spaced(30, 310).size(), 30u);
}

TEST(Layered, FillsBetweenInterfaces) {
  const Grid2 g = layered_model(10, 8, {1.0, 2.0, 3.0}, {3, 7});
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(2, 7), 1.0);
  EXPECT_EQ(g(3, 0), 2.0);
  EXPECT_EQ(g(6, 4), 2.0);
  EXPECT_EQ(g(7, 0), 3.0);
  EXPECT_EQ(g(9, 7), 3.0);
}

TEST(Smooth, PreservesConstantsAndMean) {
  const Grid2 c(12, 9, 2500.0);
  const Grid2 s = smooth_gaussian(c, 2.0);
  for (double v : s.values()) EXPECT_NEAR(v, 2500.0, 1e-9);
  const Grid2 step = layered_model(20, 10, {1.0, 3.0}, {10});
  const Grid2 ss = smooth_gaussian(step, 2.0);
  EXPECT_GT(ss(9, 5), 1.0);
  EXPECT_LT(ss(9, 5), 3.0);
}

TEST(GridIo, RoundTripIsExactForFloatValues) {
  const auto dir = scratch_dir("gridio");
  Grid2 g = random_grid(13, 17, 4, 1000.0, 5000.0);
  for (double& v : g.values()) v = static_cast<float>(v);
  save_grid(dir / "g.fwig", g, 30.0);
  const GridFile r = load_grid(dir / "g.fwig");
  EXPECT_EQ(r.values, g);
  EXPECT_EQ(r.dx, 30.0);
}

TEST(GridIo, ShotRoundTrip) {
  const auto dir = scratch_dir("shotio");
  ShotRecord s{3, random_grid(5, 40, 5), 0.004};
  for (double& v : s.traces.values()) v = static_cast<float>(v);
  save_shot(dir / "s.fwis", s);
  const ShotRecord r = load_shot(dir / "s.fwis", 3);
  EXPECT_EQ(r.traces, s.traces);
  EXPECT_EQ(r.dt, 0.004);
}

namespace {

std::string error_of(const std::filesystem::path& p) {
  try {
    load_grid(p);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string header(const char* magic, std::uint32_t nz, std::uint32_t nx, std::uint32_t reserved) {
  std::string out(magic, 4);
  for (std::uint32_t v : {nz, nx, reserved})
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  const double dx = 10.0;
  char b[8];
  std::memcpy(b, &dx, 8);
  out.append(b, 8);
  return out;
}

}  // namespace

TEST(GridIo, MalformedFilesNameTheProblem) {
  const auto dir = scratch_dir("gridio_bad");
  write_bytes(dir / "magic.fwig", header("FWIX", 10, 10, 0));
  EXPECT_NE(error_of(dir / "magic.fwig").find("bad magic"), std::string::npos);

  write_bytes(dir / "short.fwig", header("FWIG", 10, 10, 0) + std::string(99 * 4, '\0'));
  EXPECT_NE(error_of(dir / "short.fwig").find("truncated payload"), std::string::npos);

  write_bytes(dir / "hdr.fwig", std::string("FWIG\x0a\x00", 6));
  EXPECT_NE(error_of(dir / "hdr.fwig").find("truncated header"), std::string::npos);

  write_bytes(dir / "res.fwig", header("FWIG", 2, 2, 7) + std::string(16, '\0'));
  EXPECT_NE(error_of(dir / "res.fwig").find("reserved"), std::string::npos);

  write_bytes(dir / "dims.fwig", header("FWIG", 0, 2, 0));
  EXPECT_NE(error_of(dir / "dims.fwig").find("bad dims"), std::string::npos);

  try {
    load_grid(dir / "absent.fwig");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_input);
  }
}
