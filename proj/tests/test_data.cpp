// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>

#include "limuse/data.hpp"
#include "limuse/io.hpp"
#include "limuse/rng.hpp"

namespace limuse::data {
namespace {

namespace fs = std::filesystem;

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("limuse_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(Synth, DeterministicAndBounded) {
  for (int id : {0, 3, 9}) {
    const SpeakerProfile s = make_speaker(id, 7);
    const auto a = synth_utterance(s, 1.0, 11);
    const auto b = synth_utterance(s, 1.0, 11);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, synth_utterance(s, 1.0, 12));
    ASSERT_EQ(a.size(), 16000u);
    const double rms = std::sqrt(energy(a) / a.size());
    EXPECT_GE(rms, 0.05);
    EXPECT_LE(rms, 0.5);
  }
  EXPECT_THROW(make_speaker(-1, 1), DataError);
}

TEST(Synth, SpectralPeakInOwnBand) {
  // Plain DFT magnitude at 1 Hz resolution over 0..1 kHz.
  for (int id : {0, 1, 5, 9}) {
    const SpeakerProfile s = make_speaker(id, 3);
    const auto y = synth_utterance(s, 1.0, 5);
    double best = -1.0;
    int peak = 0;
    for (int f = 20; f < 1000; ++f) {
      double re = 0.0, im = 0.0;
      const double w = 2.0 * std::numbers::pi * f / 16000.0;
      for (size_t i = 0; i < y.size(); ++i) {
        re += y[i] * std::cos(w * i);
        im -= y[i] * std::sin(w * i);
      }
      const double mag = re * re + im * im;
      if (mag > best) best = mag, peak = f;
    }
    EXPECT_GE(peak, s.f0_lo) << id;
    EXPECT_LE(peak, s.f0_hi) << id;
  }
  // Bands are disjoint.
  for (int id = 0; id < 20; ++id) {
    EXPECT_LT(make_speaker(id, 1).f0_hi, make_speaker(id + 1, 1).f0_lo);
  }
}

TEST(Mixture, SnrIsExact) {
  const SpeakerProfile a = make_speaker(0, 1), b = make_speaker(2, 1);
  for (double snr : {-5.0, -1.3, 0.0, 2.5, 5.0}) {
    const MixtureSample m = make_mixture(a, b, snr, 99);
    const double got = 10.0 * std::log10(energy(m.target) / energy(m.interferer));
    EXPECT_NEAR(got, snr, 1e-9);
    for (std::int64_t i = 0; i < m.samples; ++i) {
      ASSERT_NEAR(m.mixture[i], m.target[i] + m.interferer[i], 1e-15);
    }
  }
  EXPECT_THROW(make_mixture(a, a, 0.0, 1), DataError);
}

TEST(Mixture, ChannelDelayRecoveredByCorrelation) {
  const SpeakerProfile a = make_speaker(4, 1), b = make_speaker(7, 1);
  SynthOptions opt;
  opt.max_delay = 6;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    MixtureSample m = make_mixture(a, b, 0.0, seed, opt);
    // Target alone in channel 1 is target shifted by delays[0].
    const std::int64_t n = m.samples;
    std::vector<double> t1(n, 0.0);
    for (std::int64_t i = m.delays[0]; i < n; ++i) t1[i] = m.target[i - m.delays[0]];
    std::vector<double> itf1(n, 0.0);
    for (std::int64_t i = m.delays[1]; i < n; ++i) itf1[i] = m.interferer[i - m.delays[1]];
    for (std::int64_t i = 0; i < n; ++i) ASSERT_NEAR(m.mixture[n + i], t1[i] + itf1[i], 1e-15);
    int best_lag = -1;
    double best = -1e300;
    for (int lag = 0; lag <= opt.max_delay; ++lag) {
      double c = 0.0;
      for (std::int64_t i = lag; i < n; ++i) c += t1[i] * m.target[i - lag];
      if (c > best) best = c, best_lag = lag;
    }
    EXPECT_EQ(best_lag, m.delays[0]);
  }
}

TEST(Stubs, Voiceprint) {
  const auto v = stub_voiceprint(make_speaker(3, 1), 512);
  EXPECT_NEAR(energy(v), 1.0, 1e-12);
  EXPECT_EQ(v, stub_voiceprint(make_speaker(3, 1), 512));
  Rng rng(1);
  int below = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int i = static_cast<int>(rng.below(200));
    int j = static_cast<int>(rng.below(199));
    if (j >= i) ++j;
    const auto a = stub_voiceprint(make_speaker(i, 1), 512);
    const auto b = stub_voiceprint(make_speaker(j, 1), 512);
    double c = 0.0;
    for (int d = 0; d < 512; ++d) c += a[d] * b[d];
    below += c < 0.5;
  }
  EXPECT_GE(below, 990);
}

TEST(Stubs, Visual) {
  const SpeakerProfile s = make_speaker(2, 1);
  const std::vector<double> silent(16000, 0.0);
  const auto v0 = stub_visual(s, silent, 8, 25);
  for (int d = 0; d < 8; ++d)
    for (int t = 1; t < 25; ++t) EXPECT_EQ(v0[d * 25 + t], v0[d * 25]);
  EXPECT_THROW(stub_visual(s, silent, 8, 0), DataError);

  const auto y = synth_utterance(s, 2.0, 3);
  const std::int64_t frames = 50;
  const auto v = stub_visual(s, y, 64, frames);
  std::vector<double> norms, energies;
  for (std::int64_t t = 0; t < frames; ++t) {
    double n = 0.0;
    for (int d = 0; d < 64; ++d) n += v[d * frames + t] * v[d * frames + t];
    norms.push_back(std::sqrt(n));
    energies.push_back(energy(std::span<const double>(y).subspan(t * 640, 640)));
  }
  EXPECT_GT(pearson(norms, energies), 0.9);
  const MixtureSample m = make_mixture(s, make_speaker(5, 1), 0.0, 1);
  EXPECT_EQ(m.face_frames, 25);
  EXPECT_EQ(m.visual.size(), 256u * 25u);
}

TEST(Splits, DisjointSpeakers) {
  EXPECT_EQ(speakers_in(Split::kTrain, 10), (std::vector<int>{0, 2, 4, 5, 7, 9}));
  EXPECT_EQ(speakers_in(Split::kValidation, 10), (std::vector<int>{1, 6}));
  EXPECT_EQ(speakers_in(Split::kTest, 10), (std::vector<int>{3, 8}));
  DatasetSpec spec;
  spec.synth.seconds = 0.1;
  const auto tr = generate_split(spec, Split::kTrain, 5);
  const auto tr2 = generate_split(spec, Split::kTrain, 5);
  ASSERT_EQ(tr.size(), 5u);
  for (size_t i = 0; i < tr.size(); ++i) {
    EXPECT_EQ(tr[i].mixture, tr2[i].mixture);
    EXPECT_EQ(speaker_split(tr[i].target_speaker), Split::kTrain);
    EXPECT_EQ(speaker_split(tr[i].interferer_speaker), Split::kTrain);
    EXPECT_GE(tr[i].snr_db, -5.0);
    EXPECT_LE(tr[i].snr_db, 5.0);
  }
  DatasetSpec few;
  few.speakers = 3;
  EXPECT_THROW(generate_split(few, Split::kTest, 2), DataError);
}

TEST(Wav, FixtureBytes) {
  TempDir dir;
  Wav w;
  w.channels = 1;
  w.frames = 2;
  w.data = {0.5, -1.0};
  write_wav(dir.path() / "a.wav", w);
  const std::vector<std::uint8_t> want = {
      'R', 'I', 'F', 'F', 40, 0, 0, 0, 'W', 'A', 'V', 'E',  //
      'f', 'm', 't', ' ', 16, 0, 0, 0, 1, 0, 1, 0,          // PCM, mono
      0x80, 0x3E, 0, 0, 0x00, 0x7D, 0, 0, 2, 0, 16, 0,      // 16000 Hz, 32000 B/s
      'd', 'a', 't', 'a', 4, 0, 0, 0,                       //
      0x00, 0x40, 0x00, 0x80};                              // 16384, -32768
  EXPECT_EQ(io::read_file(dir.path() / "a.wav"), want);
  const Wav r = read_wav(dir.path() / "a.wav");
  EXPECT_EQ(r.data, w.data);
}

TEST(Wav, RoundTripStereo) {
  TempDir dir;
  Wav w;
  w.channels = 2;
  w.frames = 300;
  Rng rng(2);
  for (int i = 0; i < 600; ++i) w.data.push_back(static_cast<int>(rng.below(65536)) / 32768.0 - 1.0);
  write_wav(dir.path() / "s.wav", w);
  const Wav r = read_wav(dir.path() / "s.wav");
  EXPECT_EQ(r.channels, 2);
  EXPECT_EQ(r.frames, 300);
  EXPECT_EQ(r.data, w.data);
}

TEST(Wav, RejectsOtherRates) {
  TempDir dir;
  auto bytes = std::vector<std::uint8_t>{
      'R', 'I', 'F', 'F', 38, 0, 0, 0, 'W', 'A', 'V', 'E',  //
      'f', 'm', 't', ' ', 16, 0, 0, 0, 1, 0, 1, 0,          //
      0x40, 0x1F, 0, 0, 0x80, 0x3E, 0, 0, 2, 0, 16, 0,      // 8000 Hz
      'd', 'a', 't', 'a', 2, 0, 0, 0, 1, 0};
  io::write_file(dir.path() / "r.wav", bytes);
  try {
    read_wav(dir.path() / "r.wav");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("8000"), std::string::npos) << e.what();
  }
  bytes[20] = 3;  // float format
  bytes[24] = 0x80, bytes[25] = 0x3E;
  io::write_file(dir.path() / "f.wav", bytes);
  EXPECT_THROW(read_wav(dir.path() / "f.wav"), DataError);
}

TEST(Embedding, RoundTripAndBadFiles) {
  TempDir dir;
  const Tensor t = Tensor::from({2, 3}, {0.5, -1.25, 3, 0, 1e-3, 7});
  write_embedding(dir.path() / "e.emb", t);
  const Tensor r = read_embedding(dir.path() / "e.emb");
  EXPECT_EQ(r.shape(), t.shape());
  for (Index i = 0; i < 6; ++i) EXPECT_EQ(r.data()[i], static_cast<float>(t.data()[i]));

  auto bytes = io::read_file(dir.path() / "e.emb");
  ASSERT_EQ(bytes.size(), 8u + 4 + 4 + 8 + 24);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  io::write_file(dir.path() / "t.emb", truncated);
  EXPECT_THROW(read_embedding(dir.path() / "t.emb"), DataError);

  auto mismatch = bytes;
  mismatch[20] = 4;  // dims declare 2 x 4 but only 6 values follow
  io::write_file(dir.path() / "m.emb", mismatch);
  try {
    read_embedding(dir.path() / "m.emb");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("8 values"), std::string::npos) << e.what();
  }
  auto magic = bytes;
  magic[0] = 'X';
  io::write_file(dir.path() / "x.emb", magic);
  EXPECT_THROW(read_embedding(dir.path() / "x.emb"), DataError);
}

TEST(Dataset, WriteLoadRoundTrip) {
  TempDir dir;
  DatasetSpec spec;
  spec.train = 3;
  spec.validation = 2;
  spec.test = 2;
  spec.synth.seconds = 0.25;
  write_dataset(spec, dir.path());
  const auto test = load_split(dir.path(), Split::kTest);
  const auto gen = generate_split(spec, Split::kTest, 2);
  ASSERT_EQ(test.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(test[i].id, gen[i].id);
    ASSERT_EQ(test[i].mixture.size(), gen[i].mixture.size());
    for (size_t k = 0; k < gen[i].mixture.size(); ++k)
      ASSERT_NEAR(test[i].mixture[k], gen[i].mixture[k], 1.0 / 32768.0);
  }
  const Batch b = make_batch(test, {1, 0}, 0, 2);
  EXPECT_EQ(b.mixture.shape(), (Shape{2, 2, 4000}));
  EXPECT_EQ(b.voiceprint.shape(), (Shape{2, 512}));
  EXPECT_EQ(b.visual.shape(), (Shape{2, 256, 6}));
  EXPECT_EQ(b.target.data()[0], test[1].target[0]);
  EXPECT_THROW(load_split(dir.path() / "missing", Split::kTrain), DataError);
}

}  // namespace
}  // namespace limuse::data
