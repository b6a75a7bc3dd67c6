// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "limuse/rng.hpp"

namespace limuse::data {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(energy(v));
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
}

std::vector<double> gaussian_vector(std::uint64_t seed, int dim) {
  Rng r(seed);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (double& x : v) x = r.normal();
  normalize(v);
  return v;
}

// Unit vector made of an id-specific random part and a part that varies
// smoothly with the speaker's pitch (Gaussian bumps over a fixed 12 Hz grid
// of random directions), so unseen speakers still map near seen ones of
// similar pitch.
std::vector<double> speaker_vector(const SpeakerProfile& spk, int dim,
                                   std::string_view tag) {
  const std::uint64_t base = Rng::hash(tag);
  std::vector<double> rnd = gaussian_vector(
      Rng::derive(base, static_cast<std::uint64_t>(spk.id)), dim);
  const double center = 0.5 * (spk.f0_lo + spk.f0_hi);
  constexpr double kGrid = 12.0, kSigma = 24.0;
  std::vector<double> trait(static_cast<std::size_t>(dim), 0.0);
  const long lo = std::lround(std::floor((center - 4 * kSigma) / kGrid));
  const long hi = std::lround(std::ceil((center + 4 * kSigma) / kGrid));
  for (long j = lo; j <= hi; ++j) {
    const double d = center - kGrid * static_cast<double>(j);
    const double w = std::exp(-d * d / (2 * kSigma * kSigma));
    const std::vector<double> dir = gaussian_vector(
        Rng::derive(base ^ 0x7A11ull, static_cast<std::uint64_t>(j)), dim);
    for (int i = 0; i < dim; ++i) trait[i] += w * dir[i];
  }
  normalize(trait);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) v[i] = std::sqrt(0.5) * (rnd[i] + trait[i]);
  normalize(v);
  return v;
}

std::vector<double> delayed(const std::vector<double>& x, int d) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t i = static_cast<std::size_t>(d); i < x.size(); ++i) y[i] = x[i - d];
  return y;
}

int split_index(Split s) { return static_cast<int>(s); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Tensor vec_tensor(const Shape& shape, const std::vector<double>& v) {
  Array a(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) a[static_cast<Index>(i)] = v[i];
  return Tensor::from(shape, std::move(a));
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split speaker_split(int speaker_id) {
  switch (speaker_id % 5) {
    case 1: return Split::kValidation;
    case 3: return Split::kTest;
    default: return Split::kTrain;
  }
}

std::vector<int> speakers_in(Split s, int total_speakers) {
  std::vector<int> out;
  for (int i = 0; i < total_speakers; ++i) {
    if (speaker_split(i) == s) out.push_back(i);
  }
  return out;
}

SpeakerProfile make_speaker(int id, std::uint64_t master_seed) {
  if (id < 0) throw DataError("speaker ids are non-negative");
  SpeakerProfile p;
  p.id = id;
  p.seed = Rng::derive(master_seed, 0x5EA4E200ull + static_cast<std::uint64_t>(id));
  p.f0_lo = kF0Base + kF0Spacing * id;
  p.f0_hi = p.f0_lo + kF0Width;
  Rng r(p.seed);
  p.harmonics.push_back(1.0);
  for (int h = 2; h <= 16; ++h) {
    p.harmonics.push_back(r.uniform(0.15, 0.8) / std::sqrt(static_cast<double>(h)));
  }
  p.vibrato_hz = r.uniform(3.0, 6.0);
  return p;
}

std::vector<double> synth_utterance(const SpeakerProfile& spk, double seconds,
                                    std::uint64_t seed, int sample_rate) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::vector<double> y(n, 0.0);
  if (n == 0) return y;
  Rng r(Rng::derive(spk.seed, seed));
  const double sr = sample_rate;

  // Syllable envelope: short lead-in, then alternating voiced / pause runs
  // with 10 ms raised-cosine ramps.
  std::vector<double> env(n, 0.0);
  std::size_t pos = static_cast<std::size_t>(r.uniform(0.0, 0.05) * sr);
  const std::size_t ramp = static_cast<std::size_t>(0.01 * sr);
  while (pos < n) {
    const std::size_t on = static_cast<std::size_t>(r.uniform(0.08, 0.25) * sr);
    const double amp = r.uniform(0.6, 1.0);
    for (std::size_t i = 0; i < on && pos + i < n; ++i) {
      double g = 1.0;
      if (i < ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * i / ramp);
      if (on - i <= ramp) g = std::min(g, 0.5 - 0.5 * std::cos(std::numbers::pi * (on - i) / ramp));
      env[pos + i] = amp * g;
    }
    pos += on + static_cast<std::size_t>(r.uniform(0.03, 0.12) * sr);
  }

  const double center = 0.5 * (spk.f0_lo + spk.f0_hi);
  const double dev = 0.4 * (spk.f0_hi - spk.f0_lo);
  const double vib_phase = r.uniform(0.0, kTwoPi);
  std::vector<double> offsets(spk.harmonics.size());
  for (double& o : offsets) o = r.uniform(0.0, kTwoPi);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i / sr;
    const double f0 = center + dev * std::sin(kTwoPi * spk.vibrato_hz * t + vib_phase);
    phase += kTwoPi * f0 / sr;
    double s = 0.0;
    for (std::size_t h = 0; h < spk.harmonics.size(); ++h) {
      if ((h + 1) * (center + dev) >= 0.45 * sr) break;
      s += spk.harmonics[h] * std::sin((h + 1) * phase + offsets[h]);
    }
    y[i] = env[i] * s + 0.005 * r.normal();
  }
  const double target_rms = r.uniform(0.08, 0.3);
  const double rms = std::sqrt(energy(y) / static_cast<double>(n));
  for (double& v : y) v *= target_rms / rms;
  return y;
}

std::vector<double> stub_voiceprint(const SpeakerProfile& spk, int dim) {
  return speaker_vector(spk, dim, "voiceprint");
}

std::vector<double> stub_visual(const SpeakerProfile& spk,
                                const std::vector<double>& target, int dim,
                                std::int64_t frames) {
  if (frames < 1) throw DataError("visual stream needs at least one frame");
  const std::vector<double> v = speaker_vector(spk, dim, "face");
  const auto n = static_cast<std::int64_t>(target.size());
  std::vector<double> out(static_cast<std::size_t>(dim * frames));
  for (std::int64_t t = 0; t < frames; ++t) {
    const std::int64_t a = t * n / frames, b = std::max(a + 1, (t + 1) * n / frames);
    double e = 0.0;
    for (std::int64_t i = a; i < std::min(b, n); ++i) e += target[i] * target[i];
    const double rms = b > a && n > 0 ? std::sqrt(e / static_cast<double>(b - a)) : 0.0;
    const double g = 0.1 + 5.0 * rms;
    for (int d = 0; d < dim; ++d) out[d * frames + t] = g * v[d];
  }
  return out;
}

MixtureSample make_mixture(const SpeakerProfile& a, const SpeakerProfile& b,
                           double snr_db, std::uint64_t seed,
                           const SynthOptions& opt) {
  if (a.id == b.id) {
    throw DataError("mixture needs two distinct speakers, got " + std::to_string(a.id) +
                    " twice");
  }
  if (opt.mics < 1 || opt.mics > 2) throw DataError("mixtures have 1 or 2 channels");
  Rng r(seed);
  MixtureSample m;
  m.target = synth_utterance(a, opt.seconds, Rng::derive(seed, 1), opt.sample_rate);
  std::vector<double> itf = synth_utterance(b, opt.seconds, Rng::derive(seed, 2), opt.sample_rate);
  const double gain =
      std::sqrt(energy(m.target) / (energy(itf) * std::pow(10.0, snr_db / 10.0)));
  for (double& v : itf) v *= gain;
  m.interferer = std::move(itf);
  m.samples = static_cast<std::int64_t>(m.target.size());
  m.mics = opt.mics;
  m.snr_db = snr_db;
  m.target_speaker = a.id;
  m.interferer_speaker = b.id;
  m.delays = {static_cast<int>(r.below(opt.max_delay + 1)),
              static_cast<int>(r.below(opt.max_delay + 1))};

  const std::size_t n = m.target.size();
  m.mixture.assign(n * opt.mics, 0.0);
  for (std::size_t i = 0; i < n; ++i) m.mixture[i] = m.target[i] + m.interferer[i];
  if (opt.mics == 2) {
    const std::vector<double> t1 = delayed(m.target, m.delays[0]);
    const std::vector<double> i1 = delayed(m.interferer, m.delays[1]);
    for (std::size_t i = 0; i < n; ++i) m.mixture[n + i] = t1[i] + i1[i];
  }
  double peak = 0.0;
  for (double v : m.mixture) peak = std::max(peak, std::abs(v));
  if (peak > 0.9) {
    const double s = 0.9 / peak;
    for (double& v : m.mixture) v *= s;
    for (double& v : m.target) v *= s;
    for (double& v : m.interferer) v *= s;
  }
  m.voiceprint = stub_voiceprint(a, opt.voiceprint_dim);
  m.face_frames = std::max<std::int64_t>(1, std::llround(opt.fps * opt.seconds));
  m.visual = stub_visual(a, m.target, opt.face_dim, m.face_frames);
  return m;
}

std::vector<MixtureSample> generate_split(const DatasetSpec& spec, Split split,
                                          int count) {
  const std::vector<int> ids = speakers_in(split, spec.speakers);
  if (ids.size() < 2) {
    throw DataError(std::string(split_name(split)) + " split has " +
                    std::to_string(ids.size()) + " speakers; need at least 2 (use >= 10 speakers)");
  }
  std::vector<SpeakerProfile> profiles;
  for (int id : ids) profiles.push_back(make_speaker(id, spec.seed));
  std::vector<MixtureSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = Rng::derive(
        spec.seed, (static_cast<std::uint64_t>(split_index(split)) << 32) | static_cast<std::uint64_t>(i));
    Rng r(s);
    const std::size_t ia = r.below(ids.size());
    std::size_t ib = r.below(ids.size() - 1);
    if (ib >= ia) ++ib;
    const double snr = r.uniform(-5.0, 5.0);
    MixtureSample m = make_mixture(profiles[ia], profiles[ib], snr, Rng::derive(s, 7), spec.synth);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", split_name(split), i);
    m.id = buf;
    out.push_back(std::move(m));
  }
  return out;
}

void write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.csv").string());
  manifest << "sample_id,split,mixture,target,interferer,voiceprint,visual,snr_db,"
              "target_speaker,interferer_speaker\n";
  const std::pair<Split, int> splits[] = {{Split::kTrain, spec.train},
                                          {Split::kValidation, spec.validation},
                                          {Split::kTest, spec.test}};
  for (const auto& [split, count] : splits) {
    const std::string sub = split_name(split);
    fs::create_directories(dir / sub);
    for (const MixtureSample& m : generate_split(spec, split, count)) {
      const std::string base = sub + "/" + m.id;
      Wav mix{spec.synth.sample_rate, m.mics, m.samples, m.mixture};
      write_wav(dir / (base + "_mix.wav"), mix);
      write_wav(dir / (base + "_target.wav"), Wav{spec.synth.sample_rate, 1, m.samples, m.target});
      write_wav(dir / (base + "_interferer.wav"),
                Wav{spec.synth.sample_rate, 1, m.samples, m.interferer});
      write_embedding(dir / (base + "_voiceprint.emb"),
                      vec_tensor({static_cast<Index>(m.voiceprint.size())}, m.voiceprint));
      write_embedding(dir / (base + "_visual.emb"),
                      vec_tensor({static_cast<Index>(spec.synth.face_dim), m.face_frames}, m.visual));
      char snr[32];
      std::snprintf(snr, sizeof(snr), "%.6f", m.snr_db);
      manifest << m.id << ',' << sub << ',' << base << "_mix.wav," << base
               << "_target.wav," << base << "_interferer.wav," << base
               << "_voiceprint.emb," << base << "_visual.emb," << snr << ','
               << m.target_speaker << ',' << m.interferer_speaker << '\n';
    }
  }
}

std::vector<MixtureSample> load_split(const std::filesystem::path& dir, Split split) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  std::ifstream in(dir / "manifest.csv");
  if (!in) throw DataError("missing " + (dir / "manifest.csv").string());
  std::string line;
  std::getline(in, line);
  std::vector<MixtureSample> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 10) {
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 10 fields, got " +
                      std::to_string(cells.size()));
    }
    if (cells[1] != split_name(split)) continue;
    MixtureSample m;
    m.id = cells[0];
    try {
      const Wav mix = read_wav(dir / cells[2]);
      const Wav tgt = read_wav(dir / cells[3]);
      const Wav itf = read_wav(dir / cells[4]);
      if (tgt.frames != mix.frames || itf.frames != mix.frames || tgt.channels != 1) {
        throw DataError("sample " + m.id + ": inconsistent wav lengths");
      }
      m.mics = mix.channels;
      m.samples = mix.frames;
      m.mixture = mix.data;
      m.target = tgt.data;
      m.interferer = itf.data;
      const Tensor vp = read_embedding(dir / cells[5]);
      const Tensor vis = read_embedding(dir / cells[6]);
      if (vp.ndim() != 1 || vis.ndim() != 2) {
        throw DataError("sample " + m.id + ": voiceprint must be 1-D and visual 2-D");
      }
      m.voiceprint.assign(vp.data().begin(), vp.data().end());
      m.visual.assign(vis.data().begin(), vis.data().end());
      m.face_frames = vis.dim(1);
      m.snr_db = std::stod(cells[7]);
      m.target_speaker = std::stoi(cells[8]);
      m.interferer_speaker = std::stoi(cells[9]);
    } catch (const std::invalid_argument&) {
      throw DataError("manifest line " + std::to_string(lineno) + ": bad number");
    }
    out.push_back(std::move(m));
  }
  if (out.empty()) {
    throw DataError("no " + std::string(split_name(split)) + " samples in " +
                    (dir / "manifest.csv").string());
  }
  return out;
}

Batch make_batch(const std::vector<MixtureSample>& samples,
                 const std::vector<std::size_t>& order, std::size_t first,
                 std::size_t count) {
  if (count == 0 || first + count > order.size()) throw DataError("batch out of range");
  const MixtureSample& s0 = samples[order[first]];
  const Index b = static_cast<Index>(count), mics = s0.mics, n = s0.samples;
  const Index u = static_cast<Index>(s0.voiceprint.size()), e = s0.face_frames;
  const Index d = static_cast<Index>(s0.visual.size()) / std::max<Index>(e, 1);
  Array mix(b * mics * n), vp(b * u), vis(b * d * e), tgt(b * n);
  for (Index i = 0; i < b; ++i) {
    const MixtureSample& s = samples[order[first + i]];
    if (s.mics != mics || s.samples != n || static_cast<Index>(s.voiceprint.size()) != u ||
        s.face_frames != e || static_cast<Index>(s.visual.size()) != d * e) {
      throw DataError("sample " + s.id + " does not match the batch shape of " + s0.id);
    }
    std::copy(s.mixture.begin(), s.mixture.end(), mix.data() + i * mics * n);
    std::copy(s.voiceprint.begin(), s.voiceprint.end(), vp.data() + i * u);
    std::copy(s.visual.begin(), s.visual.end(), vis.data() + i * d * e);
    std::copy(s.target.begin(), s.target.end(), tgt.data() + i * n);
  }
  Batch out;
  out.mixture = Tensor::from({b, mics, n}, std::move(mix));
  out.voiceprint = Tensor::from({b, u}, std::move(vp));
  out.visual = Tensor::from({b, d, e}, std::move(vis));
  out.target = Tensor::from({b, n}, std::move(tgt));
  return out;
}

}  // namespace limuse::data
