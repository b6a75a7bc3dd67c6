// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Synthetic two-speaker mixtures, stub embeddings and file I/O.
//
// Speakers are harmonic sources with disjoint f0 bands. Speaker ids are
// assigned to splits by id % 5 (1: validation, 3: test, otherwise train), so
// every split covers the whole pitch range and no speaker appears in two
// splits.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "limuse/tensor.hpp"

namespace limuse::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { kTrain, kValidation, kTest };
const char* split_name(Split s);
Split speaker_split(int speaker_id);
std::vector<int> speakers_in(Split s, int total_speakers);

struct SpeakerProfile {
  int id = 0;
  double f0_lo = 0.0, f0_hi = 0.0;   // Hz, disjoint across speakers
  std::vector<double> harmonics;     // amplitude of harmonic h+1
  double vibrato_hz = 0.0;
  std::uint64_t seed = 0;
};

// Band width and spacing of the f0 bands.
inline constexpr double kF0Base = 80.0;
inline constexpr double kF0Spacing = 24.0;
inline constexpr double kF0Width = 20.0;

SpeakerProfile make_speaker(int id, std::uint64_t master_seed);

// Harmonic stack with syllable-like on/off envelope and a small noise floor.
// RMS is normalised to a random value in [0.08, 0.3].
std::vector<double> synth_utterance(const SpeakerProfile& spk, double seconds,
                                    std::uint64_t seed, int sample_rate = 16000);

struct SynthOptions {
  double seconds = 1.0;
  int sample_rate = 16000;
  int mics = 2;
  int voiceprint_dim = 512;
  int face_dim = 256;
  int fps = 25;
  int max_delay = 3;  // channel-1 delay per source, samples
};

struct MixtureSample {
  std::string id;
  int mics = 0;
  std::int64_t samples = 0;
  std::vector<double> mixture;     // mics x samples, row-major
  std::vector<double> target;      // samples
  std::vector<double> interferer;  // samples, as mixed into channel 0
  double snr_db = 0.0;
  int target_speaker = 0, interferer_speaker = 0;
  std::vector<int> delays;         // channel-1 delay of target, interferer
  std::vector<double> voiceprint;  // U
  std::int64_t face_frames = 0;    // E
  std::vector<double> visual;      // D_face x E, row-major
};

// Channel 0 = target + g * interferer at exactly `snr_db`; channel 1 delays
// each source by an integer number of samples. Sources are scaled together
// so the mixture peak stays below 0.9.
MixtureSample make_mixture(const SpeakerProfile& a, const SpeakerProfile& b,
                           double snr_db, std::uint64_t seed,
                           const SynthOptions& opt = {});

// Unit-norm speaker vector: a per-id random part plus a part that varies
// smoothly with the speaker's pitch band.
std::vector<double> stub_voiceprint(const SpeakerProfile& spk, int dim);
// D x E frames: speaker vector scaled by (0.1 + 5 * frame RMS of target).
std::vector<double> stub_visual(const SpeakerProfile& spk,
                                const std::vector<double>& target, int dim,
                                std::int64_t frames);

struct DatasetSpec {
  int speakers = 10;
  int train = 200, validation = 20, test = 40;
  std::uint64_t seed = 1;
  SynthOptions synth;
};

std::vector<MixtureSample> generate_split(const DatasetSpec& spec, Split split,
                                          int count);

// On-disk dataset: manifest.csv plus WAV and LMSE-EMB files per sample.
void write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);
std::vector<MixtureSample> load_split(const std::filesystem::path& dir, Split split);

// Batched tensors for samples [first, first + count) of `order`.
struct Batch {
  Tensor mixture;     // B x mics x samples
  Tensor voiceprint;  // B x U
  Tensor visual;      // B x D x E
  Tensor target;      // B x samples
};
Batch make_batch(const std::vector<MixtureSample>& samples,
                 const std::vector<std::size_t>& order, std::size_t first,
                 std::size_t count);

// ---- files ------------------------------------------------------------------

struct Wav {
  int sample_rate = 16000;
  int channels = 1;
  std::int64_t frames = 0;
  std::vector<double> data;  // channels x frames, row-major, in [-1, 1)
};
// 16-bit PCM; values are scaled by 32768 and clipped.
void write_wav(const std::filesystem::path& path, const Wav& wav);
// Accepts 16-bit PCM, 16 kHz, 1-2 channels only.
Wav read_wav(const std::filesystem::path& path);

void write_embedding(const std::filesystem::path& path, const Tensor& t);
Tensor read_embedding(const std::filesystem::path& path);

}  // namespace limuse::data
