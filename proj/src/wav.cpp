// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// WAV and LMSE-EMB files.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "limuse/data.hpp"
#include "limuse/io.hpp"

namespace limuse {

namespace io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace io

namespace data {

namespace {
constexpr char kEmbMagic[] = "LMSE-EMB";
constexpr std::uint32_t kEmbVersion = 1;
}  // namespace

void write_wav(const std::filesystem::path& path, const Wav& wav) {
  if (wav.channels < 1 || wav.channels > 2) throw DataError("wav: 1 or 2 channels only");
  if (static_cast<std::int64_t>(wav.data.size()) != wav.channels * wav.frames) {
    throw DataError("wav: data size does not match channels x frames");
  }
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wav.frames * wav.channels * 2);
  io::ByteWriter w;
  w.raw("RIFF");
  w.u32(36 + data_bytes);
  w.raw("WAVE");
  w.raw("fmt ");
  w.u32(16);
  w.u16(1);  // PCM
  w.u16(static_cast<std::uint16_t>(wav.channels));
  w.u32(static_cast<std::uint32_t>(wav.sample_rate));
  w.u32(static_cast<std::uint32_t>(wav.sample_rate * wav.channels * 2));
  w.u16(static_cast<std::uint16_t>(wav.channels * 2));
  w.u16(16);
  w.raw("data");
  w.u32(data_bytes);
  for (std::int64_t t = 0; t < wav.frames; ++t) {
    for (int c = 0; c < wav.channels; ++c) {
      const double v = std::nearbyint(wav.data[c * wav.frames + t] * 32768.0);
      w.i16(static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0)));
    }
  }
  io::write_file(path, w.buffer());
}

Wav read_wav(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> buf = io::read_file(path);
  io::ByteReader r(buf, "wav file " + path.string());
  if (r.raw(4, "RIFF tag") != "RIFF") throw DataError(path.string() + ": not a RIFF file");
  r.u32("RIFF size");
  if (r.raw(4, "WAVE tag") != "WAVE") throw DataError(path.string() + ": not a WAVE file");
  Wav wav;
  bool have_fmt = false;
  while (!r.done()) {
    const std::string id = r.raw(4, "chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw DataError(path.string() + ": short fmt chunk");
      const std::uint16_t format = r.u16("format");
      wav.channels = r.u16("channels");
      wav.sample_rate = static_cast<int>(r.u32("sample rate"));
      r.u32("byte rate");
      r.u16("block align");
      const std::uint16_t bits = r.u16("bits per sample");
      r.skip(size - 16, "fmt extension");
      if (format != 1 || bits != 16) {
        throw DataError(path.string() + ": only 16-bit PCM is supported (format " +
                        std::to_string(format) + ", " + std::to_string(bits) + " bits)");
      }
      if (wav.sample_rate != 16000) {
        throw DataError(path.string() + ": sample rate " +
                        std::to_string(wav.sample_rate) + " Hz, expected 16000 Hz");
      }
      if (wav.channels < 1 || wav.channels > 2) {
        throw DataError(path.string() + ": " + std::to_string(wav.channels) +
                        " channels, expected 1 or 2");
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError(path.string() + ": data chunk before fmt chunk");
      r.need(size, "sample data");
      wav.frames = size / (2 * wav.channels);
      wav.data.assign(static_cast<std::size_t>(wav.frames * wav.channels), 0.0);
      for (std::int64_t t = 0; t < wav.frames; ++t) {
        for (int c = 0; c < wav.channels; ++c) {
          wav.data[c * wav.frames + t] = r.i16("sample") / 32768.0;
        }
      }
      r.skip(size - wav.frames * wav.channels * 2, "sample padding");
      return wav;
    } else {
      r.skip(size + (size & 1), "chunk");
    }
  }
  throw DataError(path.string() + ": no data chunk");
}

void write_embedding(const std::filesystem::path& path, const Tensor& t) {
  io::ByteWriter w;
  w.raw(std::string_view(kEmbMagic, 8));
  w.u32(kEmbVersion);
  w.u32(static_cast<std::uint32_t>(t.ndim()));
  for (Index d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (Index i = 0; i < t.numel(); ++i) w.f32(static_cast<float>(t.data()[i]));
  io::write_file(path, w.buffer());
}

Tensor read_embedding(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> buf = io::read_file(path);
  try {
    io::ByteReader r(buf, "embedding file " + path.string());
    if (r.raw(8, "magic") != std::string_view(kEmbMagic, 8)) {
      throw DataError(path.string() + ": bad magic, not an LMSE-EMB file");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kEmbVersion) {
      throw DataError(path.string() + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t nd = r.u32("ndim");
    if (nd < 1 || nd > 8) {
      throw DataError(path.string() + ": ndim " + std::to_string(nd) + " outside [1, 8]");
    }
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < nd; ++i) {
      const std::uint32_t d = r.u32("dims");
      if (d == 0) throw DataError(path.string() + ": zero extent in dims");
      shape.push_back(d);
      count *= d;
    }
    if (r.remaining() != count * 4) {
      throw DataError(path.string() + ": dims " + shape_str(shape) + " declare " +
                      std::to_string(count) + " values but the payload holds " +
                      std::to_string(r.remaining() / 4) + " (" +
                      std::to_string(r.remaining()) + " bytes)");
    }
    Array a(static_cast<Index>(count));
    for (Index i = 0; i < a.size(); ++i) a[i] = r.f32("payload");
    return Tensor::from(shape, std::move(a));
  } catch (const io::FormatError& e) {
    throw DataError(e.what());
  }
}

}  // namespace data
}  // namespace limuse
