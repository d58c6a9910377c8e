#include "squeal/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "squeal/io.hpp"

namespace squeal {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV codec assumes little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) throw Error("wav: truncated file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::string& out, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.append(bytes, sizeof(T));
}

}  // namespace

AudioRecording read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("wav: cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error("wav: not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto len = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible && len >= 26) format = read_le<std::uint16_t>(buf, body + 24);
    } else if (id == "data") {
      data_pos = body;
      data_len = std::min<std::size_t>(len, buf.size() - body);
    }
    pos = body + len + (len & 1u);
  }
  if (data_pos == 0) throw Error("wav: missing data chunk");
  if (channels != 1) throw Error("wav: only mono files are supported");

  AudioRecording rec;
  rec.fs = static_cast<double>(rate);
  if (format == kFormatPcm && bits == 16) {
    rec.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < rec.samples.size(); ++i)
      rec.samples[i] = read_le<std::int16_t>(buf, data_pos + 2 * i) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    rec.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < rec.samples.size(); ++i)
      rec.samples[i] = read_le<float>(buf, data_pos + 4 * i);
  } else {
    throw Error("wav: unsupported sample format (need PCM16 or float32)");
  }
  rec.validate();
  return rec;
}

void write_wav(const std::filesystem::path& path, const AudioRecording& rec, WavFormat format) {
  rec.validate();
  const bool pcm = format == WavFormat::Pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t bytes_per_sample = bits / 8;
  const auto data_len = static_cast<std::uint32_t>(rec.samples.size() * bytes_per_sample);
  const auto rate = static_cast<std::uint32_t>(std::lround(rec.fs));

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_le<std::uint32_t>(out, 36 + data_len);
  out += "WAVEfmt ";
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, rate);
  put_le<std::uint32_t>(out, rate * bytes_per_sample);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(bytes_per_sample));
  put_le<std::uint16_t>(out, bits);
  out += "data";
  put_le<std::uint32_t>(out, data_len);
  for (double s : rec.samples) {
    if (pcm) {
      const double clipped = std::clamp(s, -1.0, 1.0);
      put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(std::min(clipped * 32768.0, 32767.0))));
    } else {
      put_le<float>(out, static_cast<float>(s));
    }
  }
  write_file_atomic(path, out);
}

}  // namespace squeal
