#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvharm {

struct WavData {
  std::vector<double> samples; // first channel, normalized to [-1, 1]
  double fs = 0.0;
  int channels = 1;
  bool multichannel = false; // extra channels were dropped
};

namespace detail {

inline std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

[[noreturn]] inline void wav_fail(const std::string& what, size_t offset) {
  throw std::runtime_error("wav: " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace detail

/// Reads a PCM (16/24/32-bit) or 32-bit float RIFF/WAVE file. Multichannel
/// files contribute their first channel only.
inline WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  using detail::rd_u16;
  using detail::rd_u32;
  using detail::wav_fail;

  if (raw.size() < 12) wav_fail("file truncated before RIFF header", raw.size());
  if (std::memcmp(raw.data(), "RIFF", 4) != 0) wav_fail("missing RIFF tag", 0);
  if (std::memcmp(raw.data() + 8, "WAVE", 4) != 0) wav_fail("missing WAVE tag", 8);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const std::uint32_t chunk_len = rd_u32(raw.data() + pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(raw.data() + pos, "fmt ", 4) == 0) {
      if (body + 16 > raw.size()) wav_fail("fmt chunk truncated", raw.size());
      format = rd_u16(raw.data() + body);
      channels = rd_u16(raw.data() + body + 2);
      rate = rd_u32(raw.data() + body + 4);
      bits = rd_u16(raw.data() + body + 14);
      if (format == 0xFFFE) { // extensible: subformat GUID leads with the code
        if (body + 26 > raw.size()) wav_fail("extensible fmt chunk truncated", raw.size());
        format = rd_u16(raw.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(raw.data() + pos, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
      if (data_off + data_len > raw.size())
        wav_fail("data chunk extends past end of file", raw.size());
    }
    pos = body + chunk_len + (chunk_len & 1); // chunks are word aligned
  }
  if (!have_fmt) wav_fail("no fmt chunk", pos);
  if (data_off == 0) wav_fail("no data chunk", pos);
  if (channels < 1) wav_fail("zero channels", data_off);
  if (rate == 0) wav_fail("zero sample rate", data_off);

  const bool is_float = format == 3;
  if (format != 1 && !is_float) wav_fail("unsupported codec " + std::to_string(format), data_off);
  if (is_float && bits != 32) wav_fail("float data must be 32-bit", data_off);
  if (!is_float && bits != 16 && bits != 24 && bits != 32)
    wav_fail("unsupported PCM depth " + std::to_string(bits), data_off);

  const size_t bytes_per = bits / 8;
  const size_t frame_bytes = bytes_per * channels;
  if (data_len % frame_bytes != 0) wav_fail("data chunk not a whole frame count", data_off);
  const size_t frames = data_len / frame_bytes;
  if (frames == 0) wav_fail("zero-length audio", data_off);

  WavData out;
  out.fs = static_cast<double>(rate);
  out.channels = channels;
  out.multichannel = channels > 1;
  out.samples.resize(frames);
  const unsigned char* d = raw.data() + data_off;
  for (size_t i = 0; i < frames; ++i) {
    const unsigned char* s = d + i * frame_bytes; // first channel
    double v = 0.0;
    if (is_float) {
      float f;
      std::memcpy(&f, s, 4);
      v = f;
    } else if (bits == 16) {
      const std::int16_t q = static_cast<std::int16_t>(rd_u16(s));
      v = q / 32768.0;
    } else if (bits == 24) {
      std::int32_t q = s[0] | (s[1] << 8) | (s[2] << 16);
      if (q & 0x800000) q |= ~0xFFFFFF;
      v = q / 8388608.0;
    } else {
      const std::int32_t q = static_cast<std::int32_t>(rd_u32(s));
      v = q / 2147483648.0;
    }
    out.samples[i] = v;
  }
  return out;
}

/// Writes mono audio as 32-bit float (default) or 16-bit PCM.
inline void write_wav(const std::string& path, const std::vector<double>& samples, double fs,
                      bool as_float = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path);
  const std::uint16_t bits = as_float ? 32 : 16;
  const std::uint32_t rate = static_cast<std::uint32_t>(fs);
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * bits / 8);

  auto w16 = [&](std::uint16_t v) { out.put(v & 0xFF).put((v >> 8) & 0xFF); };
  auto w32 = [&](std::uint32_t v) {
    out.put(v & 0xFF).put((v >> 8) & 0xFF).put((v >> 16) & 0xFF).put((v >> 24) & 0xFF);
  };
  out.write("RIFF", 4);
  w32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  w32(16);
  w16(as_float ? 3 : 1);
  w16(1); // mono
  w32(rate);
  w32(rate * bits / 8);
  w16(bits / 8);
  w16(bits);
  out.write("data", 4);
  w32(data_len);
  for (double v : samples) {
    if (as_float) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      w32(u);
    } else {
      const double clamped = std::max(-1.0, std::min(1.0, v));
      const int q = static_cast<int>(std::lrint(clamped * 32767.0));
      w16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
  }
  if (!out) throw std::runtime_error("wav: write failed for " + path);
}

}  // namespace tvharm
