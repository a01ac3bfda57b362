#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "adscreen/audio.hpp"
#include "adscreen/error.hpp"

namespace adscreen {
namespace {

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void write_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ofstream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("wav: cannot open '" + path + "'");
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 || std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw Error("wav: '" + path + "' is not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const uint32_t chunk_len = read_u32(raw.data() + pos + 4);
    const unsigned char* body = raw.data() + pos + 8;
    if (pos + 8 + chunk_len > raw.size())
      throw Error("wav: '" + path + "' truncated inside chunk");
    if (std::memcmp(raw.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw Error("wav: fmt chunk too short in '" + path + "'");
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(raw.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw Error("wav: '" + path + "' has no fmt chunk");
  if (data_off == 0) throw Error("wav: '" + path + "' has no data chunk");
  if (channels == 0 || rate == 0) throw Error("wav: '" + path + "' has zero channels or rate");
  const bool pcm = format == 1, ieee = format == 3;
  if (!pcm && !ieee)
    throw Error("wav: '" + path + "' uses unsupported codec " + std::to_string(format));
  if (pcm && bits != 8 && bits != 16 && bits != 24)
    throw Error("wav: '" + path + "' unsupported PCM depth " + std::to_string(bits));
  if (ieee && bits != 32)
    throw Error("wav: '" + path + "' unsupported float depth " + std::to_string(bits));

  const size_t bytes_per = bits / 8u;
  const size_t frame_bytes = bytes_per * channels;
  const size_t frames = data_len / frame_bytes;
  if (frames == 0) throw Error("wav: '" + path + "' contains no samples");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  const unsigned char* d = raw.data() + data_off;
  for (size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      const unsigned char* s = d + f * frame_bytes + c * bytes_per;
      double v = 0.0;
      if (ieee) {
        float fv;
        std::memcpy(&fv, s, 4);
        v = fv;
      } else if (bits == 8) {
        v = (static_cast<int>(s[0]) - 128) / 128.0;
      } else if (bits == 16) {
        const int16_t iv = static_cast<int16_t>(s[0] | (s[1] << 8));
        v = iv / 32768.0;
      } else {  // 24-bit
        int32_t iv = s[0] | (s[1] << 8) | (s[2] << 16);
        if (iv & 0x800000) iv |= ~0xffffff;  // sign-extend
        v = iv / 8388608.0;
      }
      acc += v;
    }
    clip.samples[f] = static_cast<float>(acc / channels);
  }
  return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
  if (clip.sample_rate <= 0 || clip.samples.empty())
    throw Error("wav: refusing to write empty clip to '" + path + "'");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("wav: cannot open '" + path + "' for writing");
  const uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(clip.sample_rate));
  write_u32(out, static_cast<uint32_t>(clip.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_len);
  for (float s : clip.samples) {
    const float clamped = s < -1.0f ? -1.0f : (s > 1.0f ? 1.0f : s);
    const int16_t v = static_cast<int16_t>(std::lrintf(clamped * 32767.0f));
    write_u16(out, static_cast<uint16_t>(v));
  }
  if (!out) throw Error("wav: write failed for '" + path + "'");
}

}  // namespace adscreen
