#include "recolor/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace recolor {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error("wav: " + path.string() + ": " + why);
}

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44) fail(path, "file too small for a WAVE header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(path, "not a RIFF/WAVE file");

  uint16_t format = 0, num_channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const uint8_t* data_ptr = nullptr;
  size_t data_len = 0;
  bool have_fmt = false;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* hdr = bytes.data() + pos;
    uint32_t chunk_len = read_u32(hdr + 4);
    size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) chunk_len = static_cast<uint32_t>(bytes.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) fail(path, "fmt chunk too small");
      const uint8_t* f = bytes.data() + body;
      format = read_u16(f);
      num_channels = read_u16(f + 2);
      sample_rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == 0xFFFE && chunk_len >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: real format is the first two bytes of the GUID.
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) fail(path, "missing fmt chunk");
  if (!data_ptr) fail(path, "missing data chunk");
  if (num_channels == 0) fail(path, "zero channels");
  if (sample_rate == 0) fail(path, "zero sample rate");

  size_t bytes_per_sample;
  if (format == 1 && (bits == 16 || bits == 24 || bits == 32)) {
    bytes_per_sample = bits / 8;
  } else if (format == 3 && bits == 32) {
    bytes_per_sample = 4;
  } else {
    fail(path, "unsupported format (code " + std::to_string(format) + ", " +
                   std::to_string(bits) + " bits)");
  }

  size_t frame_size = bytes_per_sample * num_channels;
  size_t num_frames = data_len / frame_size;

  WavData out;
  out.sample_rate = static_cast<int>(sample_rate);
  out.channels.assign(num_channels, std::vector<double>(num_frames));
  for (size_t i = 0; i < num_frames; ++i) {
    const uint8_t* frame = data_ptr + i * frame_size;
    for (int c = 0; c < num_channels; ++c) {
      const uint8_t* s = frame + static_cast<size_t>(c) * bytes_per_sample;
      double v;
      if (format == 3) {
        float f;
        std::memcpy(&f, s, 4);
        v = f;
      } else if (bits == 16) {
        int16_t x = static_cast<int16_t>(s[0] | (s[1] << 8));
        v = x / 32768.0;
      } else if (bits == 24) {
        int32_t x = s[0] | (s[1] << 8) | (s[2] << 16);
        if (x & 0x800000) x |= ~0xFFFFFF;
        v = x / 8388608.0;
      } else {
        int32_t x;
        std::memcpy(&x, s, 4);
        v = x / 2147483648.0;
      }
      out.channels[c][i] = v;
    }
  }
  return out;
}

void write_wav_mono16(const std::filesystem::path& path,
                      const std::vector<double>& samples, int sample_rate) {
  std::vector<uint8_t> out;
  out.reserve(44 + samples.size() * 2);
  uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(sample_rate));
  put_u32(out, static_cast<uint32_t>(sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (double v : samples) {
    double c = std::clamp(v, -1.0, 1.0);
    int x = static_cast<int>(std::lround(c * 32767.0));
    put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(x)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) fail(path, "write failed");
}

}  // namespace recolor
