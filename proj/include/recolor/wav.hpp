#ifndef RECOLOR_WAV_HPP
#define RECOLOR_WAV_HPP

#include <filesystem>
#include <string>
#include <vector>

namespace recolor {

struct WavData {
  std::vector<std::vector<double>> channels;  // per channel, samples in [-1, 1]
  int sample_rate = 0;
};

// Reads a RIFF/WAVE file. Supports PCM 16/24/32-bit and IEEE float32,
// any channel count. Throws std::runtime_error carrying the path.
WavData read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM. Samples are clamped to [-1, 1] before scaling.
void write_wav_mono16(const std::filesystem::path& path,
                      const std::vector<double>& samples, int sample_rate);

}  // namespace recolor

#endif  // RECOLOR_WAV_HPP
