#ifndef RECOLOR_SPECTRAL_HPP
#define RECOLOR_SPECTRAL_HPP

#include <array>
#include <vector>

#include "recolor/audio.hpp"
#include "recolor/tensor.hpp"

namespace recolor {

constexpr int kImageSize = 256;
constexpr int kStftWindow = 512;
constexpr int kStftHop = 256;
constexpr int kSpectroBins = kStftWindow / 2 + 1;            // 257
constexpr int kSpectroFrames = 1 + kFixedNumSamples / kStftHop;  // 257

// Magnitude grid, row-major [rows x cols] = [freq_bins x frames], doubles.
struct Spectrogram {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

// 3 x 256 x 256 image, entries in [0, 1]. Channel order R, G, B.
using SpectroImage = Tensor;

// Hann-windowed magnitude STFT, centered frames (zero padding at the edges).
// Input must be exactly 65,600 samples; output is 257 bins x 257 frames.
Spectrogram stft_magnitude(const Waveform& w, int window_size = kStftWindow,
                           int hop = kStftHop);

// 257x257 -> 256x256 (drops the last frequency row and last time column),
// log(1+v) compression, then per-utterance min-max to [0, 1]; a constant
// grid maps to all zeros.
Spectrogram trim_and_normalize(const Spectrogram& s);

// Piecewise-linear jet-like colormap, exact in IEEE double arithmetic:
//   r(v) = clamp(1.5 - |4v-3|, 0, 1)
//   g(v) = clamp(1.5 - |4v-2|, 0, 1)
//   b(v) = clamp(1.5 - |4v-1|, 0, 1)
std::array<double, 3> heatmap_rgb(double v);

SpectroImage to_heatmap(const Spectrogram& g);

// stft_magnitude -> trim_and_normalize -> to_heatmap. Deterministic.
SpectroImage featurize(const Waveform& w);

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_complex(std::vector<double>& re, std::vector<double>& im);

}  // namespace recolor

#endif  // RECOLOR_SPECTRAL_HPP
