#include "recolor/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace recolor {

void fft_complex(std::vector<double>& re, std::vector<double>& im) {
  size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw std::invalid_argument("fft_complex: size must be a power of two");
  // bit reversal
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        size_t a = i + k, b = i + k + len / 2;
        double tr = re[b] * cr - im[b] * ci;
        double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

Spectrogram stft_magnitude(const Waveform& w, int window_size, int hop) {
  if (static_cast<int>(w.samples.size()) != kFixedNumSamples) {
    throw std::invalid_argument("stft_magnitude: expected " +
                                std::to_string(kFixedNumSamples) + " samples, got " +
                                std::to_string(w.samples.size()));
  }
  if (window_size <= 0 || hop <= 0 || (window_size & (window_size - 1)) != 0)
    throw std::invalid_argument("stft_magnitude: bad window/hop");

  int bins = window_size / 2 + 1;
  int frames = 1 + static_cast<int>(w.samples.size()) / hop;
  int half = window_size / 2;

  // periodic Hann
  std::vector<double> window(static_cast<size_t>(window_size));
  for (int i = 0; i < window_size; ++i)
    window[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / window_size);

  Spectrogram out;
  out.rows = bins;
  out.cols = frames;
  out.v.assign(static_cast<size_t>(bins) * frames, 0.0);

  std::vector<double> re(static_cast<size_t>(window_size)), im(static_cast<size_t>(window_size));
  int n = static_cast<int>(w.samples.size());
  for (int t = 0; t < frames; ++t) {
    int start = t * hop - half;  // centered framing, zeros outside the signal
    for (int i = 0; i < window_size; ++i) {
      int idx = start + i;
      double s = (idx >= 0 && idx < n) ? w.samples[static_cast<size_t>(idx)] : 0.0;
      re[static_cast<size_t>(i)] = s * window[static_cast<size_t>(i)];
      im[static_cast<size_t>(i)] = 0.0;
    }
    fft_complex(re, im);
    for (int k = 0; k < bins; ++k) {
      out.at(k, t) = std::hypot(re[static_cast<size_t>(k)], im[static_cast<size_t>(k)]);
    }
  }
  return out;
}

Spectrogram trim_and_normalize(const Spectrogram& s) {
  if (s.rows != kSpectroBins || s.cols != kSpectroFrames) {
    throw std::invalid_argument("trim_and_normalize: expected 257x257, got " +
                                std::to_string(s.rows) + "x" + std::to_string(s.cols));
  }
  Spectrogram out;
  out.rows = kImageSize;
  out.cols = kImageSize;
  out.v.resize(static_cast<size_t>(kImageSize) * kImageSize);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      double v = std::log1p(s.at(r, c));
      out.at(r, c) = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi > lo) {
    double range = hi - lo;
    for (auto& v : out.v) v = (v - lo) / range;
  } else {
    for (auto& v : out.v) v = 0.0;  // constant grid
  }
  return out;
}

std::array<double, 3> heatmap_rgb(double v) {
  auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };
  return {clamp01(1.5 - std::fabs(4.0 * v - 3.0)),
          clamp01(1.5 - std::fabs(4.0 * v - 2.0)),
          clamp01(1.5 - std::fabs(4.0 * v - 1.0))};
}

SpectroImage to_heatmap(const Spectrogram& g) {
  if (g.rows != kImageSize || g.cols != kImageSize)
    throw std::invalid_argument("to_heatmap: expected 256x256 grid");
  SpectroImage img({3, kImageSize, kImageSize});
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      double v = g.at(r, c);
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("to_heatmap: entry outside [0,1]");
      auto rgb = heatmap_rgb(v);
      img.at(0, r, c) = static_cast<float>(rgb[0]);
      img.at(1, r, c) = static_cast<float>(rgb[1]);
      img.at(2, r, c) = static_cast<float>(rgb[2]);
    }
  }
  return img;
}

SpectroImage featurize(const Waveform& w) {
  return to_heatmap(trim_and_normalize(stft_magnitude(w)));
}

}  // namespace recolor
