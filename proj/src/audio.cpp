#include "recolor/audio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "recolor/tensor.hpp"
#include "recolor/wav.hpp"

namespace recolor {

const char* label_name(Label l) { return l == Label::bonafide ? "bonafide" : "spoof"; }

Label label_from_string(const std::string& s) {
  if (s == "bonafide") return Label::bonafide;
  if (s == "spoof") return Label::spoof;
  throw std::runtime_error("unknown label key '" + s + "'");
}

const char* partition_name(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::dev: return "dev";
    case Partition::eval: return "eval";
    case Partition::pretrain: return "pretrain";
  }
  return "?";
}

int CorpusManifest::count(Label l) const {
  int n = 0;
  for (const auto& r : records)
    if (r.label == l) ++n;
  return n;
}

CorpusManifest parse_protocol(const std::filesystem::path& protocol_path,
                              Partition partition,
                              const std::filesystem::path& audio_dir,
                              bool check_paths) {
  std::ifstream in(protocol_path);
  if (!in) throw std::runtime_error("protocol: cannot open " + protocol_path.string());

  CorpusManifest m;
  m.partition = partition;
  std::string line;
  int line_no = 0;
  std::vector<std::string> missing;
  std::unordered_set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    UtteranceRecord r;
    std::string unused, key;
    if (!(ss >> r.speaker_id >> r.utt_id >> unused >> r.system_id >> key)) {
      throw std::runtime_error("protocol: " + protocol_path.string() + ":" +
                               std::to_string(line_no) + ": expected 5 fields, got '" + line + "'");
    }
    std::string extra;
    if (ss >> extra) {
      throw std::runtime_error("protocol: " + protocol_path.string() + ":" +
                               std::to_string(line_no) + ": trailing field '" + extra + "'");
    }
    try {
      r.label = label_from_string(key);
    } catch (const std::exception& e) {
      throw std::runtime_error("protocol: " + protocol_path.string() + ":" +
                               std::to_string(line_no) + ": " + e.what());
    }
    if ((r.system_id == "-") != (r.label == Label::bonafide)) {
      throw std::runtime_error("protocol: " + protocol_path.string() + ":" +
                               std::to_string(line_no) +
                               ": system id '" + r.system_id + "' inconsistent with key '" +
                               key + "'");
    }
    if (!seen_ids.insert(r.utt_id).second) {
      throw std::runtime_error("protocol: " + protocol_path.string() + ":" +
                               std::to_string(line_no) + ": duplicate utterance id '" +
                               r.utt_id + "'");
    }
    r.path = audio_dir / (r.utt_id + ".wav");
    if (check_paths && !std::filesystem::exists(r.path)) missing.push_back(r.path.string());
    m.records.push_back(std::move(r));
  }
  if (!missing.empty()) {
    std::string msg = "protocol: " + std::to_string(missing.size()) + " missing audio file(s):";
    for (const auto& p : missing) msg += "\n  " + p;
    throw std::runtime_error(msg);
  }
  return m;
}

void write_protocol(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("protocol: cannot write " + path.string());
  for (const auto& r : manifest.records) {
    out << r.speaker_id << " " << r.utt_id << " - " << r.system_id << " "
        << label_name(r.label) << "\n";
  }
}

Waveform load_waveform(const std::filesystem::path& path) {
  WavData wav = read_wav(path);
  size_t n = wav.channels.empty() ? 0 : wav.channels[0].size();
  Waveform w;
  w.sample_rate = wav.sample_rate;
  w.samples.assign(n, 0.0);
  for (const auto& ch : wav.channels) {
    for (size_t i = 0; i < n; ++i) w.samples[i] += ch[i];
  }
  double inv = 1.0 / static_cast<double>(wav.channels.size());
  for (auto& v : w.samples) v *= inv;
  if (w.sample_rate != kSampleRate) {
    w = resample_linear(w, kSampleRate);
  }
  return w;
}

void normalize_gain(Waveform& w) {
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::fabs(v));
  double inv = 1.0 / std::max(peak, 1e-9);
  for (auto& v : w.samples) v *= inv;
}

Waveform resample_linear(const Waveform& w, int target_rate) {
  if (w.sample_rate == target_rate || w.samples.empty()) {
    Waveform out = w;
    out.sample_rate = target_rate;
    return out;
  }
  double ratio = static_cast<double>(w.sample_rate) / target_rate;
  size_t out_n = static_cast<size_t>(std::floor((w.samples.size() - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_n);
  for (size_t i = 0; i < out_n; ++i) {
    double t = i * ratio;
    size_t i0 = static_cast<size_t>(t);
    size_t i1 = std::min(i0 + 1, w.samples.size() - 1);
    double frac = t - static_cast<double>(i0);
    out.samples[i] = w.samples[i0] * (1.0 - frac) + w.samples[i1] * frac;
  }
  return out;
}

Waveform fix_length(const Waveform& w, int target, LengthMode mode, uint64_t seed) {
  if (w.samples.empty()) throw std::runtime_error("fix_length: empty waveform");
  if (target <= 0) throw std::invalid_argument("fix_length: target must be positive");
  size_t n = w.samples.size();
  size_t t = static_cast<size_t>(target);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(t);
  if (n >= t && mode == LengthMode::crop_random) {
    Rng rng(seed);
    size_t offset = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n - t)));
    std::copy_n(w.samples.begin() + static_cast<ptrdiff_t>(offset), t, out.samples.begin());
  } else {
    // Repeat-tile covers both the short-input case and the long-input prefix.
    for (size_t i = 0; i < t; ++i) out.samples[i] = w.samples[i % n];
  }
  return out;
}

namespace {

// Harmonic tone stack with a slow amplitude envelope. The spoof variant
// notches out harmonics in [800, 1600] Hz and injects gated band-limited
// noise around 3-5 kHz: both artifacts are plainly visible in a spectrogram.
std::vector<double> synth_utterance(Rng& rng, Label label) {
  int n = static_cast<int>(rng.uniform_int(52000, 78000));
  double f0 = rng.uniform(110.0, 220.0);
  double env_freq = rng.uniform(0.3, 1.2);
  double env_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  int harmonics = static_cast<int>(rng.uniform_int(6, 10));

  std::vector<double> phases(static_cast<size_t>(harmonics));
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<double> x(static_cast<size_t>(n), 0.0);
  for (int h = 1; h <= harmonics; ++h) {
    double freq = f0 * h;
    if (freq > kSampleRate / 2.0) break;
    if (label == Label::spoof && freq >= 800.0 && freq <= 1600.0) continue;  // spectral notch
    double amp = 0.8 / h;
    double ph = phases[static_cast<size_t>(h - 1)];
    for (int i = 0; i < n; ++i) {
      x[static_cast<size_t>(i)] +=
          amp * std::sin(2.0 * std::numbers::pi * freq * i / kSampleRate + ph);
    }
  }
  for (int i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / kSampleRate;
    double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * env_freq * t + env_phase);
    x[static_cast<size_t>(i)] *= env;
  }

  if (label == Label::spoof) {
    // Band-limited noise bursts: 64 random-frequency partials in [3, 5] kHz,
    // gated on for 150 ms every 500 ms.
    int n_partials = 64;
    std::vector<double> freqs(n_partials), phs(n_partials);
    for (int k = 0; k < n_partials; ++k) {
      freqs[static_cast<size_t>(k)] = rng.uniform(3000.0, 5000.0);
      phs[static_cast<size_t>(k)] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    double gate_offset = rng.uniform(0.0, 0.5);
    for (int i = 0; i < n; ++i) {
      double t = static_cast<double>(i) / kSampleRate + gate_offset;
      if (std::fmod(t, 0.5) > 0.15) continue;
      double v = 0.0;
      for (int k = 0; k < n_partials; ++k) {
        v += std::sin(2.0 * std::numbers::pi * freqs[static_cast<size_t>(k)] * i / kSampleRate +
                      phs[static_cast<size_t>(k)]);
      }
      x[static_cast<size_t>(i)] += 0.12 * v / std::sqrt(static_cast<double>(n_partials)) * 4.0;
    }
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  double scale = 0.9 / std::max(peak, 1e-9);
  for (auto& v : x) v *= scale;
  return x;
}

}  // namespace

CorpusManifest synth_toy_corpus(int n_per_class, uint64_t seed,
                                const std::filesystem::path& out_dir, Partition partition) {
  if (n_per_class < 1) throw std::invalid_argument("synth_toy_corpus: n_per_class must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec || !std::filesystem::is_directory(out_dir / "wav")) {
    throw std::runtime_error("synth_toy_corpus: cannot create " + (out_dir / "wav").string());
  }

  Rng rng(seed);
  CorpusManifest m;
  m.partition = partition;
  const char* part = partition_name(partition);
  for (Label label : {Label::bonafide, Label::spoof}) {
    for (int i = 0; i < n_per_class; ++i) {
      Rng utt_rng = rng.fork(static_cast<uint64_t>((label == Label::spoof ? 100000 : 0) + i));
      UtteranceRecord r;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "T_%s_%s_%04d", part, label_name(label), i);
      r.utt_id = buf;
      std::snprintf(buf, sizeof(buf), "S%03d", i % 8);
      r.speaker_id = buf;
      r.system_id = label == Label::spoof ? "A01" : "-";
      r.label = label;
      r.path = out_dir / "wav" / (r.utt_id + ".wav");
      std::vector<double> x = synth_utterance(utt_rng, label);
      write_wav_mono16(r.path, x, kSampleRate);
      m.records.push_back(std::move(r));
    }
  }
  write_protocol(m, out_dir / "protocol.txt");
  return m;
}

}  // namespace recolor
