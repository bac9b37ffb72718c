#ifndef RECOLOR_AUDIO_HPP
#define RECOLOR_AUDIO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace recolor {

constexpr int kSampleRate = 16000;
constexpr int kFixedNumSamples = 65600;

enum class Label { bonafide, spoof };

const char* label_name(Label l);
Label label_from_string(const std::string& s);

enum class Partition { train, dev, eval, pretrain };

const char* partition_name(Partition p);

struct UtteranceRecord {
  std::string utt_id;
  std::string speaker_id;
  std::string system_id;  // attack tag, "-" for bonafide
  Label label = Label::bonafide;
  std::filesystem::path path;
};

struct CorpusManifest {
  Partition partition = Partition::train;
  std::vector<UtteranceRecord> records;

  int count(Label l) const;
};

struct Waveform {
  std::vector<double> samples;  // amplitude in [-1, 1]
  int sample_rate = kSampleRate;

  size_t size() const { return samples.size(); }
};

// One protocol line: "<speaker> <utt_id> <unused> <system_id> <bonafide|spoof>".
// Audio paths are resolved as <audio_dir>/<utt_id>.wav.
CorpusManifest parse_protocol(const std::filesystem::path& protocol_path,
                              Partition partition,
                              const std::filesystem::path& audio_dir,
                              bool check_paths = true);

void write_protocol(const CorpusManifest& manifest, const std::filesystem::path& path);

// Decodes to mono (channel average), resampling to 16 kHz if needed.
Waveform load_waveform(const std::filesystem::path& path);

// Per-utterance gain normalization: divide by max(|x|, 1e-9).
void normalize_gain(Waveform& w);

Waveform resample_linear(const Waveform& w, int target_rate);

enum class LengthMode { pad_repeat, crop_fixed, crop_random };

// Forces the waveform to `target` samples. Inputs shorter than the target are
// repeat-tiled then truncated in every mode; longer inputs take a prefix
// (pad_repeat, crop_fixed) or a seeded uniformly random window (crop_random).
Waveform fix_length(const Waveform& w, int target, LengthMode mode, uint64_t seed);

inline Waveform fix_length(const Waveform& w, LengthMode mode, uint64_t seed = 0) {
  return fix_length(w, kFixedNumSamples, mode, seed);
}

// Writes a synthetic two-class corpus under out_dir: wav/<utt>.wav plus
// protocol.txt. Bonafide files are harmonic tone stacks; spoof files add a
// band-limited noise burst and a notched harmonic series so the classes are
// separable from the spectrogram alone.
CorpusManifest synth_toy_corpus(int n_per_class, uint64_t seed,
                                const std::filesystem::path& out_dir,
                                Partition partition = Partition::train);

}  // namespace recolor

#endif  // RECOLOR_AUDIO_HPP
