#ifndef RECOLOR_TRAINING_HPP
#define RECOLOR_TRAINING_HPP

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "recolor/audio.hpp"
#include "recolor/checkpoint.hpp"
#include "recolor/classifiers.hpp"
#include "recolor/config.hpp"
#include "recolor/eer.hpp"
#include "recolor/losses.hpp"
#include "recolor/recolor_net.hpp"
#include "recolor/spectral.hpp"

namespace recolor {

// FAD-time feature: decode, gain-normalize, prefix-crop to 65,600 samples,
// spectral image. Deterministic per file.
SpectroImage features_for_record(const UtteranceRecord& r);

// Pretrain-time feature: seeded random crop instead of the fixed prefix.
SpectroImage features_random_crop(const Waveform& gain_normalized, uint64_t crop_seed);

struct PretrainConfig {
  RecolorConfig recolor;
  int steps = 200;
  int batch_size = 2;
  float lr = 1e-3f;
  uint64_t seed = 1;
  int grid_every = 0;  // reconstruction-grid PNG cadence; 0 disables
  std::filesystem::path out_dir;  // empty: no files written
};

struct PretrainResult {
  std::unique_ptr<RecolorNet> net;
  std::vector<double> loss_curve;  // one entry per step, pre-update forward loss
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::filesystem::path checkpoint_path;
};

PretrainResult pretrain(const CorpusManifest& manifest, const PretrainConfig& cfg);

struct FadTrainConfig {
  RecolorConfig recolor;
  std::string classifier = "lcnn";
  int classifier_width = 0;  // 0 = per-classifier default
  FusionMode fusion = FusionMode::sub;
  LossConfig loss;
  std::string init_checkpoint;  // empty = train from scratch
  bool freeze_recolor = false;
  // When set, the classification loss does not flow into the recolor
  // network; only the gated reconstruction loss trains it.
  bool detach_recolor_from_cls = false;
  float lr = 1e-4f;
  int batch_size = 16;
  int epochs = 20;
  int patience = 10;
  uint64_t seed = 1;
  std::filesystem::path out_dir;  // empty: no files written
};

struct EpochStats {
  int64_t step = 0;
  double loss_cls = 0.0;
  double loss_rec = 0.0;
  double dev_eer = 1.0;
};

struct TrainState {
  int64_t step = 0;
  std::unique_ptr<RecolorNet> recolor;
  std::unique_ptr<Classifier> classifier;
  nn::Adam optimizer;
  uint64_t seed = 0;
  KvMap config_snapshot;

  double best_dev_eer = 2.0;  // above any attainable EER, first epoch always wins
  int64_t best_step = 0;
  std::vector<EpochStats> history;
  std::filesystem::path best_checkpoint_path;
};

TrainState fad_train(const CorpusManifest& train, const CorpusManifest& dev,
                     const FadTrainConfig& cfg);

// Scores every record with the recolor test path feeding the classifier
// (both in eval mode). score = logit(bonafide) - logit(spoof).
ScoreSet score_manifest(RecolorNet& net, Classifier& clf, FusionMode fusion,
                        const CorpusManifest& manifest);

// Same, over precomputed features (training-loop dev evaluation).
ScoreSet score_features(RecolorNet& net, Classifier& clf, FusionMode fusion,
                        const std::vector<Tensor>& features,
                        const std::vector<UtteranceRecord>& records);

// FAD checkpoint = recolor + classifier + fusion metadata (+ Adam moments).
void save_fad_checkpoint(const std::filesystem::path& path, RecolorNet& net,
                         Classifier& clf, const FadTrainConfig& cfg,
                         const nn::Adam* opt = nullptr, int64_t step = 0,
                         double dev_eer = 1.0);

struct LoadedFadModel {
  RecolorConfig recolor_cfg;
  std::unique_ptr<RecolorNet> recolor;
  std::unique_ptr<Classifier> classifier;
  FusionMode fusion = FusionMode::sub;
  KvMap meta;
};

LoadedFadModel load_fad_checkpoint(const std::filesystem::path& path);

// Pretrain checkpoint: recolor net only.
void save_recolor_checkpoint(const std::filesystem::path& path, RecolorNet& net);
std::unique_ptr<RecolorNet> load_recolor_checkpoint(const std::filesystem::path& path);

// Reconstruction grid: one row per feature, columns
// original | train-path reconstruction | test-path reconstruction.
void write_reconstruction_grid(const std::filesystem::path& path, RecolorNet& net,
                               const std::vector<Tensor>& features);

}  // namespace recolor

#endif  // RECOLOR_TRAINING_HPP
