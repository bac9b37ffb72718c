#include "recolor/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "recolor/png.hpp"

namespace recolor {

SpectroImage features_for_record(const UtteranceRecord& r) {
  Waveform w = load_waveform(r.path);
  normalize_gain(w);
  return featurize(fix_length(w, LengthMode::crop_fixed, 0));
}

SpectroImage features_random_crop(const Waveform& gain_normalized, uint64_t crop_seed) {
  return featurize(fix_length(gain_normalized, LengthMode::crop_random, crop_seed));
}

namespace {

Tensor stack_batch(const std::vector<Tensor>& items, const std::vector<int>& indices) {
  const Tensor& first = items[static_cast<size_t>(indices[0])];
  std::vector<int> shape = {static_cast<int>(indices.size())};
  for (int d : first.shape()) shape.push_back(d);
  Tensor out(shape);
  int64_t per = first.numel();
  for (size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(items[static_cast<size_t>(indices[i])].data(), per,
                out.data() + static_cast<int64_t>(i) * per);
  }
  return out;
}

std::ofstream open_log(const std::filesystem::path& dir, const char* name) {
  std::ofstream out;
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    out.open(dir / name);
    if (!out) throw std::runtime_error("training: cannot write log in " + dir.string());
  }
  return out;
}

}  // namespace

void write_reconstruction_grid(const std::filesystem::path& path, RecolorNet& net,
                               const std::vector<Tensor>& features) {
  const int cell = kImageSize, gap = 2;
  int rows = static_cast<int>(features.size());
  RgbRaster grid(3 * cell + 2 * gap, rows * cell + (rows - 1) * gap);
  net.set_train(false);
  for (int r = 0; r < rows; ++r) {
    const Tensor& x = features[static_cast<size_t>(r)];
    Tensor train_img = recolor_forward(net, x, ForwardMode::train);
    Tensor test_img = recolor_forward(net, x, ForwardMode::test);
    blit(grid, raster_from_image(x), 0, r * (cell + gap));
    blit(grid, raster_from_image(train_img), cell + gap, r * (cell + gap));
    blit(grid, raster_from_image(test_img), 2 * (cell + gap), r * (cell + gap));
  }
  net.set_train(true);
  write_png(path, grid);
}

PretrainResult pretrain(const CorpusManifest& manifest, const PretrainConfig& cfg) {
  if (manifest.records.empty()) throw std::invalid_argument("pretrain: empty manifest");
  if (cfg.steps < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("pretrain: steps and batch_size must be positive");

  // cache gain-normalized waveforms; crops are drawn per step
  std::vector<Waveform> waves;
  waves.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    Waveform w = load_waveform(r.path);
    normalize_gain(w);
    waves.push_back(std::move(w));
  }

  PretrainResult res;
  res.net = std::make_unique<RecolorNet>(cfg.recolor);
  res.net->set_train(true);

  std::vector<nn::Param*> params;
  res.net->collect_params(params);
  nn::Adam opt;
  opt.init(params);

  std::ofstream log = open_log(cfg.out_dir, "pretrain_log.txt");
  if (!cfg.out_dir.empty() && cfg.grid_every > 0)
    std::filesystem::create_directories(cfg.out_dir / "grids");

  // fixed-crop features of the first few utterances, for the grid panels
  std::vector<Tensor> grid_feats;
  if (!cfg.out_dir.empty() && cfg.grid_every > 0) {
    for (size_t i = 0; i < waves.size() && i < 4; ++i)
      grid_feats.push_back(featurize(fix_length(waves[i], LengthMode::crop_fixed, 0)));
  }

  Rng rng(cfg.seed);
  int n_utts = static_cast<int>(waves.size());
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Tensor> feats;
    feats.reserve(static_cast<size_t>(cfg.batch_size));
    std::vector<int> idx(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      int u = static_cast<int>(rng.uniform_int(0, n_utts - 1));
      uint64_t crop_seed = rng.gen()();
      idx[static_cast<size_t>(b)] = b;
      feats.push_back(features_random_crop(waves[static_cast<size_t>(u)], crop_seed));
    }
    Tensor x = stack_batch(feats, idx);
    auto fwd = res.net->forward(x, ForwardMode::train);
    double loss = reconstruction_loss(fwd.image, x);
    if (!std::isfinite(loss)) {
      std::ostringstream diag;
      diag << "pretrain: non-finite loss at step " << step << " (batch of " << cfg.batch_size
           << " crops); activations finite: " << all_finite(fwd.activations)
           << ", palette finite: " << all_finite(fwd.palette);
      throw std::runtime_error(diag.str());
    }
    res.loss_curve.push_back(loss);
    if (log) log << step << " " << loss << "\n";

    opt.zero_grad();
    res.net->backward(fwd, reconstruction_loss_grad(fwd.image, x));
    opt.step(nn::cosine_lr(cfg.lr, step, cfg.steps));

    if (!cfg.out_dir.empty() && cfg.grid_every > 0 &&
        ((step + 1) % cfg.grid_every == 0 || step + 1 == cfg.steps)) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%06d.png", step + 1);
      write_reconstruction_grid(cfg.out_dir / "grids" / name, *res.net, grid_feats);
    }
  }

  res.initial_loss = res.loss_curve.front();
  int tail = std::min<int>(10, static_cast<int>(res.loss_curve.size()));
  res.final_loss = std::accumulate(res.loss_curve.end() - tail, res.loss_curve.end(), 0.0) /
                   static_cast<double>(tail);

  if (!cfg.out_dir.empty()) {
    res.checkpoint_path = cfg.out_dir / "recolor.ckpt";
    save_recolor_checkpoint(res.checkpoint_path, *res.net);
  }
  return res;
}

ScoreSet score_features(RecolorNet& net, Classifier& clf, FusionMode fusion,
                        const std::vector<Tensor>& features,
                        const std::vector<UtteranceRecord>& records) {
  net.set_train(false);
  clf.set_train(false);
  ScoreSet scores;
  for (size_t i = 0; i < records.size(); ++i) {
    Tensor x = unsqueeze0(features[i]);
    auto fwd = net.forward(x, ForwardMode::test);
    Tensor f = fuse(x, fwd.image, fusion);
    Tensor logits = clf.forward(f);
    scores.entries.push_back(
        {records[i].utt_id, records[i].label,
         static_cast<double>(logits[0]) - static_cast<double>(logits[1])});
  }
  net.set_train(true);
  clf.set_train(true);
  return scores;
}

ScoreSet score_manifest(RecolorNet& net, Classifier& clf, FusionMode fusion,
                        const CorpusManifest& manifest) {
  std::vector<Tensor> features;
  features.reserve(manifest.records.size());
  for (const auto& r : manifest.records) features.push_back(features_for_record(r));
  return score_features(net, clf, fusion, features, manifest.records);
}

void save_recolor_checkpoint(const std::filesystem::path& path, RecolorNet& net) {
  Checkpoint ck;
  ck.meta["kind"] = "recolor";
  store_recolor_config(ck, net.config);
  checkpoint_store_module(ck, net);
  ck.save(path);
}

std::unique_ptr<RecolorNet> load_recolor_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  auto it = ck.meta.find("kind");
  if (it == ck.meta.end() || it->second != "recolor")
    throw std::runtime_error("checkpoint: " + path.string() + " is not a recolor checkpoint");
  RecolorConfig cfg = parse_recolor_config(ck);
  auto net = std::make_unique<RecolorNet>(cfg);
  checkpoint_restore_module(ck, *net);
  return net;
}

void save_fad_checkpoint(const std::filesystem::path& path, RecolorNet& net, Classifier& clf,
                         const FadTrainConfig& cfg, const nn::Adam* opt, int64_t step,
                         double dev_eer) {
  Checkpoint ck;
  ck.meta["kind"] = "fad";
  store_recolor_config(ck, net.config);
  ck.meta["classifier"] = clf.kind();
  ck.meta["classifier_width"] = std::to_string(cfg.classifier_width);
  ck.meta["fusion"] = fusion_name(cfg.fusion);
  ck.meta["rec_mode"] = rec_mode_name(cfg.loss.rec_mode);
  ck.meta["rec_weight"] = std::to_string(cfg.loss.rec_weight);
  ck.meta["step"] = std::to_string(step);
  ck.meta["dev_eer"] = std::to_string(dev_eer);
  ck.meta["train_seed"] = std::to_string(cfg.seed);
  checkpoint_store_module(ck, net);
  checkpoint_store_module(ck, clf);
  if (opt) {
    ck.meta["adam_t"] = std::to_string(opt->t);
    for (size_t i = 0; i < opt->m.size(); ++i) {
      ck.put("opt.m." + std::to_string(i), opt->m[i]);
      ck.put("opt.v." + std::to_string(i), opt->v[i]);
    }
  }
  ck.save(path);
}

LoadedFadModel load_fad_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  auto it = ck.meta.find("kind");
  if (it == ck.meta.end() || it->second != "fad")
    throw std::runtime_error("checkpoint: " + path.string() + " is not a FAD checkpoint");
  LoadedFadModel m;
  m.meta = KvMap(ck.meta.begin(), ck.meta.end());
  m.recolor_cfg = parse_recolor_config(ck);
  m.recolor = std::make_unique<RecolorNet>(m.recolor_cfg);
  Rng rng(m.recolor_cfg.seed + 1);
  m.classifier = make_classifier(ck.meta.at("classifier"), rng,
                                 std::stoi(ck.meta.at("classifier_width")));
  m.fusion = fusion_from_string(ck.meta.at("fusion"));
  checkpoint_restore_module(ck, *m.recolor);
  checkpoint_restore_module(ck, *m.classifier);
  return m;
}

TrainState fad_train(const CorpusManifest& train, const CorpusManifest& dev,
                     const FadTrainConfig& cfg) {
  if (train.count(Label::bonafide) == 0 || train.count(Label::spoof) == 0)
    throw std::invalid_argument(
        "fad_train: training manifest must contain both classes (bonafide: " +
        std::to_string(train.count(Label::bonafide)) +
        ", spoof: " + std::to_string(train.count(Label::spoof)) + ")");
  if (dev.count(Label::bonafide) == 0 || dev.count(Label::spoof) == 0)
    throw std::invalid_argument("fad_train: dev manifest must contain both classes");
  if (cfg.batch_size < 2)
    throw std::invalid_argument("fad_train: batch_size must be >= 2");

  TrainState state;
  state.seed = cfg.seed;

  // recolor init: scratch or pretrained checkpoint with a matching config
  if (cfg.init_checkpoint.empty()) {
    state.recolor = std::make_unique<RecolorNet>(cfg.recolor);
  } else {
    auto loaded = load_recolor_checkpoint(cfg.init_checkpoint);
    if (loaded->config.num_colors != cfg.recolor.num_colors) {
      throw std::runtime_error(
          "fad_train: color-count mismatch: checkpoint has K=" +
          std::to_string(loaded->config.num_colors) + ", run requests K=" +
          std::to_string(cfg.recolor.num_colors));
    }
    state.recolor = std::move(loaded);
    state.recolor->config.temperature = cfg.recolor.temperature;
  }
  Rng clf_rng(cfg.seed + 1);
  state.classifier = make_classifier(cfg.classifier, clf_rng, cfg.classifier_width);
  state.recolor->set_train(true);
  state.classifier->set_train(true);

  std::vector<nn::Param*> params;
  if (!cfg.freeze_recolor) state.recolor->collect_params(params);
  state.classifier->collect_params(params);
  state.optimizer.init(params);

  // feature cache (prefix crop, deterministic)
  std::vector<Tensor> train_feats, dev_feats;
  std::vector<Label> train_labels;
  train_feats.reserve(train.records.size());
  for (const auto& r : train.records) {
    train_feats.push_back(features_for_record(r));
    train_labels.push_back(r.label);
  }
  dev_feats.reserve(dev.records.size());
  for (const auto& r : dev.records) dev_feats.push_back(features_for_record(r));

  std::ofstream log = open_log(cfg.out_dir, "train_log.txt");

  int n = static_cast<int>(train.records.size());
  int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * cfg.epochs;
  Rng rng(cfg.seed);
  int since_best = 0;

  state.config_snapshot["classifier"] = cfg.classifier;
  state.config_snapshot["fusion"] = fusion_name(cfg.fusion);
  state.config_snapshot["rec_mode"] = rec_mode_name(cfg.loss.rec_mode);
  state.config_snapshot["rec_weight"] = std::to_string(cfg.loss.rec_weight);
  state.config_snapshot["colors"] = std::to_string(cfg.recolor.num_colors);
  state.config_snapshot["temperature"] = std::to_string(cfg.recolor.temperature);
  state.config_snapshot["seed"] = std::to_string(cfg.seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.fork(static_cast<uint64_t>(epoch)).gen());

    double epoch_cls = 0.0, epoch_rec = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      int bsz = std::min(cfg.batch_size, n - start);
      if (bsz < 2) break;  // BatchNorm needs more than one sample
      std::vector<int> idx(order.begin() + start, order.begin() + start + bsz);
      Tensor x = stack_batch(train_feats, idx);
      std::vector<Label> labels;
      labels.reserve(idx.size());
      for (int j : idx) labels.push_back(train_labels[static_cast<size_t>(j)]);

      auto fwd = state.recolor->forward(x, ForwardMode::train);
      Tensor fused = fuse(x, fwd.image, cfg.fusion);
      Tensor logits = state.classifier->forward(fused);
      double loss_cls = cross_entropy(logits, labels);
      double loss_rec = gated_reconstruction_loss(fwd.image, x, labels, cfg.loss.rec_mode);
      double total = loss_cls + cfg.loss.rec_weight * loss_rec;
      if (!std::isfinite(total)) {
        std::ostringstream diag;
        diag << "fad_train: non-finite loss at step " << state.step << " (cls=" << loss_cls
             << ", rec=" << loss_rec << ")";
        throw std::runtime_error(diag.str());
      }
      epoch_cls += loss_cls;
      epoch_rec += loss_rec;
      ++batches;

      state.optimizer.zero_grad();
      Tensor g_logits = cross_entropy_grad(logits, labels);
      Tensor g_fused = state.classifier->backward(g_logits);
      if (!cfg.freeze_recolor) {
        Tensor g_image;
        if (cfg.detach_recolor_from_cls) {
          g_image = Tensor(fwd.image.shape());
        } else {
          g_image = fuse_backward_recon(g_fused, cfg.fusion);
        }
        if (cfg.loss.rec_weight > 0.0f) {
          Tensor g_rec =
              gated_reconstruction_loss_grad(fwd.image, x, labels, cfg.loss.rec_mode);
          for (int64_t i = 0; i < g_image.numel(); ++i)
            g_image[i] += cfg.loss.rec_weight * g_rec[i];
        }
        state.recolor->backward(fwd, g_image);
      }
      state.optimizer.step(nn::cosine_lr(cfg.lr, state.step, total_steps));
      ++state.step;
    }

    ScoreSet dev_scores = score_features(*state.recolor, *state.classifier, cfg.fusion,
                                         dev_feats, dev.records);
    double dev_eer = compute_eer(dev_scores).eer;

    EpochStats stats;
    stats.step = state.step;
    stats.loss_cls = batches ? epoch_cls / batches : 0.0;
    stats.loss_rec = batches ? epoch_rec / batches : 0.0;
    stats.dev_eer = dev_eer;
    state.history.push_back(stats);
    if (log)
      log << stats.step << " " << stats.loss_cls << " " << stats.loss_rec << " " << dev_eer
          << "\n";

    if (dev_eer < state.best_dev_eer) {
      state.best_dev_eer = dev_eer;
      state.best_step = state.step;
      since_best = 0;
      if (!cfg.out_dir.empty()) {
        state.best_checkpoint_path = cfg.out_dir / "best.ckpt";
        save_fad_checkpoint(state.best_checkpoint_path, *state.recolor, *state.classifier,
                            cfg, &state.optimizer, state.step, dev_eer);
      }
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return state;
}

}  // namespace recolor
