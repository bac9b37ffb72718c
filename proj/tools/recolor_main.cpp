// recolor: color-quantization spectral features for fake audio detection.
// Subcommands: synth-data, pretrain, train, eval, grid, visualize.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "recolor/audio.hpp"
#include "recolor/config.hpp"
#include "recolor/eer.hpp"
#include "recolor/png.hpp"
#include "recolor/training.hpp"

namespace fs = std::filesystem;
using namespace recolor;

namespace {

// Relative data paths resolve under $RECOLOR_DATA_ROOT when it is set.
fs::path resolve_data_dir(const std::string& dir) {
  fs::path p(dir);
  const char* root = std::getenv("RECOLOR_DATA_ROOT");
  if (root && *root && p.is_relative()) return fs::path(root) / p;
  return p;
}

CorpusManifest load_corpus(const std::string& dir, Partition partition) {
  fs::path base = resolve_data_dir(dir);
  return parse_protocol(base / "protocol.txt", partition, base / "wav");
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<int> split_csv_int(const std::string& s) {
  std::vector<int> out;
  for (const auto& t : split_csv(s)) out.push_back(std::stoi(t));
  return out;
}

void snapshot_config(const KvMap& kv, const fs::path& out_dir) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  write_kv_file(kv, out_dir / "config.txt");
}

struct RecolorFlags {
  int colors = 8;
  float temperature = 0.01f;
  std::string widths = "16,32,64";
  int pam_dim = 32;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--colors", colors, "Palette size K");
    cmd->add_option("--temperature", temperature, "Softmax temperature for the train path");
    cmd->add_option("--widths", widths, "Encoder stage widths, comma separated");
    cmd->add_option("--pam-dim", pam_dim, "Palette-module attention width");
  }

  RecolorConfig build(uint64_t seed) const {
    RecolorConfig cfg;
    cfg.num_colors = colors;
    cfg.temperature = temperature;
    cfg.encoder_channels = split_csv_int(widths);
    cfg.pam_dim = pam_dim;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }

  void stash(KvMap& kv) const {
    kv["colors"] = std::to_string(colors);
    kv["temperature"] = std::to_string(temperature);
    kv["widths"] = widths;
    kv["pam_dim"] = std::to_string(pam_dim);
  }
};

int cmd_synth_data(const std::string& out, int n, uint64_t seed, const std::string& partition) {
  Partition part = Partition::train;
  if (partition == "dev") part = Partition::dev;
  else if (partition == "eval") part = Partition::eval;
  else if (partition == "pretrain") part = Partition::pretrain;
  else if (partition != "train") throw std::invalid_argument("unknown partition " + partition);

  fs::path dir = resolve_data_dir(out);
  CorpusManifest m = synth_toy_corpus(n, seed, dir, part);
  std::cout << "wrote " << m.records.size() << " utterances (" << m.count(Label::bonafide)
            << " bonafide, " << m.count(Label::spoof) << " spoof) under " << dir.string()
            << "\n";
  std::cout << "protocol: " << (dir / "protocol.txt").string() << "\n";
  return 0;
}

int cmd_pretrain(const std::string& data, const RecolorFlags& rf, int steps, int batch,
                 float lr, uint64_t seed, int grid_every, const std::string& out) {
  PretrainConfig cfg;
  cfg.recolor = rf.build(seed);
  cfg.steps = steps;
  cfg.batch_size = batch;
  cfg.lr = lr;
  cfg.seed = seed;
  cfg.grid_every = grid_every;
  cfg.out_dir = fs::path(out);

  KvMap kv;
  rf.stash(kv);
  kv["command"] = "pretrain";
  kv["data"] = data;
  kv["steps"] = std::to_string(steps);
  kv["batch"] = std::to_string(batch);
  kv["lr"] = std::to_string(lr);
  kv["seed"] = std::to_string(seed);
  snapshot_config(kv, cfg.out_dir);

  CorpusManifest m = load_corpus(data, Partition::pretrain);
  PretrainResult res = pretrain(m, cfg);
  std::cout << "pretrain: " << cfg.steps << " steps, loss " << res.initial_loss << " -> "
            << res.final_loss << "\n";
  std::cout << "checkpoint: " << res.checkpoint_path.string() << "\n";
  return 0;
}

FadTrainConfig build_train_config(const RecolorFlags& rf, const std::string& classifier,
                                  int width, const std::string& fusion,
                                  const std::string& rec_mode, float lambda,
                                  const std::string& init, bool freeze, bool detach, float lr,
                                  int batch, int epochs, int patience, uint64_t seed,
                                  const std::string& out) {
  FadTrainConfig cfg;
  cfg.recolor = rf.build(seed);
  cfg.classifier = classifier;
  cfg.classifier_width = width;
  cfg.fusion = fusion_from_string(fusion);
  cfg.loss.rec_mode = rec_mode_from_string(rec_mode);
  cfg.loss.rec_weight = lambda;
  if (init != "scratch") {
    if (init.rfind("pretrained:", 0) != 0)
      throw std::invalid_argument("--init must be 'scratch' or 'pretrained:PATH'");
    cfg.init_checkpoint = init.substr(std::string("pretrained:").size());
  }
  cfg.freeze_recolor = freeze;
  cfg.detach_recolor_from_cls = detach;
  cfg.lr = lr;
  cfg.batch_size = batch;
  cfg.epochs = epochs;
  cfg.patience = patience;
  cfg.seed = seed;
  cfg.out_dir = fs::path(out);
  return cfg;
}

int cmd_train(const std::string& train_dir, const std::string& dev_dir,
              const FadTrainConfig& cfg, const KvMap& kv) {
  snapshot_config(kv, cfg.out_dir);
  CorpusManifest train = load_corpus(train_dir, Partition::train);
  CorpusManifest dev = load_corpus(dev_dir, Partition::dev);
  TrainState state = fad_train(train, dev, cfg);
  std::cout << "best dev EER: " << format_eer_percent(state.best_dev_eer) << "% at step "
            << state.best_step << "\n";
  if (!state.best_checkpoint_path.empty())
    std::cout << "checkpoint: " << state.best_checkpoint_path.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& partition,
             const std::string& scores_out) {
  Partition part = partition == "dev" ? Partition::dev : Partition::eval;
  LoadedFadModel model = load_fad_checkpoint(ckpt);
  CorpusManifest m = load_corpus(data, part);
  if (m.count(Label::bonafide) == 0 || m.count(Label::spoof) == 0)
    throw std::runtime_error("eval: manifest must contain both classes");
  ScoreSet scores = score_manifest(*model.recolor, *model.classifier, model.fusion, m);
  if (!scores_out.empty()) {
    write_scores(scores, scores_out);
    std::cout << "scores: " << scores_out << "\n";
  }
  EERResult r = compute_eer(scores);
  std::cout << "EER: " << format_eer_percent(r.eer) << "%\n";
  return 0;
}

int cmd_grid(const std::string& train_dir, const std::string& dev_dir,
             const std::string& classifiers, const std::string& fusions,
             const std::string& colors, const std::string& rec_modes,
             const std::string& inits, const RecolorFlags& rf, int width, float lambda,
             float lr, int batch, int epochs, int patience, int pretrain_steps,
             uint64_t seed, const std::string& out) {
  auto cls_list = split_csv(classifiers);
  auto fus_list = split_csv(fusions);
  auto color_list = split_csv_int(colors);
  auto rec_list = split_csv(rec_modes);
  auto init_list = split_csv(inits);
  if (cls_list.empty() || fus_list.empty() || color_list.empty() || rec_list.empty() ||
      init_list.empty())
    throw std::invalid_argument("grid: every axis needs at least one value");
  for (const auto& i : init_list)
    if (i != "tfs" && i != "pre")
      throw std::invalid_argument("grid: inits must be tfs and/or pre");

  fs::path out_dir(out);
  fs::create_directories(out_dir);
  CorpusManifest train = load_corpus(train_dir, Partition::train);
  CorpusManifest dev = load_corpus(dev_dir, Partition::dev);

  // one pretrained recolor model per requested K, shared across cells
  std::map<int, fs::path> pretrained;
  if (std::find(init_list.begin(), init_list.end(), "pre") != init_list.end()) {
    for (int k : color_list) {
      RecolorFlags prf = rf;
      prf.colors = k;
      PretrainConfig pcfg;
      pcfg.recolor = prf.build(seed);
      pcfg.steps = pretrain_steps;
      pcfg.batch_size = 2;
      pcfg.lr = 1e-3f;
      pcfg.seed = seed;
      pcfg.out_dir = out_dir / ("pretrain_k" + std::to_string(k));
      PretrainResult res = pretrain(train, pcfg);
      pretrained[k] = res.checkpoint_path;
    }
  }

  struct Cell {
    std::string classifier, fusion, rec_mode, init;
    int colors;
    double eer;
  };
  std::vector<Cell> cells;
  for (const auto& cls : cls_list) {
    for (const auto& fus : fus_list) {
      for (int k : color_list) {
        for (const auto& rm : rec_list) {
          for (const auto& init : init_list) {
            RecolorFlags crf = rf;
            crf.colors = k;
            std::string cell_name = cls + "_" + fus + "_k" + std::to_string(k) + "_" + rm +
                                    "_" + init;
            std::string init_arg =
                init == "pre" ? "pretrained:" + pretrained.at(k).string() : "scratch";
            FadTrainConfig cfg = build_train_config(
                crf, cls, width, fus, rm, lambda, init_arg, false, false, lr, batch, epochs,
                patience, seed, (out_dir / "cells" / cell_name).string());
            KvMap kv;
            crf.stash(kv);
            kv["command"] = "train";
            kv["train"] = train_dir;
            kv["dev"] = dev_dir;
            kv["classifier"] = cls;
            kv["fusion"] = fus;
            kv["rec_mode"] = rm;
            kv["init"] = init_arg;
            kv["lambda"] = std::to_string(lambda);
            kv["lr"] = std::to_string(lr);
            kv["batch"] = std::to_string(batch);
            kv["epochs"] = std::to_string(epochs);
            kv["patience"] = std::to_string(patience);
            kv["seed"] = std::to_string(seed);
            kv["width"] = std::to_string(width);
            snapshot_config(kv, cfg.out_dir);
            TrainState state = fad_train(train, dev, cfg);
            cells.push_back({cls, fus, rm, init, k, state.best_dev_eer});
            std::cout << "cell " << cell_name << ": dev EER "
                      << format_eer_percent(state.best_dev_eer) << "%\n";
          }
        }
      }
    }
  }

  // table: rows = classifier x fusion x K, columns = rec_mode x init
  std::ostringstream table;
  table << "classifier  process   colors";
  for (const auto& rm : rec_list)
    for (const auto& init : init_list)
      table << "  " << rm << "/" << (init == "tfs" ? "TFS" : "Pre");
  table << "\n";
  std::ofstream csv(out_dir / "results.csv");
  csv << "classifier,fusion,colors,rec_mode,init,dev_eer_percent\n";
  for (const auto& cls : cls_list) {
    for (const auto& fus : fus_list) {
      for (int k : color_list) {
        table << cls << "  " << fus << "  " << k;
        for (const auto& rm : rec_list) {
          for (const auto& init : init_list) {
            for (const auto& c : cells) {
              if (c.classifier == cls && c.fusion == fus && c.colors == k &&
                  c.rec_mode == rm && c.init == init) {
                table << "  " << format_eer_percent(c.eer);
                csv << cls << "," << fus << "," << k << "," << rm << "," << init << ","
                    << format_eer_percent(c.eer) << "\n";
              }
            }
          }
        }
        table << "\n";
      }
    }
  }
  std::cout << table.str();
  std::ofstream tf(out_dir / "results.txt");
  tf << table.str();
  std::cout << "results: " << (out_dir / "results.csv").string() << "\n";
  return 0;
}

int cmd_visualize(const std::vector<std::string>& checkpoints, const std::string& wav,
                  int segments, uint64_t seed, const std::string& out) {
  if (checkpoints.empty()) throw std::invalid_argument("visualize: need --checkpoint");
  Waveform w = load_waveform(wav);
  normalize_gain(w);
  Rng rng(seed);
  std::vector<uint64_t> crop_seeds;
  for (int s = 0; s < segments; ++s) crop_seeds.push_back(rng.gen()());

  std::vector<Tensor> rows;
  const int cell = kImageSize, gap = 2;
  RgbRaster grid(3 * cell + 2 * gap,
                 static_cast<int>(checkpoints.size()) * segments * (cell + gap) - gap);
  int row = 0;
  for (const auto& ckpt : checkpoints) {
    auto net = load_recolor_checkpoint(ckpt);
    net->set_train(false);
    for (int s = 0; s < segments; ++s) {
      Tensor x = features_random_crop(w, crop_seeds[static_cast<size_t>(s)]);
      Tensor train_img = recolor_forward(*net, x, ForwardMode::train);
      Tensor test_img = recolor_forward(*net, x, ForwardMode::test);
      blit(grid, raster_from_image(x), 0, row * (cell + gap));
      blit(grid, raster_from_image(train_img), cell + gap, row * (cell + gap));
      blit(grid, raster_from_image(test_img), 2 * (cell + gap), row * (cell + gap));
      ++row;
    }
  }
  write_png(out, grid);
  std::cout << "grid: " << out << " (" << row << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Color-quantization spectral features for fake audio detection"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic two-class toy corpus");
  std::string sd_out = "toy";
  int sd_n = 50;
  uint64_t sd_seed = 7;
  std::string sd_partition = "train";
  synth->add_option("--out", sd_out, "Output corpus directory")->required();
  synth->add_option("--n", sd_n, "Utterances per class")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sd_seed, "RNG seed");
  synth->add_option("--partition", sd_partition, "Partition tag for utterance ids");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Reconstruction-pretrain the recolor network");
  std::string pt_data, pt_out = "pretrain_out";
  RecolorFlags pt_rf;
  int pt_steps = 200, pt_batch = 2, pt_grid_every = 50;
  float pt_lr = 1e-3f;
  uint64_t pt_seed = 1;
  pre->add_option("--data", pt_data, "Corpus directory (protocol.txt + wav/)")->required();
  pt_rf.add_to(pre);
  pre->add_option("--steps", pt_steps, "Training steps")->check(CLI::PositiveNumber);
  pre->add_option("--batch", pt_batch, "Batch size")->check(CLI::PositiveNumber);
  pre->add_option("--lr", pt_lr, "Adam learning rate");
  pre->add_option("--seed", pt_seed, "RNG seed");
  pre->add_option("--grid-every", pt_grid_every, "Reconstruction-grid cadence (0 = off)");
  pre->add_option("--out", pt_out, "Output directory");

  // train
  auto* tr = app.add_subcommand("train", "Joint FAD training with gated reconstruction loss");
  std::string tr_train, tr_dev, tr_out = "train_out";
  RecolorFlags tr_rf;
  std::string tr_classifier = "lcnn", tr_fusion = "sub", tr_rec_mode = "true_rec",
              tr_init = "scratch";
  int tr_width = 0, tr_batch = 16, tr_epochs = 20, tr_patience = 10;
  float tr_lambda = 1.0f, tr_lr = 1e-4f;
  bool tr_freeze = false, tr_detach = false;
  uint64_t tr_seed = 1;
  tr->add_option("--train", tr_train, "Training corpus directory")->required();
  tr->add_option("--dev", tr_dev, "Development corpus directory")->required();
  tr_rf.add_to(tr);
  tr->add_option("--classifier", tr_classifier, "lcnn | resnet18 | aasist");
  tr->add_option("--width", tr_width, "Classifier width (0 = default)");
  tr->add_option("--fusion", tr_fusion, "only_rec | add | sub");
  tr->add_option("--rec-mode", tr_rec_mode, "true_rec | all_rec");
  tr->add_option("--lambda", tr_lambda, "Reconstruction loss weight");
  tr->add_option("--init", tr_init, "scratch | pretrained:PATH");
  tr->add_flag("--freeze-recolor", tr_freeze, "Do not update recolor parameters");
  tr->add_flag("--detach-cls", tr_detach,
               "Keep the classification loss out of the recolor network");
  tr->add_option("--lr", tr_lr, "Adam learning rate");
  tr->add_option("--batch", tr_batch, "Batch size");
  tr->add_option("--epochs", tr_epochs, "Max epochs");
  tr->add_option("--patience", tr_patience, "Early-stop patience (epochs)");
  tr->add_option("--seed", tr_seed, "RNG seed");
  tr->add_option("--out", tr_out, "Output directory");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a corpus with a trained checkpoint");
  std::string ev_ckpt, ev_data, ev_partition = "eval", ev_scores = "";
  ev->add_option("--checkpoint", ev_ckpt, "FAD checkpoint")->required();
  ev->add_option("--data", ev_data, "Corpus directory")->required();
  ev->add_option("--partition", ev_partition, "dev | eval");
  ev->add_option("--scores", ev_scores, "Score file to write");

  // grid
  auto* gr = app.add_subcommand("grid", "Run the experiment matrix and tabulate dev EERs");
  std::string gr_train, gr_dev, gr_out = "grid_out";
  std::string gr_classifiers = "lcnn", gr_fusions = "only_rec,add,sub", gr_colors = "2,8,16",
              gr_rec_modes = "true_rec,all_rec", gr_inits = "tfs";
  RecolorFlags gr_rf;
  int gr_width = 0, gr_batch = 16, gr_epochs = 5, gr_patience = 10, gr_pretrain_steps = 100;
  float gr_lambda = 1.0f, gr_lr = 1e-4f;
  uint64_t gr_seed = 1;
  gr->add_option("--train", gr_train, "Training corpus directory")->required();
  gr->add_option("--dev", gr_dev, "Development corpus directory")->required();
  gr->add_option("--classifiers", gr_classifiers, "Comma list of classifiers");
  gr->add_option("--fusions", gr_fusions, "Comma list of fusion modes");
  gr->add_option("--colors", gr_colors, "Comma list of palette sizes");
  gr->add_option("--rec-modes", gr_rec_modes, "Comma list of loss gatings");
  gr->add_option("--inits", gr_inits, "Comma list of tfs,pre");
  gr->add_option("--widths", gr_rf.widths, "Encoder stage widths");
  gr->add_option("--pam-dim", gr_rf.pam_dim, "Palette-module attention width");
  gr->add_option("--temperature", gr_rf.temperature, "Softmax temperature");
  gr->add_option("--width", gr_width, "Classifier width (0 = default)");
  gr->add_option("--lambda", gr_lambda, "Reconstruction loss weight");
  gr->add_option("--lr", gr_lr, "Adam learning rate");
  gr->add_option("--batch", gr_batch, "Batch size");
  gr->add_option("--epochs", gr_epochs, "Max epochs per cell");
  gr->add_option("--patience", gr_patience, "Early-stop patience");
  gr->add_option("--pretrain-steps", gr_pretrain_steps, "Steps for 'pre' init pretraining");
  gr->add_option("--seed", gr_seed, "RNG seed");
  gr->add_option("--out", gr_out, "Output directory");

  // visualize
  auto* vz = app.add_subcommand("visualize", "Reconstruction grid for pretrained checkpoints");
  std::vector<std::string> vz_ckpts;
  std::string vz_wav, vz_out = "grid.png";
  int vz_segments = 1;
  uint64_t vz_seed = 1;
  vz->add_option("--checkpoint", vz_ckpts, "Recolor checkpoint (repeatable)")->required();
  vz->add_option("--wav", vz_wav, "Audio file")->required();
  vz->add_option("--segments", vz_segments, "Random segments per checkpoint")
      ->check(CLI::PositiveNumber);
  vz->add_option("--seed", vz_seed, "Segment RNG seed");
  vz->add_option("--out", vz_out, "Output PNG");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth_data(sd_out, sd_n, sd_seed, sd_partition);
    if (pre->parsed())
      return cmd_pretrain(pt_data, pt_rf, pt_steps, pt_batch, pt_lr, pt_seed, pt_grid_every,
                          pt_out);
    if (tr->parsed()) {
      FadTrainConfig cfg = build_train_config(tr_rf, tr_classifier, tr_width, tr_fusion,
                                              tr_rec_mode, tr_lambda, tr_init, tr_freeze,
                                              tr_detach, tr_lr, tr_batch, tr_epochs,
                                              tr_patience, tr_seed, tr_out);
      KvMap kv;
      tr_rf.stash(kv);
      kv["command"] = "train";
      kv["train"] = tr_train;
      kv["dev"] = tr_dev;
      kv["classifier"] = tr_classifier;
      kv["width"] = std::to_string(tr_width);
      kv["fusion"] = tr_fusion;
      kv["rec_mode"] = tr_rec_mode;
      kv["lambda"] = std::to_string(tr_lambda);
      kv["init"] = tr_init;
      kv["freeze_recolor"] = tr_freeze ? "1" : "0";
      kv["detach_cls"] = tr_detach ? "1" : "0";
      kv["lr"] = std::to_string(tr_lr);
      kv["batch"] = std::to_string(tr_batch);
      kv["epochs"] = std::to_string(tr_epochs);
      kv["patience"] = std::to_string(tr_patience);
      kv["seed"] = std::to_string(tr_seed);
      return cmd_train(tr_train, tr_dev, cfg, kv);
    }
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_partition, ev_scores);
    if (gr->parsed())
      return cmd_grid(gr_train, gr_dev, gr_classifiers, gr_fusions, gr_colors, gr_rec_modes,
                      gr_inits, gr_rf, gr_width, gr_lambda, gr_lr, gr_batch, gr_epochs,
                      gr_patience, gr_pretrain_steps, gr_seed, gr_out);
    if (vz->parsed()) return cmd_visualize(vz_ckpts, vz_wav, vz_segments, vz_seed, vz_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
