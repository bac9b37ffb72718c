#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "recolor/config.hpp"
#include "recolor/eer.hpp"

using namespace recolor;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const char* tag) : path(fs::temp_directory_path() / tag) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
  std::string cmd = std::string(RECOLOR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tree_bytes(const fs::path& a, const fs::path& b, const char* sub) {
  auto pa = a / sub, pb = b / sub;
  if (!fs::exists(pa) || !fs::exists(pb)) return false;
  return file_bytes(pa) == file_bytes(pb);
}

}  // namespace

TEST_CASE("synth-data: counting, determinism, bad arguments") {
  TempDir tmp("recolor_cli_synth");
  std::string base = tmp.path.string();

  CHECK(run("synth-data --n 5 --seed 7 --out " + base + "/c1") == 0);
  int wavs = 0;
  for (auto& e : fs::directory_iterator(tmp.path / "c1" / "wav")) {
    (void)e;
    ++wavs;
  }
  CHECK(wavs == 10);
  CHECK(fs::exists(tmp.path / "c1" / "protocol.txt"));

  // rerun with the same seed: identical corpus
  CHECK(run("synth-data --n 5 --seed 7 --out " + base + "/c2") == 0);
  CHECK(same_tree_bytes(tmp.path / "c1", tmp.path / "c2", "protocol.txt"));
  CorpusManifest m = parse_protocol(tmp.path / "c1" / "protocol.txt", Partition::train,
                                    tmp.path / "c1" / "wav");
  for (const auto& r : m.records) {
    CHECK(file_bytes(r.path) ==
          file_bytes(tmp.path / "c2" / "wav" / r.path.filename()));
  }

  // n must be positive
  CHECK(run("synth-data --n 0 --out " + base + "/bad") != 0);
  CHECK(run("synth-data --n -3 --out " + base + "/bad") != 0);
  // unknown subcommand / missing required option
  CHECK(run("synth-data") != 0);
  CHECK(run("frobnicate") != 0);
}

TEST_CASE("pretrain CLI: runs, snapshots config, rejects bad temperature") {
  TempDir tmp("recolor_cli_pre");
  std::string base = tmp.path.string();
  REQUIRE(run("synth-data --n 3 --seed 11 --out " + base + "/data") == 0);

  std::string common = "pretrain --data " + base + "/data --colors 4 --widths 6,8,10 "
                       "--pam-dim 12 --steps 6 --batch 2 --seed 3 --grid-every 3 --out ";
  CHECK(run(common + base + "/p1") == 0);
  CHECK(fs::exists(tmp.path / "p1" / "recolor.ckpt"));
  CHECK(fs::exists(tmp.path / "p1" / "pretrain_log.txt"));
  CHECK(fs::exists(tmp.path / "p1" / "config.txt"));
  CHECK(fs::exists(tmp.path / "p1" / "grids" / "step_000006.png"));

  KvMap kv = read_kv_file(tmp.path / "p1" / "config.txt");
  CHECK(kv.at("colors") == "4");
  CHECK(kv.at("steps") == "6");

  // --colors 16 --temperature 0.001 are accepted and recorded
  CHECK(run("pretrain --data " + base + "/data --colors 16 --temperature 0.001 "
            "--widths 6,8,10 --pam-dim 12 --steps 2 --batch 2 --grid-every 0 --out " +
            base + "/p2") == 0);
  KvMap kv2 = read_kv_file(tmp.path / "p2" / "config.txt");
  CHECK(kv2.at("colors") == "16");
  CHECK(kv2.at("temperature").substr(0, 5) == "0.001");

  // invalid temperature
  CHECK(run("pretrain --data " + base + "/data --temperature 0 --steps 2 --out " + base +
            "/p3") != 0);
  // missing corpus
  CHECK(run("pretrain --data " + base + "/nowhere --steps 2 --out " + base + "/p4") != 0);

  // same seed twice: identical logs and checkpoints
  CHECK(run(common + base + "/p5") == 0);
  CHECK(same_tree_bytes(tmp.path / "p1", tmp.path / "p5", "pretrain_log.txt"));
  CHECK(same_tree_bytes(tmp.path / "p1", tmp.path / "p5", "recolor.ckpt"));
}

TEST_CASE("train/eval CLI: end-to-end on a micro corpus") {
  TempDir tmp("recolor_cli_train");
  std::string base = tmp.path.string();
  REQUIRE(run("synth-data --n 4 --seed 21 --out " + base + "/train") == 0);
  REQUIRE(run("synth-data --n 2 --seed 22 --out " + base + "/dev") == 0);

  std::string train_cmd =
      "train --train " + base + "/train --dev " + base + "/dev "
      "--classifier lcnn --width 4 --fusion sub --rec-mode true_rec --colors 2 "
      "--widths 6,8,10 --pam-dim 12 --epochs 2 --batch 4 --lr 1e-3 --seed 5 --out ";
  CHECK(run(train_cmd + base + "/run1") == 0);
  CHECK(fs::exists(tmp.path / "run1" / "best.ckpt"));
  CHECK(fs::exists(tmp.path / "run1" / "train_log.txt"));
  CHECK(fs::exists(tmp.path / "run1" / "config.txt"));

  // determinism: same seed -> identical dev-EER logs
  CHECK(run(train_cmd + base + "/run2") == 0);
  CHECK(same_tree_bytes(tmp.path / "run1", tmp.path / "run2", "train_log.txt"));

  // eval: writes scores, prints EER; rerun byte-identical
  std::string eval_cmd = "eval --checkpoint " + base + "/run1/best.ckpt --data " + base +
                         "/dev --partition dev --scores ";
  CHECK(run(eval_cmd + base + "/s1.txt") == 0);
  CHECK(run(eval_cmd + base + "/s2.txt") == 0);
  CHECK(file_bytes(tmp.path / "s1.txt") == file_bytes(tmp.path / "s2.txt"));
  ScoreSet s = read_scores(tmp.path / "s1.txt");
  CHECK(s.entries.size() == 4);

  // missing checkpoint
  CHECK(run("eval --checkpoint " + base + "/nope.ckpt --data " + base + "/dev") != 0);

  // K-mismatched pretrained init fails with nonzero exit
  REQUIRE(run("pretrain --data " + base + "/train --colors 8 --widths 6,8,10 --pam-dim 12 "
              "--steps 2 --batch 2 --grid-every 0 --out " + base + "/pre8") == 0);
  CHECK(run("train --train " + base + "/train --dev " + base + "/dev --colors 2 "
            "--widths 6,8,10 --pam-dim 12 --epochs 1 --batch 4 --init pretrained:" + base +
            "/pre8/recolor.ckpt --out " + base + "/mism") != 0);
}

TEST_CASE("eval rejects a single-class manifest") {
  TempDir tmp("recolor_cli_oneclass");
  std::string base = tmp.path.string();
  REQUIRE(run("synth-data --n 2 --seed 31 --out " + base + "/train") == 0);
  REQUIRE(run("train --train " + base + "/train --dev " + base + "/train --classifier lcnn "
              "--width 4 --colors 2 --widths 6,8,10 --pam-dim 12 --epochs 1 --batch 4 "
              "--out " + base + "/run") == 0);

  // strip spoof lines from a copy of the corpus
  fs::create_directories(tmp.path / "bona_only");
  fs::copy(tmp.path / "train" / "wav", tmp.path / "bona_only" / "wav",
           fs::copy_options::recursive);
  {
    std::ifstream in(tmp.path / "train" / "protocol.txt");
    std::ofstream out(tmp.path / "bona_only" / "protocol.txt");
    std::string line;
    while (std::getline(in, line))
      if (line.find("bonafide") != std::string::npos) out << line << "\n";
  }
  CHECK(run("eval --checkpoint " + base + "/run/best.ckpt --data " + base +
            "/bona_only --partition dev") != 0);
}

TEST_CASE("visualize: grid per checkpoint, deterministic, color bound in pixels") {
  TempDir tmp("recolor_cli_vis");
  std::string base = tmp.path.string();
  REQUIRE(run("synth-data --n 2 --seed 41 --out " + base + "/data") == 0);
  REQUIRE(run("pretrain --data " + base + "/data --colors 2 --widths 6,8,10 --pam-dim 12 "
              "--steps 4 --batch 2 --grid-every 0 --out " + base + "/k2") == 0);
  REQUIRE(run("pretrain --data " + base + "/data --colors 16 --widths 6,8,10 --pam-dim 12 "
              "--steps 4 --batch 2 --grid-every 0 --out " + base + "/k16") == 0);

  // one wav, two checkpoints -> 2-row grid
  CorpusManifest m = parse_protocol(tmp.path / "data" / "protocol.txt", Partition::train,
                                    tmp.path / "data" / "wav");
  std::string wav = m.records[0].path.string();
  std::string vis_cmd = "visualize --checkpoint " + base + "/k2/recolor.ckpt --checkpoint " +
                        base + "/k16/recolor.ckpt --wav " + wav + " --segments 1 --seed 9 "
                        "--out ";
  CHECK(run(vis_cmd + base + "/g1.png") == 0);
  CHECK(fs::exists(tmp.path / "g1.png"));
  // PNG header present and rows stacked: 2 rows * 256 + 2 gap
  auto bytes = file_bytes(tmp.path / "g1.png");
  REQUIRE(bytes.size() > 24);
  CHECK(static_cast<unsigned char>(bytes[1]) == 'P');

  CHECK(run(vis_cmd + base + "/g2.png") == 0);
  CHECK(file_bytes(tmp.path / "g1.png") == file_bytes(tmp.path / "g2.png"));
}

TEST_CASE("grid CLI: tiny matrix produces the table and cell snapshots") {
  TempDir tmp("recolor_cli_grid");
  std::string base = tmp.path.string();
  REQUIRE(run("synth-data --n 3 --seed 51 --out " + base + "/train") == 0);
  REQUIRE(run("synth-data --n 2 --seed 52 --out " + base + "/dev") == 0);

  CHECK(run("grid --train " + base + "/train --dev " + base + "/dev --classifiers lcnn "
            "--fusions only_rec,sub --colors 2 --rec-modes true_rec --inits tfs,pre "
            "--widths 6,8,10 --pam-dim 12 --width 4 --epochs 1 --batch 4 "
            "--pretrain-steps 2 --seed 3 --out " + base + "/grid") == 0);
  CHECK(fs::exists(tmp.path / "grid" / "results.csv"));
  CHECK(fs::exists(tmp.path / "grid" / "results.txt"));

  std::ifstream csv(tmp.path / "grid" / "results.csv");
  int lines = 0;
  std::string line, header;
  bool has_tfs = false, has_pre = false;
  while (std::getline(csv, line)) {
    if (lines == 0) header = line;
    if (line.find(",tfs,") != std::string::npos) has_tfs = true;
    if (line.find(",pre,") != std::string::npos) has_pre = true;
    ++lines;
  }
  CHECK(lines == 1 + 2 * 1 * 1 * 2);  // header + fusions x colors x rec_modes x inits
  CHECK(has_tfs);
  CHECK(has_pre);

  // results.txt table carries TFS and Pre columns
  std::string table;
  {
    std::ifstream tf(tmp.path / "grid" / "results.txt");
    table.assign(std::istreambuf_iterator<char>(tf), std::istreambuf_iterator<char>());
  }
  CHECK(table.find("TFS") != std::string::npos);
  CHECK(table.find("Pre") != std::string::npos);

  // every cell keeps a reproducible config snapshot
  CHECK(fs::exists(tmp.path / "grid" / "cells" / "lcnn_sub_k2_true_rec_tfs" / "config.txt"));

  // an empty axis is rejected
  CHECK(run("grid --train " + base + "/train --dev " + base + "/dev --classifiers '' "
            "--out " + base + "/g2") != 0);
}
