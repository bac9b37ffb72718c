#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "recolor/checkpoint.hpp"
#include "recolor/training.hpp"
#include "test_util.hpp"

using namespace recolor;
namespace fs = std::filesystem;
using testutil::random_tensor;
using testutil::tensors_equal;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const char* tag) : path(fs::temp_directory_path() / tag) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RecolorConfig tiny_cfg(int k, uint64_t seed = 5) {
  RecolorConfig cfg;
  cfg.num_colors = k;
  cfg.encoder_channels = {6, 8, 10};
  cfg.pam_dim = 12;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("raw container round-trip preserves meta and bits") {
  TempDir tmp("recolor_ckpt_raw");
  Rng rng(91);
  Checkpoint ck;
  ck.meta["kind"] = "test";
  ck.meta["note"] = "value=with=equals";
  Tensor t = random_tensor({3, 7}, rng);
  ck.put("a.w", t);
  ck.save(tmp.path / "x.ckpt");
  Checkpoint back = Checkpoint::load(tmp.path / "x.ckpt");
  CHECK(back.meta.at("kind") == "test");
  CHECK(back.meta.at("note") == "value=with=equals");
  REQUIRE(back.find("a.w") != nullptr);
  CHECK(tensors_equal(*back.find("a.w"), t));
  CHECK(back.find("missing") == nullptr);
}

TEST_CASE("load rejects non-checkpoint files") {
  TempDir tmp("recolor_ckpt_bad");
  {
    std::ofstream f(tmp.path / "junk.ckpt", std::ios::binary);
    f << "this is not a checkpoint";
  }
  CHECK_THROWS(Checkpoint::load(tmp.path / "junk.ckpt"));
  CHECK_THROWS(Checkpoint::load(tmp.path / "missing.ckpt"));
}

TEST_CASE("recolor checkpoint round-trip restores bit-identical forwards") {
  TempDir tmp("recolor_ckpt_net");
  RecolorNet net(tiny_cfg(5));
  // perturb running stats away from their init so buffers are exercised
  net.set_train(true);
  Rng rng(92);
  Tensor x = random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f);
  net.forward(x, ForwardMode::train);
  net.set_train(false);

  auto before_train = net.forward(x, ForwardMode::train);
  auto before_test = net.forward(x, ForwardMode::test);
  save_recolor_checkpoint(tmp.path / "r.ckpt", net);

  auto loaded = load_recolor_checkpoint(tmp.path / "r.ckpt");
  CHECK(loaded->config.num_colors == 5);
  CHECK(loaded->config.encoder_channels == std::vector<int>{6, 8, 10});
  loaded->set_train(false);
  auto after_train = loaded->forward(x, ForwardMode::train);
  auto after_test = loaded->forward(x, ForwardMode::test);
  CHECK(tensors_equal(before_train.image, after_train.image));   // bit-exact
  CHECK(tensors_equal(before_test.image, after_test.image));
  CHECK(tensors_equal(before_train.activations, after_train.activations));
  CHECK(tensors_equal(before_train.palette, after_train.palette));
}

TEST_CASE("restore fails loudly on shape mismatch") {
  TempDir tmp("recolor_ckpt_mismatch");
  RecolorNet small(tiny_cfg(4));
  save_recolor_checkpoint(tmp.path / "r.ckpt", small);

  // widths differ -> shape mismatch on restore
  Checkpoint ck = Checkpoint::load(tmp.path / "r.ckpt");
  RecolorConfig other = tiny_cfg(4);
  other.encoder_channels = {8, 10, 12};
  RecolorNet wrong(other);
  try {
    checkpoint_restore_module(ck, wrong);
    CHECK(false);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
  }
}

TEST_CASE("fad checkpoint restores classifier and fusion mode") {
  TempDir tmp("recolor_ckpt_fad");
  RecolorNet net(tiny_cfg(3));
  Rng rng(93);
  auto clf = make_classifier("lcnn", rng, 4);

  FadTrainConfig cfg;
  cfg.recolor = net.config;
  cfg.classifier = "lcnn";
  cfg.classifier_width = 4;
  cfg.fusion = FusionMode::add;
  save_fad_checkpoint(tmp.path / "f.ckpt", net, *clf, cfg, nullptr, 42, 0.125);

  LoadedFadModel m = load_fad_checkpoint(tmp.path / "f.ckpt");
  CHECK(m.fusion == FusionMode::add);
  CHECK(m.recolor_cfg.num_colors == 3);
  CHECK(std::string(m.classifier->kind()) == "lcnn");
  CHECK(m.meta.at("step") == "42");

  net.set_train(false);
  m.recolor->set_train(false);
  clf->set_train(false);
  m.classifier->set_train(false);
  Tensor x = random_tensor({1, 3, 256, 256}, rng, 0.0f, 1.0f);
  auto a = net.forward(x, ForwardMode::test);
  auto b = m.recolor->forward(x, ForwardMode::test);
  CHECK(tensors_equal(a.image, b.image));
  Tensor la = clf->forward(x);
  Tensor lb = m.classifier->forward(x);
  CHECK(tensors_equal(la, lb));

  // a recolor checkpoint is not a FAD checkpoint and vice versa
  save_recolor_checkpoint(tmp.path / "r.ckpt", net);
  CHECK_THROWS(load_fad_checkpoint(tmp.path / "r.ckpt"));
  CHECK_THROWS(load_recolor_checkpoint(tmp.path / "f.ckpt"));
}
