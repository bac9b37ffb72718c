#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "recolor/eer.hpp"
#include "recolor/tensor.hpp"

using namespace recolor;

namespace {

ScoreSet make_set(const std::vector<double>& bona, const std::vector<double>& spoof) {
  ScoreSet s;
  int i = 0;
  for (double v : bona) s.entries.push_back({"b" + std::to_string(i++), Label::bonafide, v});
  i = 0;
  for (double v : spoof) s.entries.push_back({"s" + std::to_string(i++), Label::spoof, v});
  return s;
}

// Exhaustive sweep oracle: recounts FAR/FRR at every candidate threshold
// with quadratic loops, then applies the same crossing rule.
double oracle_eer(const ScoreSet& s) {
  std::vector<double> thresholds;
  for (const auto& e : s.entries) thresholds.push_back(e.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  int nb = 0, ns = 0;
  for (const auto& e : s.entries) (e.label == Label::bonafide ? nb : ns)++;

  double prev_far = 0.0, prev_frr = 0.0, prev_d = 1.0;
  bool have_prev = false;
  for (double t : thresholds) {
    int far_count = 0, frr_count = 0;
    for (const auto& e : s.entries) {
      if (e.label == Label::spoof && e.score >= t) ++far_count;
      if (e.label == Label::bonafide && e.score < t) ++frr_count;
    }
    double far = static_cast<double>(far_count) / ns;
    double frr = static_cast<double>(frr_count) / nb;
    double d = far - frr;
    if (d <= 0.0) {
      if (d == 0.0 || !have_prev) return 0.5 * (far + frr);
      double alpha = prev_d / (prev_d - d);
      double ifar = prev_far + alpha * (far - prev_far);
      double ifrr = prev_frr + alpha * (frr - prev_frr);
      return 0.5 * (ifar + ifrr);
    }
    prev_far = far;
    prev_frr = frr;
    prev_d = d;
    have_prev = true;
  }
  return -1.0;  // unreachable
}

}  // namespace

TEST_CASE("perfect separation gives EER 0") {
  auto s = make_set({2.0, 3.0}, {0.0, 1.0});
  EERResult r = compute_eer(s);
  CHECK(r.eer == doctest::Approx(0.0));
  CHECK(r.n_bona == 2);
  CHECK(r.n_spoof == 2);
}

TEST_CASE("identical score distributions give EER 0.5") {
  auto s = make_set({0.1, 0.5, 0.9}, {0.1, 0.5, 0.9});
  CHECK(compute_eer(s).eer == doctest::Approx(0.5));
}

TEST_CASE("single-class input is rejected") {
  ScoreSet s;
  s.entries.push_back({"a", Label::bonafide, 1.0});
  CHECK_THROWS(compute_eer(s));
  CHECK_THROWS(det_points(s));
}

TEST_CASE("compute_eer matches the exhaustive oracle on random sets") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    int nb = static_cast<int>(rng.uniform_int(1, 30));
    int ns = static_cast<int>(rng.uniform_int(1, 30));
    std::vector<double> bona, spoof;
    for (int i = 0; i < nb; ++i) bona.push_back(rng.uniform(-3.0, 3.0));
    for (int i = 0; i < ns; ++i) spoof.push_back(rng.uniform(-4.0, 2.0));
    auto s = make_set(bona, spoof);
    CHECK(std::fabs(compute_eer(s).eer - oracle_eer(s)) < 1e-9);
  }
}

TEST_CASE("EER is invariant to strictly increasing score transforms") {
  Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> bona, spoof;
    for (int i = 0; i < 25; ++i) bona.push_back(rng.uniform(-1.0, 2.5));
    for (int i = 0; i < 25; ++i) spoof.push_back(rng.uniform(-2.5, 1.0));
    auto s = make_set(bona, spoof);
    double base = compute_eer(s).eer;

    ScoreSet warped = s;
    for (auto& e : warped.entries) e.score = std::tanh(e.score) * 3.0 + e.score / 7.0;
    CHECK(std::fabs(compute_eer(warped).eer - base) < 1e-12);

    ScoreSet expd = s;
    for (auto& e : expd.entries) e.score = std::exp(e.score);
    CHECK(std::fabs(compute_eer(expd).eer - base) < 1e-12);
  }
}

TEST_CASE("label swap with score negation preserves EER") {
  Rng rng(105);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> bona, spoof;
    for (int i = 0; i < 20; ++i) bona.push_back(rng.uniform(-1.0, 2.0));
    for (int i = 0; i < 30; ++i) spoof.push_back(rng.uniform(-2.0, 1.0));
    auto s = make_set(bona, spoof);
    ScoreSet swapped = s;
    for (auto& e : swapped.entries) {
      e.label = e.label == Label::bonafide ? Label::spoof : Label::bonafide;
      e.score = -e.score;
    }
    CHECK(compute_eer(swapped).eer == doctest::Approx(compute_eer(s).eer).epsilon(1e-9));
  }
}

TEST_CASE("EER is invariant to entry permutation") {
  Rng rng(107);
  std::vector<double> bona, spoof;
  for (int i = 0; i < 15; ++i) bona.push_back(rng.uniform(0.0, 2.0));
  for (int i = 0; i < 15; ++i) spoof.push_back(rng.uniform(-2.0, 0.5));
  auto s = make_set(bona, spoof);
  double base = compute_eer(s).eer;
  ScoreSet shuffled = s;
  std::shuffle(shuffled.entries.begin(), shuffled.entries.end(), rng.gen());
  CHECK(compute_eer(shuffled).eer == base);
}

TEST_CASE("det_points is a monotone staircase containing the EER crossing") {
  Rng rng(109);
  std::vector<double> bona, spoof;
  for (int i = 0; i < 20; ++i) bona.push_back(rng.uniform(-1.0, 2.0));
  for (int i = 0; i < 20; ++i) spoof.push_back(rng.uniform(-2.0, 1.0));
  auto s = make_set(bona, spoof);
  auto points = det_points(s);
  for (size_t i = 1; i < points.size(); ++i) {
    CHECK(points[i].far <= points[i - 1].far);
    CHECK(points[i].frr >= points[i - 1].frr);
  }
  double eer = compute_eer(s).eer;
  // the crossing lies between adjacent points where FAR-FRR changes sign
  bool bracketed = false;
  for (size_t i = 1; i < points.size(); ++i) {
    double d0 = points[i - 1].far - points[i - 1].frr;
    double d1 = points[i].far - points[i].frr;
    if (d0 >= 0.0 && d1 <= 0.0) {
      double lo = std::min({points[i - 1].frr, points[i].far});
      double hi = std::max({points[i - 1].far, points[i].frr});
      CHECK(eer >= lo - 1e-12);
      CHECK(eer <= hi + 1e-12);
      bracketed = true;
      break;
    }
  }
  CHECK(bracketed);

  // perfect separation: the staircase reaches (0, 0)
  auto sep = make_set({5.0, 6.0}, {1.0, 2.0});
  auto sep_points = det_points(sep);
  bool has_origin = false;
  for (const auto& p : sep_points)
    if (p.far == 0.0 && p.frr == 0.0) has_origin = true;
  CHECK(has_origin);
}

TEST_CASE("score files round-trip exactly") {
  namespace fs = std::filesystem;
  fs::path tmp = fs::temp_directory_path() / "recolor_eer_test";
  fs::create_directories(tmp);

  ScoreSet s;
  s.entries.push_back({"utt1", Label::bonafide, -1.2345678901234});
  s.entries.push_back({"utt2", Label::spoof, 3.14159265358979312});
  s.entries.push_back({"utt3", Label::bonafide, 1e-17});
  write_scores(s, tmp / "scores.txt");
  ScoreSet back = read_scores(tmp / "scores.txt");
  REQUIRE(back.entries.size() == s.entries.size());
  for (size_t i = 0; i < s.entries.size(); ++i) {
    CHECK(back.entries[i].utt_id == s.entries[i].utt_id);
    CHECK(back.entries[i].label == s.entries[i].label);
    CHECK(back.entries[i].score == s.entries[i].score);  // exact
  }

  ScoreSet empty;
  write_scores(empty, tmp / "empty.txt");
  CHECK(read_scores(tmp / "empty.txt").entries.empty());

  // malformed line reports its number
  {
    std::ofstream bad(tmp / "bad.txt");
    bad << "utt1 bonafide 1.0\nutt2 nonsense 2.0\n";
  }
  try {
    read_scores(tmp / "bad.txt");
    CHECK(false);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  fs::remove_all(tmp);
}

TEST_CASE("format_eer_percent uses two decimals") {
  CHECK(format_eer_percent(0.1137) == "11.37");
  CHECK(format_eer_percent(0.0) == "0.00");
  CHECK(format_eer_percent(0.5) == "50.00");
}
