#include "recolor/eer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace recolor {

int ScoreSet::count(Label l) const {
  int n = 0;
  for (const auto& e : entries)
    if (e.label == l) ++n;
  return n;
}

namespace {

void require_both_classes(const ScoreSet& s, const char* what) {
  if (s.count(Label::bonafide) == 0 || s.count(Label::spoof) == 0)
    throw std::invalid_argument(std::string(what) +
                                ": need at least one bonafide and one spoof score");
}

}  // namespace

std::vector<DetPoint> det_points(const ScoreSet& s) {
  require_both_classes(s, "det_points");
  std::vector<double> bona, spoof;
  for (const auto& e : s.entries)
    (e.label == Label::bonafide ? bona : spoof).push_back(e.score);
  std::sort(bona.begin(), bona.end());
  std::sort(spoof.begin(), spoof.end());

  std::vector<double> thresholds;
  thresholds.reserve(bona.size() + spoof.size() + 1);
  for (double v : bona) thresholds.push_back(v);
  for (double v : spoof) thresholds.push_back(v);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  double nb = static_cast<double>(bona.size());
  double ns = static_cast<double>(spoof.size());
  std::vector<DetPoint> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    // counts via sorted prefix positions
    auto spoof_ge = spoof.end() - std::lower_bound(spoof.begin(), spoof.end(), t);
    auto bona_lt = std::lower_bound(bona.begin(), bona.end(), t) - bona.begin();
    points.push_back({t, static_cast<double>(spoof_ge) / ns,
                      static_cast<double>(bona_lt) / nb});
  }
  return points;
}

EERResult compute_eer(const ScoreSet& s) {
  require_both_classes(s, "compute_eer");
  std::vector<DetPoint> points = det_points(s);
  EERResult r;
  r.n_bona = s.count(Label::bonafide);
  r.n_spoof = s.count(Label::spoof);

  // diff = FAR - FRR is non-increasing along the threshold sweep and starts
  // at +1 (threshold == global min); find the first index where it drops
  // through zero.
  for (size_t i = 0; i < points.size(); ++i) {
    double d = points[i].far - points[i].frr;
    if (d > 0.0) continue;
    if (d == 0.0 || i == 0) {
      r.eer = 0.5 * (points[i].far + points[i].frr);
      r.threshold = points[i].threshold;
    } else {
      const DetPoint& a = points[i - 1];
      const DetPoint& b = points[i];
      double da = a.far - a.frr;
      double db = b.far - b.frr;
      double alpha = da / (da - db);
      double far = a.far + alpha * (b.far - a.far);
      double frr = a.frr + alpha * (b.frr - a.frr);
      r.eer = 0.5 * (far + frr);
      r.threshold = std::isinf(b.threshold)
                        ? a.threshold
                        : a.threshold + alpha * (b.threshold - a.threshold);
    }
    return r;
  }
  // unreachable: the sentinel threshold has FAR=0, FRR=1
  throw std::logic_error("compute_eer: no crossing found");
}

void write_scores(const ScoreSet& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("scores: cannot write " + path.string());
  char buf[64];
  for (const auto& e : s.entries) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.score);
    out << e.utt_id << " " << label_name(e.label) << " " << buf << "\n";
  }
}

ScoreSet read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scores: cannot open " + path.string());
  ScoreSet s;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    ScoreEntry e;
    std::string key, score_str;
    if (!(ss >> e.utt_id >> key >> score_str)) {
      throw std::runtime_error("scores: " + path.string() + ":" + std::to_string(line_no) +
                               ": expected 'utt_id label score'");
    }
    try {
      e.label = label_from_string(key);
    } catch (const std::exception& ex) {
      throw std::runtime_error("scores: " + path.string() + ":" + std::to_string(line_no) +
                               ": " + ex.what());
    }
    const char* first = score_str.data();
    const char* last = first + score_str.size();
    auto res = std::from_chars(first, last, e.score);
    if (res.ec != std::errc() || res.ptr != last) {
      throw std::runtime_error("scores: " + path.string() + ":" + std::to_string(line_no) +
                               ": bad score '" + score_str + "'");
    }
    s.entries.push_back(std::move(e));
  }
  return s;
}

std::string format_eer_percent(double eer) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", eer * 100.0);
  return buf;
}

}  // namespace recolor
