#ifndef RECOLOR_EER_HPP
#define RECOLOR_EER_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "recolor/audio.hpp"

namespace recolor {

struct ScoreEntry {
  std::string utt_id;
  Label label = Label::bonafide;
  double score = 0.0;  // higher = more bonafide
};

struct ScoreSet {
  std::vector<ScoreEntry> entries;

  int count(Label l) const;
};

struct EERResult {
  double eer = 0.0;
  double threshold = 0.0;
  int n_bona = 0;
  int n_spoof = 0;
};

struct DetPoint {
  double threshold;
  double far;  // fraction of spoof scores >= threshold
  double frr;  // fraction of bonafide scores < threshold
};

// Operating points over the sorted distinct thresholds (plus sentinels);
// FAR is non-increasing and FRR non-decreasing along the list.
std::vector<DetPoint> det_points(const ScoreSet& s);

// EER at the FAR/FRR crossing: exact when a threshold hits FAR == FRR,
// linearly interpolated between adjacent operating points otherwise.
EERResult compute_eer(const ScoreSet& s);

// Text lines "utt_id label score", score at 17 significant digits.
void write_scores(const ScoreSet& s, const std::filesystem::path& path);
ScoreSet read_scores(const std::filesystem::path& path);

std::string format_eer_percent(double eer);  // "12.34" style, two decimals

}  // namespace recolor

#endif  // RECOLOR_EER_HPP
