#ifndef RECOLOR_LOSSES_HPP
#define RECOLOR_LOSSES_HPP

#include <vector>

#include "recolor/audio.hpp"
#include "recolor/tensor.hpp"

namespace recolor {

enum class RecMode { true_rec, all_rec };

RecMode rec_mode_from_string(const std::string& s);
const char* rec_mode_name(RecMode m);

struct LossConfig {
  RecMode rec_mode = RecMode::true_rec;
  float rec_weight = 1.0f;  // lambda
};

// Mean squared error over all entries.
double reconstruction_loss(const Tensor& recon, const Tensor& original);
// d(mse)/d(recon) = 2 (recon - original) / numel
Tensor reconstruction_loss_grad(const Tensor& recon, const Tensor& original);

// Batched, gated reconstruction loss. recons/originals are [N,C,H,W];
// all_rec averages per-sample MSEs over the batch, true_rec over bonafide
// samples only (0 when the batch has none).
double gated_reconstruction_loss(const Tensor& recons, const Tensor& originals,
                                 const std::vector<Label>& labels, RecMode mode);
Tensor gated_reconstruction_loss_grad(const Tensor& recons, const Tensor& originals,
                                      const std::vector<Label>& labels, RecMode mode);

// Two-way cross entropy; logits [N,2], class index 0 = bonafide, 1 = spoof.
double cross_entropy(const Tensor& logits, const std::vector<Label>& labels);
Tensor cross_entropy_grad(const Tensor& logits, const std::vector<Label>& labels);

int label_class_index(Label l);

}  // namespace recolor

#endif  // RECOLOR_LOSSES_HPP
