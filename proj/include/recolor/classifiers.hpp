#ifndef RECOLOR_CLASSIFIERS_HPP
#define RECOLOR_CLASSIFIERS_HPP

#include <memory>
#include <string>
#include <vector>

#include "recolor/nn.hpp"
#include "recolor/tensor.hpp"

namespace recolor {

enum class FusionMode { only_rec, add, sub };

FusionMode fusion_from_string(const std::string& s);
const char* fusion_name(FusionMode m);

// only_rec -> recon; add -> original + recon; sub -> original - recon.
// No clamping; classifiers standardize their input internally.
template <typename T>
void fuse_raw(const T* original, const T* recon, int64_t n, FusionMode mode, T* out) {
  switch (mode) {
    case FusionMode::only_rec:
      for (int64_t i = 0; i < n; ++i) out[i] = recon[i];
      break;
    case FusionMode::add:
      for (int64_t i = 0; i < n; ++i) out[i] = original[i] + recon[i];
      break;
    case FusionMode::sub:
      for (int64_t i = 0; i < n; ++i) out[i] = original[i] - recon[i];
      break;
  }
}

Tensor fuse(const Tensor& original, const Tensor& recon, FusionMode mode);
// Gradient of the fused feature w.r.t. the reconstruction.
Tensor fuse_backward_recon(const Tensor& g_fused, FusionMode mode);

struct ClassifierOutput {
  float logit_bonafide = 0.0f;
  float logit_spoof = 0.0f;
  float score() const { return logit_bonafide - logit_spoof; }
};

// Binary spoofing classifier over a [N,3,256,256] feature image.
// Output logits are [N,2], index 0 = bonafide, index 1 = spoof.
class Classifier : public nn::Module {
 public:
  virtual Tensor forward(const Tensor& x) = 0;
  // Returns the gradient w.r.t. the input feature image.
  virtual Tensor backward(const Tensor& g_logits) = 0;
  virtual const char* kind() const = 0;

  ClassifierOutput score_one(const Tensor& image);  // [3,H,W] helper
};

// kind: "lcnn", "resnet18", or "aasist"; width 0 picks the desk-scale
// default (LCNN 16, ResNet18 16, AASIST 24). Full-scale widths are just
// larger values of the same knob.
std::unique_ptr<Classifier> make_classifier(const std::string& kind, Rng& rng, int width = 0);

// AASIST input adaptation: [3,256,256] -> 256 time frames x 768 features,
// element (c, q, t) lands at frame t, feature c*256 + q.
Tensor aasist_reshape(const Tensor& x);           // [N,3,256,256] -> [N*256, 768]
Tensor aasist_reshape_backward(const Tensor& g, int n);  // inverse scatter

}  // namespace recolor

#endif  // RECOLOR_CLASSIFIERS_HPP
