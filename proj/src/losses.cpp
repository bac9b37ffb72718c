#include "recolor/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace recolor {

RecMode rec_mode_from_string(const std::string& s) {
  if (s == "true_rec") return RecMode::true_rec;
  if (s == "all_rec") return RecMode::all_rec;
  throw std::invalid_argument("unknown rec mode '" + s + "'");
}

const char* rec_mode_name(RecMode m) {
  return m == RecMode::true_rec ? "true_rec" : "all_rec";
}

int label_class_index(Label l) { return l == Label::bonafide ? 0 : 1; }

double reconstruction_loss(const Tensor& recon, const Tensor& original) {
  if (!recon.same_shape(original))
    throw std::invalid_argument("reconstruction_loss: shape mismatch " + recon.shape_str() +
                                " vs " + original.shape_str());
  double acc = 0.0;
  for (int64_t i = 0; i < recon.numel(); ++i) {
    double d = static_cast<double>(recon[i]) - original[i];
    acc += d * d;
  }
  return acc / static_cast<double>(recon.numel());
}

Tensor reconstruction_loss_grad(const Tensor& recon, const Tensor& original) {
  if (!recon.same_shape(original))
    throw std::invalid_argument("reconstruction_loss_grad: shape mismatch");
  Tensor g(recon.shape());
  float scale = 2.0f / static_cast<float>(recon.numel());
  for (int64_t i = 0; i < recon.numel(); ++i) g[i] = scale * (recon[i] - original[i]);
  return g;
}

namespace {

void check_batch(const Tensor& recons, const Tensor& originals,
                 const std::vector<Label>& labels, const char* what) {
  if (!recons.same_shape(originals))
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  if (recons.ndim() < 1 || recons.dim(0) != static_cast<int>(labels.size()))
    throw std::invalid_argument(std::string(what) + ": batch size " +
                                std::to_string(recons.ndim() ? recons.dim(0) : 0) +
                                " != label count " + std::to_string(labels.size()));
}

double sample_mse(const Tensor& recons, const Tensor& originals, int i, int64_t per) {
  const float* r = recons.data() + static_cast<int64_t>(i) * per;
  const float* o = originals.data() + static_cast<int64_t>(i) * per;
  double acc = 0.0;
  for (int64_t j = 0; j < per; ++j) {
    double d = static_cast<double>(r[j]) - o[j];
    acc += d * d;
  }
  return acc / static_cast<double>(per);
}

}  // namespace

double gated_reconstruction_loss(const Tensor& recons, const Tensor& originals,
                                 const std::vector<Label>& labels, RecMode mode) {
  check_batch(recons, originals, labels, "gated_reconstruction_loss");
  int n = recons.dim(0);
  int64_t per = recons.numel() / n;
  double acc = 0.0;
  int used = 0;
  for (int i = 0; i < n; ++i) {
    if (mode == RecMode::true_rec && labels[static_cast<size_t>(i)] != Label::bonafide)
      continue;
    acc += sample_mse(recons, originals, i, per);
    ++used;
  }
  return used > 0 ? acc / used : 0.0;
}

Tensor gated_reconstruction_loss_grad(const Tensor& recons, const Tensor& originals,
                                      const std::vector<Label>& labels, RecMode mode) {
  check_batch(recons, originals, labels, "gated_reconstruction_loss_grad");
  int n = recons.dim(0);
  int64_t per = recons.numel() / n;
  int used = 0;
  for (int i = 0; i < n; ++i) {
    if (mode == RecMode::all_rec || labels[static_cast<size_t>(i)] == Label::bonafide) ++used;
  }
  Tensor g(recons.shape());
  if (used == 0) return g;
  float scale = 2.0f / (static_cast<float>(per) * static_cast<float>(used));
  for (int i = 0; i < n; ++i) {
    if (mode == RecMode::true_rec && labels[static_cast<size_t>(i)] != Label::bonafide)
      continue;
    const float* r = recons.data() + static_cast<int64_t>(i) * per;
    const float* o = originals.data() + static_cast<int64_t>(i) * per;
    float* gp = g.data() + static_cast<int64_t>(i) * per;
    for (int64_t j = 0; j < per; ++j) gp[j] = scale * (r[j] - o[j]);
  }
  return g;
}

double cross_entropy(const Tensor& logits, const std::vector<Label>& labels) {
  if (logits.ndim() != 2 || logits.dim(1) != 2 ||
      logits.dim(0) != static_cast<int>(labels.size()))
    throw std::invalid_argument("cross_entropy: expected [N,2] logits matching labels");
  int n = logits.dim(0);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double a = logits.at(i, 0), b = logits.at(i, 1);
    double m = std::max(a, b);
    double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    double target = label_class_index(labels[static_cast<size_t>(i)]) == 0 ? a : b;
    acc += lse - target;
  }
  return acc / n;
}

Tensor cross_entropy_grad(const Tensor& logits, const std::vector<Label>& labels) {
  int n = logits.dim(0);
  Tensor g(logits.shape());
  for (int i = 0; i < n; ++i) {
    double a = logits.at(i, 0), b = logits.at(i, 1);
    double m = std::max(a, b);
    double ea = std::exp(a - m), eb = std::exp(b - m);
    double z = ea + eb;
    int y = label_class_index(labels[static_cast<size_t>(i)]);
    g.at(i, 0) = static_cast<float>((ea / z - (y == 0 ? 1.0 : 0.0)) / n);
    g.at(i, 1) = static_cast<float>((eb / z - (y == 1 ? 1.0 : 0.0)) / n);
  }
  return g;
}

}  // namespace recolor
