#ifndef RECOLOR_NN_HPP
#define RECOLOR_NN_HPP

#include <memory>
#include <string>
#include <vector>

#include "recolor/tensor.hpp"

// Minimal CPU layer library with explicit forward/backward passes.
// Tensors are NCHW. Layers cache whatever backward needs, so a layer
// instance serves one forward/backward pair at a time.

namespace recolor::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  void init_shape(std::vector<int> shape) {
    value = Tensor(shape);
    grad = Tensor(std::move(shape));
  }
};

struct Module {
  virtual ~Module() = default;
  virtual void collect_params(std::vector<Param*>& out) {}
  // Non-trainable state that still belongs in checkpoints (BN running stats).
  virtual void collect_buffers(std::vector<Param*>& out) {}
  virtual void set_train(bool) {}
};

void he_uniform_init(Tensor& w, int fan_in, Rng& rng);

class Conv2d : public Module {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride, int pad,
         bool bias, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<Param*>& out) override;

  Param w;  // [out_ch, in_ch*k*k]
  Param b;  // [out_ch]

  int in_ch, out_ch, ksize, stride, pad;
  bool has_bias;

 private:
  Tensor x_;
};

class DepthwiseConv2d : public Module {
 public:
  DepthwiseConv2d(std::string name, int channels, int ksize, int pad, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<Param*>& out) override;

  Param w;  // [channels, k*k]
  Param b;  // [channels]
  int channels, ksize, pad;

 private:
  Tensor x_;
};

class BatchNorm2d : public Module {
 public:
  BatchNorm2d(std::string name, int channels);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<Param*>& out) override;
  void set_train(bool t) override { training_ = t; }

  Param gamma, beta;
  Param running_mean, running_var;  // buffers
  int channels;
  float momentum = 0.1f;
  float eps = 1e-5f;

 private:
  bool training_ = true;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

// Per-sample, per-channel standardization over H*W; no learned affine.
class InstanceStandardize : public Module {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

  float eps = 1e-5f;

 private:
  Tensor xhat_;
  std::vector<float> inv_std_;
};

// LayerNorm over the channel axis at each (n, h, w) location.
class LayerNormChannel : public Module {
 public:
  LayerNormChannel(std::string name, int channels);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<Param*>& out) override;

  Param gamma, beta;
  int channels;
  float eps = 1e-5f;

 private:
  Tensor xhat_;
  Tensor inv_std_;  // [N,1,H,W]
};

class ReLU : public Module {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  std::vector<uint8_t> mask_;
};

class LeakyReLU : public Module {
 public:
  explicit LeakyReLU(float slope) : slope_(slope) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  float slope_;
  std::vector<uint8_t> mask_;
};

class GELU : public Module {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  Tensor x_;
};

class Sigmoid : public Module {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  Tensor y_;
};

// Max-feature-map: splits channels in half, takes the elementwise max.
// Ties pick the first half, so the pass is deterministic.
class MaxFeatureMap : public Module {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  std::vector<uint8_t> winner_;
  std::vector<int> in_shape_;
};

class MaxPool2d : public Module {
 public:
  explicit MaxPool2d(int size) : size_(size) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  int size_;
  std::vector<int> argmax_;
  std::vector<int> in_shape_;
};

class UpsampleNearest2x : public Module {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  std::vector<int> in_shape_;
};

class Linear : public Module {
 public:
  Linear(std::string name, int in_features, int out_features, Rng& rng);

  Tensor forward(const Tensor& x);  // [N, in] -> [N, out]
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<Param*>& out) override;

  Param w;  // [out, in]
  Param b;  // [out]
  int in_features, out_features;

 private:
  Tensor x_;
};

class GlobalAvgPool : public Module {
 public:
  Tensor forward(const Tensor& x);  // [N,C,H,W] -> [N,C]
  Tensor backward(const Tensor& gy);

 private:
  std::vector<int> in_shape_;
};

// --- free helpers ---

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels_backward(const Tensor& g, int ca, Tensor& ga, Tensor& gb);
Tensor add(const Tensor& a, const Tensor& b);

// GEMM wrappers over Eigen. All matrices are row-major dense floats.
// C[m,n] = A[m,k] * B[k,n] (+ C if accumulate)
void matmul(const float* a, const float* bmat, float* c, int m, int k, int n,
            bool accumulate = false);
// C[m,n] = A^T[k,m]^T... specifically A is stored [k,m]: C = A^T * B
void matmul_tn(const float* a, const float* bmat, float* c, int m, int k, int n,
               bool accumulate = false);
// C[m,n] = A[m,k] * B^T where B is stored [n,k]
void matmul_nt(const float* a, const float* bmat, float* c, int m, int k, int n,
               bool accumulate = false);

// Row-wise softmax in place: x [rows, cols].
void softmax_rows(float* x, int rows, int cols);
// gx from cached probabilities: gx_i = p_i * (g_i - dot(g, p)) per row.
void softmax_rows_backward(const float* p, const float* gy, float* gx, int rows, int cols);

struct Adam {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int64_t t = 0;

  std::vector<Param*> params;
  std::vector<Tensor> m, v;

  void init(const std::vector<Param*>& ps);
  void zero_grad();
  void step(float lr);
};

// Cosine decay from lr0 to lr0*floor_frac across total steps.
float cosine_lr(float lr0, int64_t step, int64_t total_steps, float floor_frac = 0.1f);

}  // namespace recolor::nn

#endif  // RECOLOR_NN_HPP
