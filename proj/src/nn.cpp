#include "recolor/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace recolor::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

int out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col is [C*k*k, OH*OW], column-major; one column per output pixel.
void im2col(const float* x, int c_in, int h, int w, int k, int stride, int pad,
            int oh, int ow, float* col) {
  const int ckk = c_in * k * k;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      float* dst = col + (static_cast<int64_t>(oy) * ow + ox) * ckk;
      int iy0 = oy * stride - pad;
      int ix0 = ox * stride - pad;
      for (int c = 0; c < c_in; ++c) {
        const float* plane = x + static_cast<int64_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
          int iy = iy0 + ky;
          for (int kx = 0; kx < k; ++kx) {
            int ix = ix0 + kx;
            *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                         ? plane[static_cast<int64_t>(iy) * w + ix]
                         : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, int c_in, int h, int w, int k, int stride, int pad,
                int oh, int ow, float* gx) {
  const int ckk = c_in * k * k;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const float* src = col + (static_cast<int64_t>(oy) * ow + ox) * ckk;
      int iy0 = oy * stride - pad;
      int ix0 = ox * stride - pad;
      for (int c = 0; c < c_in; ++c) {
        float* plane = gx + static_cast<int64_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
          int iy = iy0 + ky;
          for (int kx = 0; kx < k; ++kx) {
            int ix = ix0 + kx;
            float v = *src++;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
              plane[static_cast<int64_t>(iy) * w + ix] += v;
          }
        }
      }
    }
  }
}

}  // namespace

void he_uniform_init(Tensor& w, int fan_in, Rng& rng) {
  float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  rng.fill_uniform(w, -bound, bound);
}

void matmul(const float* a, const float* bmat, float* c, int m, int k, int n, bool accumulate) {
  CMapRow A(a, m, k), B(bmat, k, n);
  MapRow C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

void matmul_tn(const float* a, const float* bmat, float* c, int m, int k, int n,
               bool accumulate) {
  CMapRow A(a, k, m), B(bmat, k, n);
  MapRow C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

void matmul_nt(const float* a, const float* bmat, float* c, int m, int k, int n,
               bool accumulate) {
  CMapRow A(a, m, k), B(bmat, n, k);
  MapRow C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

void softmax_rows(float* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    float* p = x + static_cast<int64_t>(r) * cols;
    float m = p[0];
    for (int i = 1; i < cols; ++i) m = std::max(m, p[i]);
    float z = 0.0f;
    for (int i = 0; i < cols; ++i) {
      p[i] = std::exp(p[i] - m);
      z += p[i];
    }
    float inv = 1.0f / z;
    for (int i = 0; i < cols; ++i) p[i] *= inv;
  }
}

void softmax_rows_backward(const float* p, const float* gy, float* gx, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const float* pr = p + static_cast<int64_t>(r) * cols;
    const float* gr = gy + static_cast<int64_t>(r) * cols;
    float* xr = gx + static_cast<int64_t>(r) * cols;
    float dot = 0.0f;
    for (int i = 0; i < cols; ++i) dot += pr[i] * gr[i];
    for (int i = 0; i < cols; ++i) xr[i] = pr[i] * (gr[i] - dot);
  }
}

// --- Conv2d ---

Conv2d::Conv2d(std::string name, int in_ch_, int out_ch_, int ksize_, int stride_, int pad_,
               bool bias, Rng& rng)
    : in_ch(in_ch_), out_ch(out_ch_), ksize(ksize_), stride(stride_), pad(pad_),
      has_bias(bias) {
  w.name = name + ".w";
  w.init_shape({out_ch, in_ch * ksize * ksize});
  he_uniform_init(w.value, in_ch * ksize * ksize, rng);
  b.name = name + ".b";
  b.init_shape({out_ch});
}

Tensor Conv2d::forward(const Tensor& x) {
  require(x.ndim() == 4 && x.dim(1) == in_ch, "Conv2d: bad input shape");
  x_ = x;
  int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  int oh = out_size(h, ksize, stride, pad), ow = out_size(wd, ksize, stride, pad);
  require(oh > 0 && ow > 0, "Conv2d: output collapsed to zero");
  Tensor y({n, out_ch, oh, ow});
  int ckk = in_ch * ksize * ksize;
  int64_t ohw = static_cast<int64_t>(oh) * ow;
  std::vector<float> col(static_cast<size_t>(ckk) * ohw);
  for (int i = 0; i < n; ++i) {
    const float* xin = x.data() + static_cast<int64_t>(i) * in_ch * h * wd;
    float* yout = y.data() + static_cast<int64_t>(i) * out_ch * ohw;
    im2col(xin, in_ch, h, wd, ksize, stride, pad, oh, ow, col.data());
    // col buffer is [ohw, ckk] row-major == [ckk, ohw] col-major; use B^T form.
    matmul_nt(w.value.data(), col.data(), yout, out_ch, ckk, static_cast<int>(ohw));
    if (has_bias) {
      for (int c = 0; c < out_ch; ++c) {
        float bc = b.value[c];
        float* row = yout + static_cast<int64_t>(c) * ohw;
        for (int64_t j = 0; j < ohw; ++j) row[j] += bc;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  int n = x_.dim(0), h = x_.dim(2), wd = x_.dim(3);
  int oh = gy.dim(2), ow = gy.dim(3);
  int ckk = in_ch * ksize * ksize;
  int64_t ohw = static_cast<int64_t>(oh) * ow;
  Tensor gx(x_.shape());
  std::vector<float> col(static_cast<size_t>(ckk) * ohw);
  std::vector<float> gcol(static_cast<size_t>(ckk) * ohw);
  for (int i = 0; i < n; ++i) {
    const float* xin = x_.data() + static_cast<int64_t>(i) * in_ch * h * wd;
    const float* g = gy.data() + static_cast<int64_t>(i) * out_ch * ohw;
    im2col(xin, in_ch, h, wd, ksize, stride, pad, oh, ow, col.data());
    // gw[out, ckk] += gy[out, ohw] * col[ohw, ckk]
    matmul(g, col.data(), w.grad.data(), out_ch, static_cast<int>(ohw), ckk, true);
    if (has_bias) {
      for (int c = 0; c < out_ch; ++c) {
        const float* row = g + static_cast<int64_t>(c) * ohw;
        float acc = 0.0f;
        for (int64_t j = 0; j < ohw; ++j) acc += row[j];
        b.grad[c] += acc;
      }
    }
    // gcol[ohw, ckk] = gy^T[ohw, out] * w[out, ckk]
    matmul_tn(g, w.value.data(), gcol.data(), static_cast<int>(ohw), out_ch, ckk);
    col2im_add(gcol.data(), in_ch, h, wd, ksize, stride, pad, oh, ow,
               gx.data() + static_cast<int64_t>(i) * in_ch * h * wd);
  }
  return gx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&w);
  if (has_bias) out.push_back(&b);
}

// --- DepthwiseConv2d ---

DepthwiseConv2d::DepthwiseConv2d(std::string name, int channels_, int ksize_, int pad_, Rng& rng)
    : channels(channels_), ksize(ksize_), pad(pad_) {
  w.name = name + ".w";
  w.init_shape({channels, ksize * ksize});
  he_uniform_init(w.value, ksize * ksize, rng);
  b.name = name + ".b";
  b.init_shape({channels});
}

Tensor DepthwiseConv2d::forward(const Tensor& x) {
  require(x.ndim() == 4 && x.dim(1) == channels, "DepthwiseConv2d: bad input shape");
  x_ = x;
  int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  int oh = out_size(h, ksize, 1, pad), ow = out_size(wd, ksize, 1, pad);
  Tensor y({n, channels, oh, ow});
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const float* plane = x.data() + (static_cast<int64_t>(i) * channels + c) * h * wd;
      const float* ker = w.value.data() + static_cast<int64_t>(c) * ksize * ksize;
      float* out = y.data() + (static_cast<int64_t>(i) * channels + c) * oh * ow;
      float bc = b.value[c];
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          float acc = bc;
          for (int ky = 0; ky < ksize; ++ky) {
            int iy = oy - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < ksize; ++kx) {
              int ix = ox - pad + kx;
              if (ix < 0 || ix >= wd) continue;
              acc += ker[ky * ksize + kx] * plane[static_cast<int64_t>(iy) * wd + ix];
            }
          }
          out[static_cast<int64_t>(oy) * ow + ox] = acc;
        }
      }
    }
  }
  return y;
}

Tensor DepthwiseConv2d::backward(const Tensor& gy) {
  int n = x_.dim(0), h = x_.dim(2), wd = x_.dim(3);
  int oh = gy.dim(2), ow = gy.dim(3);
  Tensor gx(x_.shape());
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const float* plane = x_.data() + (static_cast<int64_t>(i) * channels + c) * h * wd;
      const float* g = gy.data() + (static_cast<int64_t>(i) * channels + c) * oh * ow;
      const float* ker = w.value.data() + static_cast<int64_t>(c) * ksize * ksize;
      float* gker = w.grad.data() + static_cast<int64_t>(c) * ksize * ksize;
      float* gplane = gx.data() + (static_cast<int64_t>(i) * channels + c) * h * wd;
      float gb = 0.0f;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          float gv = g[static_cast<int64_t>(oy) * ow + ox];
          gb += gv;
          for (int ky = 0; ky < ksize; ++ky) {
            int iy = oy - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < ksize; ++kx) {
              int ix = ox - pad + kx;
              if (ix < 0 || ix >= wd) continue;
              gker[ky * ksize + kx] += gv * plane[static_cast<int64_t>(iy) * wd + ix];
              gplane[static_cast<int64_t>(iy) * wd + ix] += gv * ker[ky * ksize + kx];
            }
          }
        }
      }
      b.grad[c] += gb;
    }
  }
  return gx;
}

void DepthwiseConv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

// --- BatchNorm2d ---

BatchNorm2d::BatchNorm2d(std::string name, int channels_) : channels(channels_) {
  gamma.name = name + ".gamma";
  gamma.init_shape({channels});
  gamma.value.fill(1.0f);
  beta.name = name + ".beta";
  beta.init_shape({channels});
  running_mean.name = name + ".running_mean";
  running_mean.init_shape({channels});
  running_var.name = name + ".running_var";
  running_var.init_shape({channels});
  running_var.value.fill(1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  require(x.ndim() == 4 && x.dim(1) == channels, "BatchNorm2d: bad input shape");
  int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  int64_t hw = static_cast<int64_t>(h) * wd;
  int64_t m = static_cast<int64_t>(n) * hw;
  Tensor y(x.shape());
  inv_std_.assign(static_cast<size_t>(channels), 0.0f);
  if (training_) {
    xhat_ = Tensor(x.shape());
    for (int c = 0; c < channels; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* plane = x.data() + (static_cast<int64_t>(i) * channels + c) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          sum += plane[j];
          sq += static_cast<double>(plane[j]) * plane[j];
        }
      }
      double mean = sum / static_cast<double>(m);
      double var = sq / static_cast<double>(m) - mean * mean;
      var = std::max(var, 0.0);
      float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
      inv_std_[static_cast<size_t>(c)] = inv;
      float meanf = static_cast<float>(mean);
      float g = gamma.value[c], bt = beta.value[c];
      for (int i = 0; i < n; ++i) {
        const float* plane = x.data() + (static_cast<int64_t>(i) * channels + c) * hw;
        float* xh = xhat_.data() + (static_cast<int64_t>(i) * channels + c) * hw;
        float* yo = y.data() + (static_cast<int64_t>(i) * channels + c) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          float v = (plane[j] - meanf) * inv;
          xh[j] = v;
          yo[j] = g * v + bt;
        }
      }
      double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_mean.value[c] =
          (1.0f - momentum) * running_mean.value[c] + momentum * meanf;
      running_var.value[c] =
          (1.0f - momentum) * running_var.value[c] + momentum * static_cast<float>(unbiased);
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      float inv = 1.0f / std::sqrt(running_var.value[c] + eps);
      inv_std_[static_cast<size_t>(c)] = inv;
      float mean = running_mean.value[c];
      float g = gamma.value[c], bt = beta.value[c];
      for (int i = 0; i < n; ++i) {
        const float* plane = x.data() + (static_cast<int64_t>(i) * channels + c) * hw;
        float* yo = y.data() + (static_cast<int64_t>(i) * channels + c) * hw;
        for (int64_t j = 0; j < hw; ++j) yo[j] = g * (plane[j] - mean) * inv + bt;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
  require(training_, "BatchNorm2d: backward in eval mode");
  int n = gy.dim(0), h = gy.dim(2), wd = gy.dim(3);
  int64_t hw = static_cast<int64_t>(h) * wd;
  int64_t m = static_cast<int64_t>(n) * hw;
  Tensor gx(gy.shape());
  for (int c = 0; c < channels; ++c) {
    double gsum = 0.0, gxhat = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* g = gy.data() + (static_cast<int64_t>(i) * channels + c) * hw;
      const float* xh = xhat_.data() + (static_cast<int64_t>(i) * channels + c) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        gsum += g[j];
        gxhat += static_cast<double>(g[j]) * xh[j];
      }
    }
    beta.grad[c] += static_cast<float>(gsum);
    gamma.grad[c] += static_cast<float>(gxhat);
    float scale = gamma.value[c] * inv_std_[static_cast<size_t>(c)] / static_cast<float>(m);
    float gs = static_cast<float>(gsum), gxh = static_cast<float>(gxhat);
    for (int i = 0; i < n; ++i) {
      const float* g = gy.data() + (static_cast<int64_t>(i) * channels + c) * hw;
      const float* xh = xhat_.data() + (static_cast<int64_t>(i) * channels + c) * hw;
      float* gout = gx.data() + (static_cast<int64_t>(i) * channels + c) * hw;
      for (int64_t j = 0; j < hw; ++j)
        gout[j] = scale * (static_cast<float>(m) * g[j] - gs - xh[j] * gxh);
    }
  }
  return gx;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm2d::collect_buffers(std::vector<Param*>& out) {
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// --- InstanceStandardize ---

Tensor InstanceStandardize::forward(const Tensor& x) {
  require(x.ndim() == 4, "InstanceStandardize: bad input shape");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  int64_t hw = static_cast<int64_t>(h) * wd;
  xhat_ = Tensor(x.shape());
  inv_std_.assign(static_cast<size_t>(n) * c, 0.0f);
  for (int i = 0; i < n * c; ++i) {
    const float* plane = x.data() + static_cast<int64_t>(i) * hw;
    double sum = 0.0, sq = 0.0;
    for (int64_t j = 0; j < hw; ++j) {
      sum += plane[j];
      sq += static_cast<double>(plane[j]) * plane[j];
    }
    double mean = sum / static_cast<double>(hw);
    double var = std::max(sq / static_cast<double>(hw) - mean * mean, 0.0);
    float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std_[static_cast<size_t>(i)] = inv;
    float* xh = xhat_.data() + static_cast<int64_t>(i) * hw;
    float meanf = static_cast<float>(mean);
    for (int64_t j = 0; j < hw; ++j) xh[j] = (plane[j] - meanf) * inv;
  }
  return xhat_;
}

Tensor InstanceStandardize::backward(const Tensor& gy) {
  int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2), wd = gy.dim(3);
  int64_t hw = static_cast<int64_t>(h) * wd;
  Tensor gx(gy.shape());
  for (int i = 0; i < n * c; ++i) {
    const float* g = gy.data() + static_cast<int64_t>(i) * hw;
    const float* xh = xhat_.data() + static_cast<int64_t>(i) * hw;
    float* go = gx.data() + static_cast<int64_t>(i) * hw;
    double gmean = 0.0, gdot = 0.0;
    for (int64_t j = 0; j < hw; ++j) {
      gmean += g[j];
      gdot += static_cast<double>(g[j]) * xh[j];
    }
    float gm = static_cast<float>(gmean / static_cast<double>(hw));
    float gd = static_cast<float>(gdot / static_cast<double>(hw));
    float inv = inv_std_[static_cast<size_t>(i)];
    for (int64_t j = 0; j < hw; ++j) go[j] = inv * (g[j] - gm - xh[j] * gd);
  }
  return gx;
}

// --- LayerNormChannel ---

LayerNormChannel::LayerNormChannel(std::string name, int channels_) : channels(channels_) {
  gamma.name = name + ".gamma";
  gamma.init_shape({channels});
  gamma.value.fill(1.0f);
  beta.name = name + ".beta";
  beta.init_shape({channels});
}

Tensor LayerNormChannel::forward(const Tensor& x) {
  require(x.ndim() == 4 && x.dim(1) == channels, "LayerNormChannel: bad input shape");
  int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  int64_t hw = static_cast<int64_t>(h) * wd;
  xhat_ = Tensor(x.shape());
  inv_std_ = Tensor({n, 1, h, wd});
  Tensor y(x.shape());
  for (int i = 0; i < n; ++i) {
    const float* xin = x.data() + static_cast<int64_t>(i) * channels * hw;
    float* xh = xhat_.data() + static_cast<int64_t>(i) * channels * hw;
    float* yo = y.data() + static_cast<int64_t>(i) * channels * hw;
    float* istd = inv_std_.data() + static_cast<int64_t>(i) * hw;
    for (int64_t j = 0; j < hw; ++j) {
      double sum = 0.0, sq = 0.0;
      for (int c = 0; c < channels; ++c) {
        float v = xin[static_cast<int64_t>(c) * hw + j];
        sum += v;
        sq += static_cast<double>(v) * v;
      }
      double mean = sum / channels;
      double var = std::max(sq / channels - mean * mean, 0.0);
      float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
      istd[j] = inv;
      for (int c = 0; c < channels; ++c) {
        float v = (xin[static_cast<int64_t>(c) * hw + j] - static_cast<float>(mean)) * inv;
        xh[static_cast<int64_t>(c) * hw + j] = v;
        yo[static_cast<int64_t>(c) * hw + j] = gamma.value[c] * v + beta.value[c];
      }
    }
  }
  return y;
}

Tensor LayerNormChannel::backward(const Tensor& gy) {
  int n = gy.dim(0), h = gy.dim(2), wd = gy.dim(3);
  int64_t hw = static_cast<int64_t>(h) * wd;
  Tensor gx(gy.shape());
  for (int i = 0; i < n; ++i) {
    const float* g = gy.data() + static_cast<int64_t>(i) * channels * hw;
    const float* xh = xhat_.data() + static_cast<int64_t>(i) * channels * hw;
    const float* istd = inv_std_.data() + static_cast<int64_t>(i) * hw;
    float* go = gx.data() + static_cast<int64_t>(i) * channels * hw;
    for (int64_t j = 0; j < hw; ++j) {
      float gmean = 0.0f, gdot = 0.0f;
      for (int c = 0; c < channels; ++c) {
        float gg = g[static_cast<int64_t>(c) * hw + j] * gamma.value[c];
        gmean += gg;
        gdot += gg * xh[static_cast<int64_t>(c) * hw + j];
        gamma.grad[c] += g[static_cast<int64_t>(c) * hw + j] * xh[static_cast<int64_t>(c) * hw + j];
        beta.grad[c] += g[static_cast<int64_t>(c) * hw + j];
      }
      gmean /= static_cast<float>(channels);
      gdot /= static_cast<float>(channels);
      for (int c = 0; c < channels; ++c) {
        float gg = g[static_cast<int64_t>(c) * hw + j] * gamma.value[c];
        go[static_cast<int64_t>(c) * hw + j] =
            istd[j] * (gg - gmean - xh[static_cast<int64_t>(c) * hw + j] * gdot);
      }
    }
  }
  return gx;
}

void LayerNormChannel::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// --- activations ---

Tensor ReLU::forward(const Tensor& x) {
  Tensor y(x.shape());
  mask_.assign(static_cast<size_t>(x.numel()), 0);
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (x[i] > 0.0f) {
      y[i] = x[i];
      mask_[static_cast<size_t>(i)] = 1;
    }
  }
  return y;
}

Tensor ReLU::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i)
    gx[i] = mask_[static_cast<size_t>(i)] ? gy[i] : 0.0f;
  return gx;
}

Tensor LeakyReLU::forward(const Tensor& x) {
  Tensor y(x.shape());
  mask_.assign(static_cast<size_t>(x.numel()), 0);
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (x[i] > 0.0f) {
      y[i] = x[i];
      mask_[static_cast<size_t>(i)] = 1;
    } else {
      y[i] = slope_ * x[i];
    }
  }
  return y;
}

Tensor LeakyReLU::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i)
    gx[i] = mask_[static_cast<size_t>(i)] ? gy[i] : slope_ * gy[i];
  return gx;
}

Tensor GELU::forward(const Tensor& x) {
  x_ = x;
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    float v = x[i];
    y[i] = 0.5f * v * (1.0f + std::erf(v * static_cast<float>(std::numbers::sqrt2) / 2.0f));
  }
  return y;
}

Tensor GELU::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  const float inv_sqrt2 = static_cast<float>(std::numbers::sqrt2) / 2.0f;
  const float inv_sqrt2pi = 1.0f / std::sqrt(2.0f * static_cast<float>(std::numbers::pi));
  for (int64_t i = 0; i < gy.numel(); ++i) {
    float v = x_[i];
    float cdf = 0.5f * (1.0f + std::erf(v * inv_sqrt2));
    float pdf = inv_sqrt2pi * std::exp(-0.5f * v * v);
    gx[i] = gy[i] * (cdf + v * pdf);
  }
  return gx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  y_ = Tensor(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y_[i] = 1.0f / (1.0f + std::exp(-x[i]));
  return y_;
}

Tensor Sigmoid::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * y_[i] * (1.0f - y_[i]);
  return gx;
}

Tensor MaxFeatureMap::forward(const Tensor& x) {
  require(x.ndim() == 4 && x.dim(1) % 2 == 0, "MaxFeatureMap: channel count must be even");
  in_shape_ = x.shape();
  int n = x.dim(0), c = x.dim(1) / 2, h = x.dim(2), wd = x.dim(3);
  int64_t hw = static_cast<int64_t>(h) * wd;
  Tensor y({n, c, h, wd});
  winner_.assign(static_cast<size_t>(y.numel()), 0);
  for (int i = 0; i < n; ++i) {
    const float* lo = x.data() + static_cast<int64_t>(i) * 2 * c * hw;
    const float* hi = lo + static_cast<int64_t>(c) * hw;
    float* yo = y.data() + static_cast<int64_t>(i) * c * hw;
    int64_t base = static_cast<int64_t>(i) * c * hw;
    for (int64_t j = 0; j < c * hw; ++j) {
      if (lo[j] >= hi[j]) {
        yo[j] = lo[j];
      } else {
        yo[j] = hi[j];
        winner_[static_cast<size_t>(base + j)] = 1;
      }
    }
  }
  return y;
}

Tensor MaxFeatureMap::backward(const Tensor& gy) {
  Tensor gx(in_shape_);
  int n = in_shape_[0], c = in_shape_[1] / 2;
  int64_t hw = static_cast<int64_t>(in_shape_[2]) * in_shape_[3];
  for (int i = 0; i < n; ++i) {
    float* lo = gx.data() + static_cast<int64_t>(i) * 2 * c * hw;
    float* hi = lo + static_cast<int64_t>(c) * hw;
    const float* g = gy.data() + static_cast<int64_t>(i) * c * hw;
    int64_t base = static_cast<int64_t>(i) * c * hw;
    for (int64_t j = 0; j < c * hw; ++j) {
      if (winner_[static_cast<size_t>(base + j)])
        hi[j] = g[j];
      else
        lo[j] = g[j];
    }
  }
  return gx;
}

Tensor MaxPool2d::forward(const Tensor& x) {
  require(x.ndim() == 4, "MaxPool2d: bad input shape");
  require(x.dim(2) % size_ == 0 && x.dim(3) % size_ == 0,
          "MaxPool2d: spatial dims must be divisible by pool size");
  in_shape_ = x.shape();
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  int oh = h / size_, ow = wd / size_;
  Tensor y({n, c, oh, ow});
  argmax_.assign(static_cast<size_t>(y.numel()), 0);
  int64_t oi = 0;
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float* plane = x.data() + (static_cast<int64_t>(i) * c + ch) * h * wd;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          int iy0 = oy * size_, ix0 = ox * size_;
          float best = plane[static_cast<int64_t>(iy0) * wd + ix0];
          int bidx = iy0 * wd + ix0;
          for (int dy = 0; dy < size_; ++dy) {
            for (int dx = 0; dx < size_; ++dx) {
              int idx = (iy0 + dy) * wd + (ix0 + dx);
              if (plane[idx] > best) {
                best = plane[idx];
                bidx = idx;
              }
            }
          }
          y[oi] = best;
          argmax_[static_cast<size_t>(oi)] = bidx;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& gy) {
  Tensor gx(in_shape_);
  int n = in_shape_[0], c = in_shape_[1];
  int64_t hw = static_cast<int64_t>(in_shape_[2]) * in_shape_[3];
  int oh = gy.dim(2), ow = gy.dim(3);
  int64_t oi = 0;
  for (int i = 0; i < n * c; ++i) {
    float* plane = gx.data() + static_cast<int64_t>(i) * hw;
    for (int64_t j = 0; j < static_cast<int64_t>(oh) * ow; ++j, ++oi)
      plane[argmax_[static_cast<size_t>(oi)]] += gy[oi];
  }
  return gx;
}

Tensor UpsampleNearest2x::forward(const Tensor& x) {
  require(x.ndim() == 4, "UpsampleNearest2x: bad input shape");
  in_shape_ = x.shape();
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  Tensor y({n, c, h * 2, wd * 2});
  for (int i = 0; i < n * c; ++i) {
    const float* src = x.data() + static_cast<int64_t>(i) * h * wd;
    float* dst = y.data() + static_cast<int64_t>(i) * h * wd * 4;
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < wd; ++xx) {
        float v = src[static_cast<int64_t>(yy) * wd + xx];
        int64_t o = (static_cast<int64_t>(yy) * 2) * (wd * 2) + xx * 2;
        dst[o] = v;
        dst[o + 1] = v;
        dst[o + wd * 2] = v;
        dst[o + wd * 2 + 1] = v;
      }
    }
  }
  return y;
}

Tensor UpsampleNearest2x::backward(const Tensor& gy) {
  Tensor gx(in_shape_);
  int h = in_shape_[2], wd = in_shape_[3];
  int n = in_shape_[0], c = in_shape_[1];
  for (int i = 0; i < n * c; ++i) {
    float* dst = gx.data() + static_cast<int64_t>(i) * h * wd;
    const float* src = gy.data() + static_cast<int64_t>(i) * h * wd * 4;
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < wd; ++xx) {
        int64_t o = (static_cast<int64_t>(yy) * 2) * (wd * 2) + xx * 2;
        dst[static_cast<int64_t>(yy) * wd + xx] =
            src[o] + src[o + 1] + src[o + wd * 2] + src[o + wd * 2 + 1];
      }
    }
  }
  return gx;
}

// --- Linear ---

Linear::Linear(std::string name, int in_features_, int out_features_, Rng& rng)
    : in_features(in_features_), out_features(out_features_) {
  w.name = name + ".w";
  w.init_shape({out_features, in_features});
  he_uniform_init(w.value, in_features, rng);
  b.name = name + ".b";
  b.init_shape({out_features});
}

Tensor Linear::forward(const Tensor& x) {
  require(x.ndim() == 2 && x.dim(1) == in_features, "Linear: bad input shape");
  x_ = x;
  int n = x.dim(0);
  Tensor y({n, out_features});
  matmul_nt(x.data(), w.value.data(), y.data(), n, in_features, out_features);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_features; ++j) y.at(i, j) += b.value[j];
  return y;
}

Tensor Linear::backward(const Tensor& gy) {
  int n = x_.dim(0);
  // gw[out, in] += gy^T[out, n] * x[n, in]
  matmul_tn(gy.data(), x_.data(), w.grad.data(), out_features, n, in_features, true);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_features; ++j) b.grad[j] += gy.at(i, j);
  Tensor gx({n, in_features});
  matmul(gy.data(), w.value.data(), gx.data(), n, out_features, in_features);
  return gx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

// --- GlobalAvgPool ---

Tensor GlobalAvgPool::forward(const Tensor& x) {
  require(x.ndim() == 4, "GlobalAvgPool: bad input shape");
  in_shape_ = x.shape();
  int n = x.dim(0), c = x.dim(1);
  int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor y({n, c});
  for (int i = 0; i < n * c; ++i) {
    const float* plane = x.data() + static_cast<int64_t>(i) * hw;
    double acc = 0.0;
    for (int64_t j = 0; j < hw; ++j) acc += plane[j];
    y[i] = static_cast<float>(acc / static_cast<double>(hw));
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy) {
  Tensor gx(in_shape_);
  int n = in_shape_[0], c = in_shape_[1];
  int64_t hw = static_cast<int64_t>(in_shape_[2]) * in_shape_[3];
  float inv = 1.0f / static_cast<float>(hw);
  for (int i = 0; i < n * c; ++i) {
    float* plane = gx.data() + static_cast<int64_t>(i) * hw;
    float g = gy[i] * inv;
    for (int64_t j = 0; j < hw; ++j) plane[j] = g;
  }
  return gx;
}

// --- helpers ---

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 4 || b.ndim() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channels: incompatible shapes");
  int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  int64_t hw = static_cast<int64_t>(h) * w;
  Tensor y({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data() + static_cast<int64_t>(i) * ca * hw, ca * hw,
                y.data() + static_cast<int64_t>(i) * (ca + cb) * hw);
    std::copy_n(b.data() + static_cast<int64_t>(i) * cb * hw, cb * hw,
                y.data() + static_cast<int64_t>(i) * (ca + cb) * hw + ca * hw);
  }
  return y;
}

void split_channels_backward(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
  int n = g.dim(0), c = g.dim(1), h = g.dim(2), w = g.dim(3);
  int cb = c - ca;
  int64_t hw = static_cast<int64_t>(h) * w;
  ga = Tensor({n, ca, h, w});
  gb = Tensor({n, cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(g.data() + static_cast<int64_t>(i) * c * hw, ca * hw,
                ga.data() + static_cast<int64_t>(i) * ca * hw);
    std::copy_n(g.data() + static_cast<int64_t>(i) * c * hw + ca * hw, cb * hw,
                gb.data() + static_cast<int64_t>(i) * cb * hw);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  Tensor y(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

// --- Adam ---

void Adam::init(const std::vector<Param*>& ps) {
  params = ps;
  m.clear();
  v.clear();
  for (Param* p : params) {
    m.emplace_back(p->value.shape());
    v.emplace_back(p->value.shape());
  }
  t = 0;
}

void Adam::zero_grad() {
  for (Param* p : params) p->grad.zero();
}

void Adam::step(float lr) {
  ++t;
  float bc1 = 1.0f - std::pow(beta1, static_cast<float>(t));
  float bc2 = 1.0f - std::pow(beta2, static_cast<float>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& val = params[i]->value;
    Tensor& g = params[i]->grad;
    Tensor& mi = m[i];
    Tensor& vi = v[i];
    for (int64_t j = 0; j < val.numel(); ++j) {
      mi[j] = beta1 * mi[j] + (1.0f - beta1) * g[j];
      vi[j] = beta2 * vi[j] + (1.0f - beta2) * g[j] * g[j];
      float mhat = mi[j] / bc1;
      float vhat = vi[j] / bc2;
      val[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

float cosine_lr(float lr0, int64_t step, int64_t total_steps, float floor_frac) {
  if (total_steps <= 0) return lr0;
  double s = std::min<double>(static_cast<double>(step), static_cast<double>(total_steps));
  double cos_term = 0.5 * (1.0 + std::cos(std::numbers::pi * s / static_cast<double>(total_steps)));
  double fl = lr0 * floor_frac;
  return static_cast<float>(fl + (lr0 - fl) * cos_term);
}

}  // namespace recolor::nn
