#ifndef RECOLOR_QUANTIZE_HPP
#define RECOLOR_QUANTIZE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "recolor/tensor.hpp"

namespace recolor {

// Palette-constrained reconstruction of an image from per-pixel class
// activations. Layouts: activations a[k*hw + i] (K planes of hw pixels),
// palette p[k*3 + c], image q[c*hw + i] (3 planes).
//
// Train path: per-pixel softmax over K of a/tau, image = convex combination
// of palette rows. Test path: per-pixel argmax (ties -> lowest index),
// image = one-hot times palette.

template <typename T>
void quantize_train_raw(const T* a, const T* p, int k, int64_t hw, T tau, T* q,
                        T* softmax_cache) {
  if (tau <= T(0)) throw std::invalid_argument("quantize_train: temperature must be positive");
  std::vector<T> s(static_cast<size_t>(k));
  T inv_tau = T(1) / tau;
  for (int64_t i = 0; i < hw; ++i) {
    T m = a[i];
    for (int j = 1; j < k; ++j) m = std::max(m, a[static_cast<int64_t>(j) * hw + i]);
    T z = T(0);
    for (int j = 0; j < k; ++j) {
      T e = std::exp((a[static_cast<int64_t>(j) * hw + i] - m) * inv_tau);
      s[static_cast<size_t>(j)] = e;
      z += e;
    }
    T inv_z = T(1) / z;
    for (int c = 0; c < 3; ++c) q[static_cast<int64_t>(c) * hw + i] = T(0);
    for (int j = 0; j < k; ++j) {
      T w = s[static_cast<size_t>(j)] * inv_z;
      if (softmax_cache) softmax_cache[static_cast<int64_t>(j) * hw + i] = w;
      for (int c = 0; c < 3; ++c)
        q[static_cast<int64_t>(c) * hw + i] += w * p[static_cast<int64_t>(j) * 3 + c];
    }
  }
}

// Backward of the train path. softmax s must be the cached forward weights.
// With u_j = sum_c gq_c p_jc:
//   ga_j = (1/tau) * s_j * (u_j - sum_k s_k u_k)
//   gp_jc += sum_pixels s_j * gq_c
// ga is overwritten; gp is accumulated.
template <typename T>
void quantize_train_backward_raw(const T* s, const T* p, const T* gq, int k, int64_t hw,
                                 T tau, T* ga, T* gp) {
  T inv_tau = T(1) / tau;
  std::vector<T> u(static_cast<size_t>(k));
  for (int64_t i = 0; i < hw; ++i) {
    T dot = T(0);
    for (int j = 0; j < k; ++j) {
      T uj = T(0);
      for (int c = 0; c < 3; ++c)
        uj += gq[static_cast<int64_t>(c) * hw + i] * p[static_cast<int64_t>(j) * 3 + c];
      u[static_cast<size_t>(j)] = uj;
      dot += s[static_cast<int64_t>(j) * hw + i] * uj;
    }
    for (int j = 0; j < k; ++j) {
      T sj = s[static_cast<int64_t>(j) * hw + i];
      ga[static_cast<int64_t>(j) * hw + i] = inv_tau * sj * (u[static_cast<size_t>(j)] - dot);
      for (int c = 0; c < 3; ++c)
        gp[static_cast<int64_t>(j) * 3 + c] += sj * gq[static_cast<int64_t>(c) * hw + i];
    }
  }
}

// Per-pixel argmax with lowest-index tie breaking.
template <typename T>
void argmax_map_raw(const T* a, int k, int64_t hw, int* idx) {
  for (int64_t i = 0; i < hw; ++i) {
    int best = 0;
    T bv = a[i];
    for (int j = 1; j < k; ++j) {
      T v = a[static_cast<int64_t>(j) * hw + i];
      if (v > bv) {
        bv = v;
        best = j;
      }
    }
    idx[i] = best;
  }
}

template <typename T>
void quantize_test_raw(const T* a, const T* p, int k, int64_t hw, T* q) {
  std::vector<int> idx(static_cast<size_t>(hw));
  argmax_map_raw(a, k, hw, idx.data());
  for (int64_t i = 0; i < hw; ++i) {
    int m = idx[static_cast<size_t>(i)];
    for (int c = 0; c < 3; ++c)
      q[static_cast<int64_t>(c) * hw + i] = p[static_cast<int64_t>(m) * 3 + c];
  }
}

// Same result via an explicit one-hot encoding multiplied by the palette
// matrix; kept as the literal matrix-product formulation.
template <typename T>
void quantize_test_onehot_matmul_raw(const T* a, const T* p, int k, int64_t hw, T* q) {
  std::vector<int> idx(static_cast<size_t>(hw));
  argmax_map_raw(a, k, hw, idx.data());
  std::vector<T> onehot(static_cast<size_t>(k));
  for (int64_t i = 0; i < hw; ++i) {
    std::fill(onehot.begin(), onehot.end(), T(0));
    onehot[static_cast<size_t>(idx[static_cast<size_t>(i)])] = T(1);
    for (int c = 0; c < 3; ++c) {
      T acc = T(0);
      for (int j = 0; j < k; ++j)
        acc += onehot[static_cast<size_t>(j)] * p[static_cast<int64_t>(j) * 3 + c];
      q[static_cast<int64_t>(c) * hw + i] = acc;
    }
  }
}

// --- Tensor wrappers (float path used by the network) ---

inline void check_quantize_shapes(const Tensor& a, const Tensor& p) {
  if (a.ndim() != 3) throw std::invalid_argument("quantize: activations must be KxHxW");
  if (p.ndim() != 2 || p.dim(1) != 3)
    throw std::invalid_argument("quantize: palette must be Kx3");
  if (a.dim(0) != p.dim(0))
    throw std::invalid_argument("quantize: activation K " + std::to_string(a.dim(0)) +
                                " != palette K " + std::to_string(p.dim(0)));
}

inline Tensor quantize_train(const Tensor& a, const Tensor& p, float tau,
                             Tensor* softmax_cache = nullptr) {
  check_quantize_shapes(a, p);
  int k = a.dim(0);
  int64_t hw = static_cast<int64_t>(a.dim(1)) * a.dim(2);
  Tensor q({3, a.dim(1), a.dim(2)});
  if (softmax_cache) *softmax_cache = Tensor(a.shape());
  quantize_train_raw<float>(a.data(), p.data(), k, hw, tau, q.data(),
                            softmax_cache ? softmax_cache->data() : nullptr);
  return q;
}

inline Tensor quantize_test(const Tensor& a, const Tensor& p) {
  check_quantize_shapes(a, p);
  int64_t hw = static_cast<int64_t>(a.dim(1)) * a.dim(2);
  Tensor q({3, a.dim(1), a.dim(2)});
  quantize_test_raw<float>(a.data(), p.data(), a.dim(0), hw, q.data());
  return q;
}

// Number of distinct RGB triples, exact float equality.
inline int count_unique_colors(const Tensor& q) {
  if (q.ndim() != 3 || q.dim(0) != 3)
    throw std::invalid_argument("count_unique_colors: expected 3xHxW image");
  int64_t hw = static_cast<int64_t>(q.dim(1)) * q.dim(2);
  std::set<std::array<float, 3>> colors;
  for (int64_t i = 0; i < hw; ++i) {
    colors.insert({q[i], q[hw + i], q[2 * hw + i]});
  }
  return static_cast<int>(colors.size());
}

}  // namespace recolor

#endif  // RECOLOR_QUANTIZE_HPP
