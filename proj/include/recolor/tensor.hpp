#ifndef RECOLOR_TENSOR_HPP
#define RECOLOR_TENSOR_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace recolor {

// Dense row-major float tensor, up to 4 dimensions (NCHW for images).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0f);
  }
  Tensor(std::vector<int> shape, float value) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), value);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  const std::vector<int>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  float& at(int a, int b) { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
  float at(int a, int b) const { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
  float& at(int a, int b, int c) {
    return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  float at(int a, int b, int c) const {
    return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  float& at(int a, int b, int c, int d) {
    return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  float at(int a, int b, int c, int d) const {
    return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0f); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const;  // "(3, 256, 256)"

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

void check_shape(const Tensor& t, const std::vector<int>& expected, const char* what);
bool all_finite(const Tensor& t);

// Deterministic RNG. Every source of randomness in the project goes through
// an explicitly seeded Rng; std::random_device is never used.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  std::mt19937_64& gen() { return gen_; }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }
  float uniformf(float lo, float hi) { return static_cast<float>(uniform(lo, hi)); }
  double normal(double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(gen_);
  }
  // Inclusive bounds.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    std::uniform_int_distribution<int64_t> d(lo, hi);
    return d(gen_);
  }
  // Independent child stream; splitmix64 over (state, tag).
  Rng fork(uint64_t tag) {
    uint64_t z = gen_() + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  void fill_uniform(Tensor& t, float lo, float hi) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniformf(lo, hi);
  }
  void fill_normal(Tensor& t, float mean, float sd) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(normal(mean, sd));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace recolor

#endif  // RECOLOR_TENSOR_HPP
