#include "recolor/classifiers.hpp"

#include <cmath>
#include <stdexcept>

#include "recolor/recolor_net.hpp"

namespace recolor {

FusionMode fusion_from_string(const std::string& s) {
  if (s == "only_rec") return FusionMode::only_rec;
  if (s == "add") return FusionMode::add;
  if (s == "sub") return FusionMode::sub;
  throw std::invalid_argument("unknown fusion mode '" + s + "'");
}

const char* fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::only_rec: return "only_rec";
    case FusionMode::add: return "add";
    case FusionMode::sub: return "sub";
  }
  return "?";
}

Tensor fuse(const Tensor& original, const Tensor& recon, FusionMode mode) {
  if (!original.same_shape(recon))
    throw std::invalid_argument("fuse: original " + original.shape_str() + " vs recon " +
                                recon.shape_str());
  Tensor out(original.shape());
  fuse_raw<float>(original.data(), recon.data(), out.numel(), mode, out.data());
  return out;
}

Tensor fuse_backward_recon(const Tensor& g_fused, FusionMode mode) {
  Tensor g(g_fused.shape());
  if (mode == FusionMode::sub) {
    for (int64_t i = 0; i < g.numel(); ++i) g[i] = -g_fused[i];
  } else {
    std::copy_n(g_fused.data(), g_fused.numel(), g.data());
  }
  return g;
}

ClassifierOutput Classifier::score_one(const Tensor& image) {
  Tensor logits = forward(unsqueeze0(image));
  ClassifierOutput out;
  out.logit_bonafide = logits[0];
  out.logit_spoof = logits[1];
  return out;
}

// ---------------------------------------------------------------------------
// LCNN: nine conv layers, every one followed by a max-feature-map.
// ---------------------------------------------------------------------------

namespace {

// MaxFeatureMap expects NCHW; these route [N,C] tensors through a 4-D view.
Tensor as_nchw(const Tensor& t) {
  Tensor out({t.dim(0), t.dim(1), 1, 1});
  std::copy_n(t.data(), t.numel(), out.data());
  return out;
}

Tensor as_nc(const Tensor& t) {
  Tensor out({t.dim(0), t.dim(1)});
  std::copy_n(t.data(), t.numel(), out.data());
  return out;
}

class Lcnn : public Classifier {
 public:
  Lcnn(Rng& rng, int w)
      : conv1_("lcnn.conv1", 3, 2 * w, 5, 1, 2, true, rng),
        conv2a_("lcnn.conv2a", w, 2 * w, 1, 1, 0, true, rng),
        conv2_("lcnn.conv2", w, 3 * w, 3, 1, 1, true, rng),
        bn2_("lcnn.bn2", 3 * w / 2),
        conv3a_("lcnn.conv3a", 3 * w / 2, 3 * w, 1, 1, 0, true, rng),
        conv3_("lcnn.conv3", 3 * w / 2, 4 * w, 3, 1, 1, true, rng),
        bn3_("lcnn.bn3", 2 * w),
        conv4a_("lcnn.conv4a", 2 * w, 4 * w, 1, 1, 0, true, rng),
        conv4_("lcnn.conv4", 2 * w, 3 * w, 3, 1, 1, true, rng),
        bn4_("lcnn.bn4", 3 * w / 2),
        conv5a_("lcnn.conv5a", 3 * w / 2, 3 * w, 1, 1, 0, true, rng),
        conv5_("lcnn.conv5", 3 * w / 2, 3 * w, 3, 1, 1, true, rng),
        fc1_("lcnn.fc1", 3 * w / 2, 2 * w, rng),
        fc2_("lcnn.fc2", w, 2, rng) {
    if (w % 2 != 0) throw std::invalid_argument("lcnn: width must be even");
  }

  Tensor forward(const Tensor& x) override {
    Tensor h = stdin_.forward(x);
    h = mfm1_.forward(conv1_.forward(h));
    h = pool1_.forward(h);                                 // 128
    h = mfm2a_.forward(conv2a_.forward(h));
    h = mfm2_.forward(conv2_.forward(h));
    h = bn2_.forward(pool2_.forward(h));                   // 64
    h = mfm3a_.forward(conv3a_.forward(h));
    h = mfm3_.forward(conv3_.forward(h));
    h = bn3_.forward(pool3_.forward(h));                   // 32
    h = mfm4a_.forward(conv4a_.forward(h));
    h = bn4_.forward(mfm4_.forward(conv4_.forward(h)));
    h = mfm5a_.forward(conv5a_.forward(h));
    h = mfm5_.forward(conv5_.forward(h));
    h = pool5_.forward(h);                                 // 16
    h = gap_.forward(h);
    h = as_nc(fcmfm_.forward(as_nchw(fc1_.forward(h))));
    return fc2_.forward(h);
  }

  Tensor backward(const Tensor& g_logits) override {
    Tensor g = fc2_.backward(g_logits);
    g = fc1_.backward(as_nc(fcmfm_.backward(as_nchw(g))));
    g = gap_.backward(g);
    g = pool5_.backward(g);
    g = conv5_.backward(mfm5_.backward(g));
    g = conv5a_.backward(mfm5a_.backward(g));
    g = conv4_.backward(mfm4_.backward(bn4_.backward(g)));
    g = conv4a_.backward(mfm4a_.backward(g));
    g = pool3_.backward(bn3_.backward(g));
    g = conv3_.backward(mfm3_.backward(g));
    g = conv3a_.backward(mfm3a_.backward(g));
    g = pool2_.backward(bn2_.backward(g));
    g = conv2_.backward(mfm2_.backward(g));
    g = conv2a_.backward(mfm2a_.backward(g));
    g = pool1_.backward(g);
    g = conv1_.backward(mfm1_.backward(g));
    return stdin_.backward(g);
  }

  const char* kind() const override { return "lcnn"; }

  void collect_params(std::vector<nn::Param*>& out) override {
    for (auto* m : param_modules()) m->collect_params(out);
  }
  void collect_buffers(std::vector<nn::Param*>& out) override {
    for (auto* m : param_modules()) m->collect_buffers(out);
  }
  void set_train(bool t) override {
    for (auto* m : param_modules()) m->set_train(t);
  }

 private:
  std::vector<nn::Module*> param_modules() {
    return {&conv1_, &conv2a_, &conv2_, &bn2_, &conv3a_, &conv3_, &bn3_,
            &conv4a_, &conv4_, &bn4_, &conv5a_, &conv5_, &fc1_, &fc2_};
  }

  nn::InstanceStandardize stdin_;
  nn::Conv2d conv1_;
  nn::MaxFeatureMap mfm1_;
  nn::MaxPool2d pool1_{2};
  nn::Conv2d conv2a_;
  nn::MaxFeatureMap mfm2a_;
  nn::Conv2d conv2_;
  nn::MaxFeatureMap mfm2_;
  nn::MaxPool2d pool2_{2};
  nn::BatchNorm2d bn2_;
  nn::Conv2d conv3a_;
  nn::MaxFeatureMap mfm3a_;
  nn::Conv2d conv3_;
  nn::MaxFeatureMap mfm3_;
  nn::MaxPool2d pool3_{2};
  nn::BatchNorm2d bn3_;
  nn::Conv2d conv4a_;
  nn::MaxFeatureMap mfm4a_;
  nn::Conv2d conv4_;
  nn::MaxFeatureMap mfm4_;
  nn::BatchNorm2d bn4_;
  nn::Conv2d conv5a_;
  nn::MaxFeatureMap mfm5a_;
  nn::Conv2d conv5_;
  nn::MaxFeatureMap mfm5_;
  nn::MaxPool2d pool5_{2};
  nn::GlobalAvgPool gap_;
  nn::Linear fc1_;
  nn::MaxFeatureMap fcmfm_;  // works on [N,C] reshaped below
  nn::Linear fc2_;
};

}  // namespace

// ---------------------------------------------------------------------------
// ResNet18
// ---------------------------------------------------------------------------

namespace {

class BasicBlock : public nn::Module {
 public:
  BasicBlock(const std::string& name, int in_ch, int out_ch, int stride, Rng& rng)
      : conv1_(name + ".conv1", in_ch, out_ch, 3, stride, 1, false, rng),
        bn1_(name + ".bn1", out_ch),
        conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1, false, rng),
        bn2_(name + ".bn2", out_ch),
        has_down_(stride != 1 || in_ch != out_ch) {
    if (has_down_) {
      down_conv_ = std::make_unique<nn::Conv2d>(name + ".down", in_ch, out_ch, 1, stride, 0,
                                                false, rng);
      down_bn_ = std::make_unique<nn::BatchNorm2d>(name + ".down_bn", out_ch);
    }
  }

  Tensor forward(const Tensor& x) {
    Tensor identity = has_down_ ? down_bn_->forward(down_conv_->forward(x)) : x;
    Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x)));
    h = bn2_.forward(conv2_.forward(h));
    return relu2_.forward(nn::add(h, identity));
  }

  Tensor backward(const Tensor& gy) {
    Tensor g = relu2_.backward(gy);
    Tensor g_main = conv1_.backward(bn1_.backward(relu1_.backward(
        conv2_.backward(bn2_.backward(g)))));
    Tensor g_skip = has_down_ ? down_conv_->backward(down_bn_->backward(g)) : g;
    return nn::add(g_main, g_skip);
  }

  void collect_params(std::vector<nn::Param*>& out) override {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    if (has_down_) {
      down_conv_->collect_params(out);
      down_bn_->collect_params(out);
    }
  }
  void collect_buffers(std::vector<nn::Param*>& out) override {
    bn1_.collect_buffers(out);
    bn2_.collect_buffers(out);
    if (has_down_) down_bn_->collect_buffers(out);
  }
  void set_train(bool t) override {
    bn1_.set_train(t);
    bn2_.set_train(t);
    if (has_down_) down_bn_->set_train(t);
  }

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  nn::ReLU relu1_;
  nn::Conv2d conv2_;
  nn::BatchNorm2d bn2_;
  nn::ReLU relu2_;
  bool has_down_;
  std::unique_ptr<nn::Conv2d> down_conv_;
  std::unique_ptr<nn::BatchNorm2d> down_bn_;
};

class ResNet18 : public Classifier {
 public:
  ResNet18(Rng& rng, int w)
      : conv1_("resnet.conv1", 3, w, 7, 2, 3, false, rng),
        bn1_("resnet.bn1", w),
        l1a_("resnet.l1a", w, w, 1, rng),
        l1b_("resnet.l1b", w, w, 1, rng),
        l2a_("resnet.l2a", w, 2 * w, 2, rng),
        l2b_("resnet.l2b", 2 * w, 2 * w, 1, rng),
        l3a_("resnet.l3a", 2 * w, 4 * w, 2, rng),
        l3b_("resnet.l3b", 4 * w, 4 * w, 1, rng),
        l4a_("resnet.l4a", 4 * w, 8 * w, 2, rng),
        l4b_("resnet.l4b", 8 * w, 8 * w, 1, rng),
        fc_("resnet.fc", 8 * w, 2, rng) {}

  Tensor forward(const Tensor& x) override {
    Tensor h = stdin_.forward(x);
    h = relu1_.forward(bn1_.forward(conv1_.forward(h)));  // 128
    h = pool1_.forward(h);                                // 64
    h = l1b_.forward(l1a_.forward(h));
    h = l2b_.forward(l2a_.forward(h));                    // 32
    h = l3b_.forward(l3a_.forward(h));                    // 16
    h = l4b_.forward(l4a_.forward(h));                    // 8
    h = gap_.forward(h);
    return fc_.forward(h);
  }

  Tensor backward(const Tensor& g_logits) override {
    Tensor g = fc_.backward(g_logits);
    g = gap_.backward(g);
    g = l4a_.backward(l4b_.backward(g));
    g = l3a_.backward(l3b_.backward(g));
    g = l2a_.backward(l2b_.backward(g));
    g = l1a_.backward(l1b_.backward(g));
    g = pool1_.backward(g);
    g = conv1_.backward(bn1_.backward(relu1_.backward(g)));
    return stdin_.backward(g);
  }

  const char* kind() const override { return "resnet18"; }

  void collect_params(std::vector<nn::Param*>& out) override {
    for (auto* m : param_modules()) m->collect_params(out);
  }
  void collect_buffers(std::vector<nn::Param*>& out) override {
    for (auto* m : param_modules()) m->collect_buffers(out);
  }
  void set_train(bool t) override {
    for (auto* m : param_modules()) m->set_train(t);
  }

 private:
  std::vector<nn::Module*> param_modules() {
    return {&conv1_, &bn1_, &l1a_, &l1b_, &l2a_, &l2b_, &l3a_, &l3b_, &l4a_, &l4b_, &fc_};
  }

  nn::InstanceStandardize stdin_;
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  nn::ReLU relu1_;
  nn::MaxPool2d pool1_{2};
  BasicBlock l1a_, l1b_, l2a_, l2b_, l3a_, l3b_, l4a_, l4b_;
  nn::GlobalAvgPool gap_;
  nn::Linear fc_;
};

}  // namespace

// ---------------------------------------------------------------------------
// AASIST adaptation: linear front-end over 256x768 frames, small conv
// encoder, then graph attention over spectral/temporal max-pooled nodes.
// ---------------------------------------------------------------------------

Tensor aasist_reshape(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) != 3)
    throw std::invalid_argument("aasist_reshape: expected Nx3xHxW");
  int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor out({n * w, 3 * h});
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      for (int q = 0; q < h; ++q) {
        const float* row = x.data() + ((static_cast<int64_t>(i) * 3 + c) * h + q) * w;
        for (int t = 0; t < w; ++t) {
          out.at(i * w + t, c * h + q) = row[t];
        }
      }
    }
  }
  return out;
}

Tensor aasist_reshape_backward(const Tensor& g, int n) {
  int tw = g.dim(0) / n;       // frames per sample
  int feat = g.dim(1);         // 3*h
  int h = feat / 3;
  Tensor out({n, 3, h, tw});
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      for (int q = 0; q < h; ++q) {
        float* row = out.data() + ((static_cast<int64_t>(i) * 3 + c) * h + q) * tw;
        for (int t = 0; t < tw; ++t) row[t] = g.at(i * tw + t, c * h + q);
      }
    }
  }
  return out;
}

namespace {

// Fully-connected graph attention with additive scores and a residual:
//   H = X W,  e_ij = leaky_relu(a1.h_i + a2.h_j),  A = rowsoftmax(e),
//   Y = relu(A H + H)
class GraphAttention : public nn::Module {
 public:
  GraphAttention(const std::string& name, int in_dim, int out_dim, Rng& rng)
      : in_dim_(in_dim), out_dim_(out_dim) {
    w_.name = name + ".w";
    w_.init_shape({in_dim, out_dim});
    nn::he_uniform_init(w_.value, in_dim, rng);
    a1_.name = name + ".a1";
    a1_.init_shape({out_dim});
    nn::he_uniform_init(a1_.value, out_dim, rng);
    a2_.name = name + ".a2";
    a2_.init_shape({out_dim});
    nn::he_uniform_init(a2_.value, out_dim, rng);
  }

  // x: [N, M, in_dim] -> [N, M, out_dim]
  Tensor forward(const Tensor& x) {
    x_ = x;
    int n = x.dim(0), m = x.dim(1);
    h_ = Tensor({n, m, out_dim_});
    attn_ = Tensor({n, m, m});
    pre_ = Tensor({n, m, m});
    Tensor y({n, m, out_dim_});
    for (int i = 0; i < n; ++i) {
      const float* xi = x.data() + static_cast<int64_t>(i) * m * in_dim_;
      float* hi = h_.data() + static_cast<int64_t>(i) * m * out_dim_;
      nn::matmul(xi, w_.value.data(), hi, m, in_dim_, out_dim_);
      std::vector<float> u(static_cast<size_t>(m)), v(static_cast<size_t>(m));
      for (int r = 0; r < m; ++r) {
        float su = 0.0f, sv = 0.0f;
        for (int d = 0; d < out_dim_; ++d) {
          su += hi[static_cast<int64_t>(r) * out_dim_ + d] * a1_.value[d];
          sv += hi[static_cast<int64_t>(r) * out_dim_ + d] * a2_.value[d];
        }
        u[static_cast<size_t>(r)] = su;
        v[static_cast<size_t>(r)] = sv;
      }
      float* pre = pre_.data() + static_cast<int64_t>(i) * m * m;
      float* at = attn_.data() + static_cast<int64_t>(i) * m * m;
      for (int r = 0; r < m; ++r)
        for (int cjs = 0; cjs < m; ++cjs) {
          float e = u[static_cast<size_t>(r)] + v[static_cast<size_t>(cjs)];
          pre[static_cast<int64_t>(r) * m + cjs] = e;
          at[static_cast<int64_t>(r) * m + cjs] = e > 0.0f ? e : kSlope * e;
        }
      nn::softmax_rows(at, m, m);
      float* yi = y.data() + static_cast<int64_t>(i) * m * out_dim_;
      nn::matmul(at, hi, yi, m, m, out_dim_);
      for (int64_t j = 0; j < static_cast<int64_t>(m) * out_dim_; ++j) yi[j] += hi[j];
    }
    return relu_.forward(y);
  }

  Tensor backward(const Tensor& gy) {
    Tensor g = relu_.backward(gy);
    int n = x_.dim(0), m = x_.dim(1);
    Tensor gx(x_.shape());
    std::vector<float> ga(static_cast<size_t>(m) * m), gpre(static_cast<size_t>(m) * m);
    std::vector<float> gh(static_cast<size_t>(m) * out_dim_);
    for (int i = 0; i < n; ++i) {
      const float* gi = g.data() + static_cast<int64_t>(i) * m * out_dim_;
      const float* hi = h_.data() + static_cast<int64_t>(i) * m * out_dim_;
      const float* at = attn_.data() + static_cast<int64_t>(i) * m * m;
      const float* pre = pre_.data() + static_cast<int64_t>(i) * m * m;
      // Y = A H + H
      nn::matmul_nt(gi, hi, ga.data(), m, out_dim_, m);  // gA = gY H^T
      nn::matmul_tn(at, gi, gh.data(), m, m, out_dim_);  // gH = A^T gY
      for (int64_t j = 0; j < static_cast<int64_t>(m) * out_dim_; ++j) gh[static_cast<size_t>(j)] += gi[j];
      nn::softmax_rows_backward(at, ga.data(), gpre.data(), m, m);
      // through leaky relu on pre-activations; split into row/col sums
      std::vector<float> gu(static_cast<size_t>(m), 0.0f), gv(static_cast<size_t>(m), 0.0f);
      for (int r = 0; r < m; ++r) {
        for (int cjs = 0; cjs < m; ++cjs) {
          float gp = gpre[static_cast<size_t>(r) * m + cjs];
          if (pre[static_cast<int64_t>(r) * m + cjs] <= 0.0f) gp *= kSlope;
          gu[static_cast<size_t>(r)] += gp;
          gv[static_cast<size_t>(cjs)] += gp;
        }
      }
      // u_r = h_r . a1, v_r = h_r . a2
      for (int r = 0; r < m; ++r) {
        for (int d = 0; d < out_dim_; ++d) {
          float hv = hi[static_cast<int64_t>(r) * out_dim_ + d];
          a1_.grad[d] += gu[static_cast<size_t>(r)] * hv;
          a2_.grad[d] += gv[static_cast<size_t>(r)] * hv;
          gh[static_cast<size_t>(r) * out_dim_ + d] +=
              gu[static_cast<size_t>(r)] * a1_.value[d] + gv[static_cast<size_t>(r)] * a2_.value[d];
        }
      }
      const float* xi = x_.data() + static_cast<int64_t>(i) * m * in_dim_;
      nn::matmul_tn(xi, gh.data(), w_.grad.data(), in_dim_, m, out_dim_, true);
      nn::matmul_nt(gh.data(), w_.value.data(), gx.data() + static_cast<int64_t>(i) * m * in_dim_,
                    m, out_dim_, in_dim_);
    }
    return gx;
  }

  void collect_params(std::vector<nn::Param*>& out) override {
    out.push_back(&w_);
    out.push_back(&a1_);
    out.push_back(&a2_);
  }

 private:
  static constexpr float kSlope = 0.2f;
  int in_dim_, out_dim_;
  nn::Param w_, a1_, a2_;
  Tensor x_, h_, attn_, pre_;
  nn::ReLU relu_;
};

class AasistAdapted : public Classifier {
 public:
  AasistAdapted(Rng& rng, int w)
      : width_(w),
        front_("aasist.front", 768, 128, rng),
        b1_("aasist.b1", 1, w / 3, rng),
        b2_("aasist.b2", w / 3, 2 * w / 3, rng),
        b3_("aasist.b3", 2 * w / 3, w, rng),
        gat1_("aasist.gat1", w, w + w / 3, rng),
        gat2_("aasist.gat2", w + w / 3, w + w / 3, rng),
        fc_("aasist.fc", 3 * (w + w / 3), 2, rng) {
    if (w % 3 != 0) throw std::invalid_argument("aasist: width must be divisible by 3");
  }

  Tensor forward(const Tensor& x) override {
    int n = x.dim(0);
    Tensor h = stdin_.forward(x);
    Tensor frames = aasist_reshape(h);            // [N*256, 768]
    frames = front_relu_.forward(front_.forward(frames));  // [N*256, 128]
    // to a [N,1,256,128] time-frequency map
    Tensor map({n, 1, 256, 128});
    std::copy_n(frames.data(), frames.numel(), map.data());
    Tensor e = b1_.forward_block(map);
    e = p1_.forward(e);                           // [w/3,128,64]
    e = b2_.forward_block(e);
    e = p2_.forward(e);                           // [2w/3,64,32]
    e = b3_.forward_block(e);
    e = p3_.forward(e);                           // [w,32,16]
    enc_shape_ = e.shape();

    // temporal nodes: max over the frequency axis; spectral: max over time.
    int c = e.dim(1), ht = e.dim(2), wf = e.dim(3);
    int m = ht + wf + 1;  // + master node
    nodes_m_ = m;
    Tensor nodes({n, m, c});
    t_arg_.assign(static_cast<size_t>(n) * ht * c, 0);
    s_arg_.assign(static_cast<size_t>(n) * wf * c, 0);
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const float* plane = e.data() + (static_cast<int64_t>(i) * c + ch) * ht * wf;
        for (int r = 0; r < ht; ++r) {
          int best = 0;
          for (int col = 1; col < wf; ++col)
            if (plane[static_cast<int64_t>(r) * wf + col] > plane[static_cast<int64_t>(r) * wf + best]) best = col;
          t_arg_[(static_cast<size_t>(i) * ht + r) * c + ch] = best;
          nodes.at(i, r, ch) = plane[static_cast<int64_t>(r) * wf + best];
        }
        for (int col = 0; col < wf; ++col) {
          int best = 0;
          for (int r = 1; r < ht; ++r)
            if (plane[static_cast<int64_t>(r) * wf + col] > plane[static_cast<int64_t>(best) * wf + col]) best = r;
          s_arg_[(static_cast<size_t>(i) * wf + col) * c + ch] = best;
          nodes.at(i, ht + col, ch) = plane[static_cast<int64_t>(best) * wf + col];
        }
        // master node: mean over the real nodes
        float acc = 0.0f;
        for (int r = 0; r < ht + wf; ++r) acc += nodes.at(i, r, ch);
        nodes.at(i, m - 1, ch) = acc / static_cast<float>(ht + wf);
      }
    }
    Tensor g1 = gat1_.forward(nodes);
    Tensor g2 = gat2_.forward(g1);

    // readout: node mean ++ node max ++ master node
    int d = g2.dim(2);
    readout_arg_.assign(static_cast<size_t>(n) * d, 0);
    Tensor feat({n, 3 * d});
    for (int i = 0; i < n; ++i) {
      for (int dd = 0; dd < d; ++dd) {
        float mean = 0.0f, best = g2.at(i, 0, dd);
        int barg = 0;
        for (int r = 0; r < m; ++r) {
          float v = g2.at(i, r, dd);
          mean += v;
          if (v > best) {
            best = v;
            barg = r;
          }
        }
        readout_arg_[static_cast<size_t>(i) * d + dd] = barg;
        feat.at(i, dd) = mean / static_cast<float>(m);
        feat.at(i, d + dd) = best;
        feat.at(i, 2 * d + dd) = g2.at(i, m - 1, dd);
      }
    }
    return fc_.forward(feat);
  }

  Tensor backward(const Tensor& g_logits) override {
    Tensor gfeat = fc_.backward(g_logits);
    int n = gfeat.dim(0);
    int m = nodes_m_;
    int d = (gat2_out_dim());
    Tensor g2(std::vector<int>{n, m, d});
    for (int i = 0; i < n; ++i) {
      for (int dd = 0; dd < d; ++dd) {
        float gmean = gfeat.at(i, dd) / static_cast<float>(m);
        for (int r = 0; r < m; ++r) g2.at(i, r, dd) += gmean;
        g2.at(i, readout_arg_[static_cast<size_t>(i) * d + dd], dd) += gfeat.at(i, d + dd);
        g2.at(i, m - 1, dd) += gfeat.at(i, 2 * d + dd);
      }
    }
    Tensor gnodes = gat1_.backward(gat2_.backward(g2));

    // scatter node grads back into the encoder map
    int c = enc_shape_[1], ht = enc_shape_[2], wf = enc_shape_[3];
    Tensor ge(enc_shape_);
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        float* plane = ge.data() + (static_cast<int64_t>(i) * c + ch) * ht * wf;
        float gmaster = gnodes.at(i, m - 1, ch) / static_cast<float>(ht + wf);
        for (int r = 0; r < ht; ++r) {
          float g = gnodes.at(i, r, ch) + gmaster;
          plane[static_cast<int64_t>(r) * wf + t_arg_[(static_cast<size_t>(i) * ht + r) * c + ch]] += g;
        }
        for (int col = 0; col < wf; ++col) {
          float g = gnodes.at(i, ht + col, ch) + gmaster;
          plane[static_cast<int64_t>(s_arg_[(static_cast<size_t>(i) * wf + col) * c + ch]) * wf + col] += g;
        }
      }
    }
    Tensor g = p3_.backward(ge);
    g = b3_.backward_block(g);
    g = p2_.backward(g);
    g = b2_.backward_block(g);
    g = p1_.backward(g);
    g = b1_.backward_block(g);
    Tensor gframes({n * 256, 128});
    std::copy_n(g.data(), g.numel(), gframes.data());
    gframes = front_.backward(front_relu_.backward(gframes));
    Tensor gx = aasist_reshape_backward(gframes, n);
    return stdin_.backward(gx);
  }

  const char* kind() const override { return "aasist"; }

  void collect_params(std::vector<nn::Param*>& out) override {
    front_.collect_params(out);
    b1_.collect_params(out);
    b2_.collect_params(out);
    b3_.collect_params(out);
    gat1_.collect_params(out);
    gat2_.collect_params(out);
    fc_.collect_params(out);
  }
  void collect_buffers(std::vector<nn::Param*>& out) override {
    b1_.collect_buffers(out);
    b2_.collect_buffers(out);
    b3_.collect_buffers(out);
  }
  void set_train(bool t) override {
    b1_.set_train(t);
    b2_.set_train(t);
    b3_.set_train(t);
  }

 private:
  struct EncBlock : public nn::Module {
    EncBlock(const std::string& name, int in_ch, int out_ch, Rng& rng)
        : conv(name, in_ch, out_ch, 3, 1, 1, false, rng), bn(name + ".bn", out_ch) {}
    nn::Conv2d conv;
    nn::BatchNorm2d bn;
    nn::ReLU relu;
    Tensor forward_block(const Tensor& x) { return relu.forward(bn.forward(conv.forward(x))); }
    Tensor backward_block(const Tensor& g) {
      return conv.backward(bn.backward(relu.backward(g)));
    }
    void collect_params(std::vector<nn::Param*>& out) override {
      conv.collect_params(out);
      bn.collect_params(out);
    }
    void collect_buffers(std::vector<nn::Param*>& out) override { bn.collect_buffers(out); }
    void set_train(bool t) override { bn.set_train(t); }
  };

  int gat2_out_dim() const { return width_ + width_ / 3; }

  int width_;
  nn::InstanceStandardize stdin_;
  nn::Linear front_;
  nn::ReLU front_relu_;
  EncBlock b1_, b2_, b3_;
  nn::MaxPool2d p1_{2}, p2_{2}, p3_{2};
  GraphAttention gat1_, gat2_;
  nn::Linear fc_;

  std::vector<int> enc_shape_;
  std::vector<int> t_arg_, s_arg_;
  std::vector<int> readout_arg_;
  int nodes_m_ = 0;
};

}  // namespace

std::unique_ptr<Classifier> make_classifier(const std::string& kind, Rng& rng, int width) {
  if (kind == "lcnn") return std::make_unique<Lcnn>(rng, width > 0 ? width : 16);
  if (kind == "resnet18") return std::make_unique<ResNet18>(rng, width > 0 ? width : 16);
  if (kind == "aasist") return std::make_unique<AasistAdapted>(rng, width > 0 ? width : 24);
  throw std::invalid_argument("unknown classifier '" + kind + "'");
}

}  // namespace recolor
