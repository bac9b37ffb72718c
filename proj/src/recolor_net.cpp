#include "recolor/recolor_net.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace recolor {

void RecolorConfig::validate() const {
  if (num_colors < 1) throw std::invalid_argument("config: num_colors must be >= 1");
  if (!(temperature > 0.0f))
    throw std::invalid_argument("config: temperature must be positive");
  if (encoder_channels.size() != 3)
    throw std::invalid_argument("config: encoder_channels must have 3 entries");
  for (int c : encoder_channels)
    if (c < 1) throw std::invalid_argument("config: encoder channels must be positive");
  if (pam_dim < 1) throw std::invalid_argument("config: pam_dim must be positive");
}

std::string RecolorConfig::widths_str() const {
  std::ostringstream os;
  for (size_t i = 0; i < encoder_channels.size(); ++i) {
    if (i) os << ",";
    os << encoder_channels[i];
  }
  return os.str();
}

// --- TokMlpBlock ---

TokMlpBlock::TokMlpBlock(const std::string& name, int channels, Rng& rng)
    : norm_(name + ".norm", channels),
      expand_(name + ".expand", channels, channels * 2, 1, 1, 0, true, rng),
      dw_(name + ".dw", channels * 2, 3, 1, rng),
      project_(name + ".project", channels * 2, channels, 1, 1, 0, true, rng) {}

Tensor TokMlpBlock::forward(const Tensor& x) {
  Tensor h = norm_.forward(x);
  h = expand_.forward(h);
  h = dw_.forward(h);
  h = act_.forward(h);
  h = project_.forward(h);
  return nn::add(x, h);
}

Tensor TokMlpBlock::backward(const Tensor& gy) {
  Tensor g = project_.backward(gy);
  g = act_.backward(g);
  g = dw_.backward(g);
  g = expand_.backward(g);
  g = norm_.backward(g);
  return nn::add(g, gy);  // residual branch
}

void TokMlpBlock::collect_params(std::vector<nn::Param*>& out) {
  norm_.collect_params(out);
  expand_.collect_params(out);
  dw_.collect_params(out);
  project_.collect_params(out);
}

// --- PixelMappingEncoder ---

PixelMappingEncoder::PixelMappingEncoder(const RecolorConfig& cfg, Rng& rng)
    : num_colors_(cfg.num_colors),
      enc1_("enc1", 3, cfg.encoder_channels[0], rng),
      enc2_("enc2", cfg.encoder_channels[0], cfg.encoder_channels[1], rng),
      enc3_("enc3", cfg.encoder_channels[1], cfg.encoder_channels[2], rng),
      bott1_("bott1", cfg.encoder_channels[2], rng),
      bott2_("bott2", cfg.encoder_channels[2], rng),
      dec3_("dec3", cfg.encoder_channels[2] * 2, cfg.encoder_channels[1], rng),
      dec2_("dec2", cfg.encoder_channels[1] * 2, cfg.encoder_channels[0], rng),
      dec1_("dec1", cfg.encoder_channels[0] * 2, cfg.encoder_channels[0], rng),
      head_("head", cfg.encoder_channels[0], cfg.num_colors, 1, 1, 0, true, rng),
      c1_(cfg.encoder_channels[0]),
      c2_(cfg.encoder_channels[1]),
      c3_(cfg.encoder_channels[2]) {}

Tensor PixelMappingEncoder::forward(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) != 3)
    throw std::invalid_argument("encoder: expected Nx3xHxW input, got " + x.shape_str());
  skip1_ = enc1_.forward(x);                    // [N,c1,256,256]
  Tensor h = pool1_.forward(skip1_);            // 128
  skip2_ = enc2_.forward(h);                    // [N,c2,128,128]
  h = pool2_.forward(skip2_);                   // 64
  skip3_ = enc3_.forward(h);                    // [N,c3,64,64]
  h = pool3_.forward(skip3_);                   // 32
  h = bott1_.forward(h);
  h = bott2_.forward(h);
  h = up3_.forward(h);                          // 64
  h = dec3_.forward(nn::concat_channels(h, skip3_));
  h = up2_.forward(h);                          // 128
  h = dec2_.forward(nn::concat_channels(h, skip2_));
  h = up1_.forward(h);                          // 256
  h = dec1_.forward(nn::concat_channels(h, skip1_));
  return head_.forward(h);                      // [N,K,256,256]
}

Tensor PixelMappingEncoder::backward(const Tensor& gy) {
  Tensor g = head_.backward(gy);
  g = dec1_.backward(g);
  Tensor g_up, g_skip1;
  nn::split_channels_backward(g, c1_, g_up, g_skip1);
  g = up1_.backward(g_up);
  g = dec2_.backward(g);
  Tensor g_skip2;
  nn::split_channels_backward(g, c2_, g_up, g_skip2);
  g = up2_.backward(g_up);
  g = dec3_.backward(g);
  Tensor g_skip3;
  nn::split_channels_backward(g, c3_, g_up, g_skip3);
  g = up3_.backward(g_up);
  g = bott2_.backward(g);
  g = bott1_.backward(g);
  g = pool3_.backward(g);
  g = enc3_.backward(nn::add(g, g_skip3));
  g = pool2_.backward(g);
  g = enc2_.backward(nn::add(g, g_skip2));
  g = pool1_.backward(g);
  return enc1_.backward(nn::add(g, g_skip1));
}

std::vector<nn::Module*> PixelMappingEncoder::modules() {
  return {&enc1_.conv, &enc1_.bn, &enc2_.conv, &enc2_.bn, &enc3_.conv, &enc3_.bn,
          &bott1_, &bott2_, &dec3_.conv, &dec3_.bn, &dec2_.conv, &dec2_.bn,
          &dec1_.conv, &dec1_.bn, &head_};
}

void PixelMappingEncoder::collect_params(std::vector<nn::Param*>& out) {
  for (auto* m : modules()) m->collect_params(out);
}

void PixelMappingEncoder::collect_buffers(std::vector<nn::Param*>& out) {
  for (auto* m : modules()) m->collect_buffers(out);
}

void PixelMappingEncoder::set_train(bool t) {
  for (auto* m : modules()) m->set_train(t);
}

// --- PaletteAcquisition ---

PaletteAcquisition::PaletteAcquisition(const RecolorConfig& cfg, Rng& rng)
    : num_colors_(cfg.num_colors),
      dim_(cfg.pam_dim),
      conv1_("pam.conv1", 3, cfg.pam_dim / 2, 3, 2, 1, false, rng),
      conv2_("pam.conv2", cfg.pam_dim / 2, cfg.pam_dim, 3, 2, 1, false, rng),
      bn1_("pam.bn1", cfg.pam_dim / 2),
      bn2_("pam.bn2", cfg.pam_dim),
      head_("pam.head", cfg.pam_dim, 3, rng) {
  if (cfg.pam_dim % 2 != 0) throw std::invalid_argument("config: pam_dim must be even");
  queries_.name = "pam.queries";
  queries_.init_shape({num_colors_, dim_});
  nn::he_uniform_init(queries_.value, dim_, rng);
  wk_.name = "pam.wk";
  wk_.init_shape({dim_, dim_});
  nn::he_uniform_init(wk_.value, dim_, rng);
  wv_.name = "pam.wv";
  wv_.init_shape({dim_, dim_});
  nn::he_uniform_init(wv_.value, dim_, rng);
}

Tensor PaletteAcquisition::forward(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) != 3)
    throw std::invalid_argument("palette: expected Nx3xHxW input, got " + x.shape_str());
  Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x)));   // stride 2
  h = relu2_.forward(bn2_.forward(conv2_.forward(h)));          // stride 4 total
  feat_shape_ = h.shape();
  int n = h.dim(0), c = h.dim(1);
  int64_t t = static_cast<int64_t>(h.dim(2)) * h.dim(3);

  // flatten: feat[n, t, c] from h[n, c, t]
  feat_ = Tensor({n, static_cast<int>(t), c});
  for (int i = 0; i < n; ++i) {
    const float* src = h.data() + static_cast<int64_t>(i) * c * t;
    float* dst = feat_.data() + static_cast<int64_t>(i) * t * c;
    for (int ch = 0; ch < c; ++ch)
      for (int64_t j = 0; j < t; ++j) dst[j * c + ch] = src[static_cast<int64_t>(ch) * t + j];
  }

  keys_ = Tensor({n, static_cast<int>(t), c});
  vals_ = Tensor({n, static_cast<int>(t), c});
  attn_ = Tensor({n, num_colors_, static_cast<int>(t)});
  attended_ = Tensor({n * num_colors_, c});
  float scale = 1.0f / std::sqrt(static_cast<float>(dim_));
  for (int i = 0; i < n; ++i) {
    const float* f = feat_.data() + static_cast<int64_t>(i) * t * c;
    float* k = keys_.data() + static_cast<int64_t>(i) * t * c;
    float* v = vals_.data() + static_cast<int64_t>(i) * t * c;
    nn::matmul(f, wk_.value.data(), k, static_cast<int>(t), c, c);
    nn::matmul(f, wv_.value.data(), v, static_cast<int>(t), c, c);
    float* a = attn_.data() + static_cast<int64_t>(i) * num_colors_ * t;
    // scores = Q K^T / sqrt(d)
    nn::matmul_nt(queries_.value.data(), k, a, num_colors_, c, static_cast<int>(t));
    for (int64_t j = 0; j < num_colors_ * t; ++j) a[j] *= scale;
    nn::softmax_rows(a, num_colors_, static_cast<int>(t));
    nn::matmul(a, v, attended_.data() + static_cast<int64_t>(i) * num_colors_ * c,
               num_colors_, static_cast<int>(t), c);
  }
  Tensor logits = head_.forward(attended_);        // [N*K, 3]
  Tensor flat = out_act_.forward(logits);          // sigmoid
  Tensor out({n, num_colors_, 3});
  std::copy_n(flat.data(), flat.numel(), out.data());
  return out;
}

Tensor PaletteAcquisition::backward(const Tensor& gy) {
  int n = gy.dim(0);
  int c = dim_;
  int64_t t = static_cast<int64_t>(feat_shape_[2]) * feat_shape_[3];
  Tensor gflat({n * num_colors_, 3});
  std::copy_n(gy.data(), gy.numel(), gflat.data());
  Tensor g = out_act_.backward(gflat);
  g = head_.backward(g);  // [N*K, c]

  Tensor gfeat({n, static_cast<int>(t), c});
  float scale = 1.0f / std::sqrt(static_cast<float>(dim_));
  std::vector<float> ga(static_cast<size_t>(num_colors_) * t);
  std::vector<float> gs(static_cast<size_t>(num_colors_) * t);
  std::vector<float> gk(static_cast<size_t>(t) * c), gv(static_cast<size_t>(t) * c);
  for (int i = 0; i < n; ++i) {
    const float* go = g.data() + static_cast<int64_t>(i) * num_colors_ * c;
    const float* a = attn_.data() + static_cast<int64_t>(i) * num_colors_ * t;
    const float* k = keys_.data() + static_cast<int64_t>(i) * t * c;
    const float* v = vals_.data() + static_cast<int64_t>(i) * t * c;
    const float* f = feat_.data() + static_cast<int64_t>(i) * t * c;
    // gA = gO V^T ; gV = A^T gO
    nn::matmul_nt(go, v, ga.data(), num_colors_, c, static_cast<int>(t));
    nn::matmul_tn(a, go, gv.data(), static_cast<int>(t), num_colors_, c);
    nn::softmax_rows_backward(a, ga.data(), gs.data(), num_colors_, static_cast<int>(t));
    for (auto& x : gs) x *= scale;
    // gQ += gS K ; gK = gS^T Q
    nn::matmul(gs.data(), k, queries_.grad.data(), num_colors_, static_cast<int>(t), c, true);
    nn::matmul_tn(gs.data(), queries_.value.data(), gk.data(), static_cast<int>(t),
                  num_colors_, c);
    // gWk += F^T gK ; gWv += F^T gV ; gF = gK Wk^T + gV Wv^T
    nn::matmul_tn(f, gk.data(), wk_.grad.data(), c, static_cast<int>(t), c, true);
    nn::matmul_tn(f, gv.data(), wv_.grad.data(), c, static_cast<int>(t), c, true);
    float* gf = gfeat.data() + static_cast<int64_t>(i) * t * c;
    nn::matmul_nt(gk.data(), wk_.value.data(), gf, static_cast<int>(t), c, c);
    nn::matmul_nt(gv.data(), wv_.value.data(), gf, static_cast<int>(t), c, c, true);
  }

  // unflatten to [N, c, h, w]
  Tensor gh(feat_shape_);
  for (int i = 0; i < n; ++i) {
    const float* src = gfeat.data() + static_cast<int64_t>(i) * t * c;
    float* dst = gh.data() + static_cast<int64_t>(i) * c * t;
    for (int ch = 0; ch < c; ++ch)
      for (int64_t j = 0; j < t; ++j) dst[static_cast<int64_t>(ch) * t + j] = src[j * c + ch];
  }
  Tensor gx = conv1_.backward(bn1_.backward(relu1_.backward(
      conv2_.backward(bn2_.backward(relu2_.backward(gh))))));
  return gx;
}

void PaletteAcquisition::collect_params(std::vector<nn::Param*>& out) {
  conv1_.collect_params(out);
  bn1_.collect_params(out);
  conv2_.collect_params(out);
  bn2_.collect_params(out);
  out.push_back(&queries_);
  out.push_back(&wk_);
  out.push_back(&wv_);
  head_.collect_params(out);
}

void PaletteAcquisition::collect_buffers(std::vector<nn::Param*>& out) {
  bn1_.collect_buffers(out);
  bn2_.collect_buffers(out);
}

void PaletteAcquisition::set_train(bool t) {
  bn1_.set_train(t);
  bn2_.set_train(t);
}

// --- RecolorNet ---

RecolorNet::RecolorNet(const RecolorConfig& cfg)
    : config(cfg), init_rng_((cfg.validate(), cfg.seed)), encoder(cfg, init_rng_),
      palette(cfg, init_rng_) {}

RecolorNet::Forward RecolorNet::forward(const Tensor& x, ForwardMode mode) {
  Forward f;
  f.mode = mode;
  f.activations = encoder.forward(x);
  f.palette = palette.forward(x);
  if (!all_finite(f.activations) || !all_finite(f.palette))
    throw std::runtime_error("recolor forward: non-finite activations");
  int n = x.dim(0);
  int h = f.activations.dim(2), w = f.activations.dim(3);
  int k = config.num_colors;
  int64_t hw = static_cast<int64_t>(h) * w;
  f.image = Tensor({n, 3, h, w});
  if (mode == ForwardMode::train) {
    f.softmax = Tensor(f.activations.shape());
    for (int i = 0; i < n; ++i) {
      quantize_train_raw<float>(f.activations.data() + static_cast<int64_t>(i) * k * hw,
                                f.palette.data() + static_cast<int64_t>(i) * k * 3, k, hw,
                                config.temperature,
                                f.image.data() + static_cast<int64_t>(i) * 3 * hw,
                                f.softmax.data() + static_cast<int64_t>(i) * k * hw);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      quantize_test_raw<float>(f.activations.data() + static_cast<int64_t>(i) * k * hw,
                               f.palette.data() + static_cast<int64_t>(i) * k * 3, k, hw,
                               f.image.data() + static_cast<int64_t>(i) * 3 * hw);
    }
  }
  return f;
}

void RecolorNet::backward(const Forward& f, const Tensor& g_image) {
  if (f.mode != ForwardMode::train)
    throw std::logic_error("recolor backward: only the train path is differentiable");
  int n = f.activations.dim(0);
  int k = config.num_colors;
  int64_t hw = static_cast<int64_t>(f.activations.dim(2)) * f.activations.dim(3);
  Tensor ga(f.activations.shape());
  Tensor gp({n, k, 3});
  for (int i = 0; i < n; ++i) {
    quantize_train_backward_raw<float>(
        f.softmax.data() + static_cast<int64_t>(i) * k * hw,
        f.palette.data() + static_cast<int64_t>(i) * k * 3,
        g_image.data() + static_cast<int64_t>(i) * 3 * hw, k, hw, config.temperature,
        ga.data() + static_cast<int64_t>(i) * k * hw,
        gp.data() + static_cast<int64_t>(i) * k * 3);
  }
  encoder.backward(ga);
  palette.backward(gp);
}

void RecolorNet::collect_params(std::vector<nn::Param*>& out) {
  encoder.collect_params(out);
  palette.collect_params(out);
}

void RecolorNet::collect_buffers(std::vector<nn::Param*>& out) {
  encoder.collect_buffers(out);
  palette.collect_buffers(out);
}

void RecolorNet::set_train(bool t) {
  encoder.set_train(t);
  palette.set_train(t);
}

// --- single-image wrappers ---

Tensor unsqueeze0(const Tensor& t) {
  std::vector<int> shape = {1};
  for (int d : t.shape()) shape.push_back(d);
  Tensor out(shape);
  std::copy_n(t.data(), t.numel(), out.data());
  return out;
}

Tensor squeeze0(const Tensor& t) {
  if (t.ndim() < 1 || t.dim(0) != 1)
    throw std::invalid_argument("squeeze0: leading dimension must be 1");
  std::vector<int> shape(t.shape().begin() + 1, t.shape().end());
  Tensor out(shape);
  std::copy_n(t.data(), t.numel(), out.data());
  return out;
}

Tensor encode_activation(RecolorNet& net, const Tensor& image) {
  return squeeze0(net.encoder.forward(unsqueeze0(image)));
}

Tensor acquire_palette(RecolorNet& net, const Tensor& image) {
  return squeeze0(net.palette.forward(unsqueeze0(image)));
}

Tensor recolor_forward(RecolorNet& net, const Tensor& image, ForwardMode mode) {
  return squeeze0(net.forward(unsqueeze0(image), mode).image);
}

}  // namespace recolor
