#ifndef RECOLOR_RECOLOR_NET_HPP
#define RECOLOR_RECOLOR_NET_HPP

#include <memory>
#include <string>
#include <vector>

#include "recolor/nn.hpp"
#include "recolor/quantize.hpp"
#include "recolor/tensor.hpp"

namespace recolor {

struct RecolorConfig {
  int num_colors = 8;
  float temperature = 0.01f;
  std::vector<int> encoder_channels = {16, 32, 64};
  int pam_dim = 32;       // attention feature width
  uint64_t seed = 1;

  void validate() const;
  std::string widths_str() const;
};

enum class ForwardMode { train, test };

// Tokenized-MLP block: channel LayerNorm, 1x1 expansion, depthwise 3x3,
// GELU, 1x1 projection, residual.
class TokMlpBlock : public nn::Module {
 public:
  TokMlpBlock(const std::string& name, int channels, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<nn::Param*>& out) override;

 private:
  nn::LayerNormChannel norm_;
  nn::Conv2d expand_;
  nn::DepthwiseConv2d dw_;
  nn::GELU act_;
  nn::Conv2d project_;
};

// U-shaped pixel-mapping encoder: three conv stages down, tokenized-MLP
// bottleneck, three upsample+skip stages back to full resolution, 1x1
// projection to K per-pixel class logits.
class PixelMappingEncoder : public nn::Module {
 public:
  PixelMappingEncoder(const RecolorConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x);   // [N,3,256,256] -> [N,K,256,256]
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<nn::Param*>& out) override;
  void collect_buffers(std::vector<nn::Param*>& out) override;
  void set_train(bool t) override;

 private:
  struct ConvBlock {
    ConvBlock(const std::string& name, int in_ch, int out_ch, Rng& rng)
        : conv(name, in_ch, out_ch, 3, 1, 1, false, rng), bn(name + ".bn", out_ch) {}
    nn::Conv2d conv;
    nn::BatchNorm2d bn;
    nn::ReLU relu;

    Tensor forward(const Tensor& x) { return relu.forward(bn.forward(conv.forward(x))); }
    Tensor backward(const Tensor& g) { return conv.backward(bn.backward(relu.backward(g))); }
  };

  int num_colors_;
  ConvBlock enc1_, enc2_, enc3_;
  nn::MaxPool2d pool1_{2}, pool2_{2}, pool3_{2};
  TokMlpBlock bott1_, bott2_;
  nn::UpsampleNearest2x up3_, up2_, up1_;
  ConvBlock dec3_, dec2_, dec1_;
  nn::Conv2d head_;

  Tensor skip1_, skip2_, skip3_;  // saved encoder activations
  int c1_, c2_, c3_;

  std::vector<nn::Module*> modules();
};

// Palette Acquisition Module: two strided conv layers, then K learnable
// queries attend over the flattened spatial features (single-head scaled
// dot-product); a shared linear head plus sigmoid yields K colors in [0,1]^3.
class PaletteAcquisition : public nn::Module {
 public:
  PaletteAcquisition(const RecolorConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x);   // [N,3,256,256] -> [N,K,3]
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<nn::Param*>& out) override;
  void collect_buffers(std::vector<nn::Param*>& out) override;
  void set_train(bool t) override;

 private:
  int num_colors_;
  int dim_;
  nn::Conv2d conv1_, conv2_;
  nn::BatchNorm2d bn1_, bn2_;
  nn::ReLU relu1_, relu2_;
  nn::Param queries_;   // [K, dim]
  nn::Param wk_, wv_;   // [dim, dim]
  nn::Linear head_;     // dim -> 3
  nn::Sigmoid out_act_;

  // forward caches
  Tensor feat_;         // [N, T, dim] flattened conv features
  Tensor keys_, vals_;  // [N, T, dim]
  Tensor attn_;         // [N, K, T] softmax weights
  Tensor attended_;     // [N*K, dim]
  std::vector<int> feat_shape_;
};

// The color-quantization reconstruction network (pixel mapping + palette).
class RecolorNet : public nn::Module {
 public:
  explicit RecolorNet(const RecolorConfig& cfg);

  RecolorConfig config;

 private:
  Rng init_rng_;  // consumed by the sub-networks below during construction

 public:
  PixelMappingEncoder encoder;
  PaletteAcquisition palette;

  struct Forward {
    Tensor activations;  // [N,K,H,W]
    Tensor palette;      // [N,K,3]
    Tensor image;        // [N,3,H,W]
    Tensor softmax;      // train path cache
    ForwardMode mode = ForwardMode::train;
  };

  // Full forward pass. Train path keeps caches for backward().
  Forward forward(const Tensor& x, ForwardMode mode);
  // g_image: [N,3,H,W] gradient w.r.t. the reconstruction; accumulates into
  // all parameters and returns nothing (input gradients are not needed).
  void backward(const Forward& f, const Tensor& g_image);

  void collect_params(std::vector<nn::Param*>& out) override;
  void collect_buffers(std::vector<nn::Param*>& out) override;
  void set_train(bool t) override;
};

// Convenience single-image wrappers ([C,H,W] in, [C,H,W] out).
Tensor encode_activation(RecolorNet& net, const Tensor& image);
Tensor acquire_palette(RecolorNet& net, const Tensor& image);
Tensor recolor_forward(RecolorNet& net, const Tensor& image, ForwardMode mode);

Tensor unsqueeze0(const Tensor& t);
Tensor squeeze0(const Tensor& t);

}  // namespace recolor

#endif  // RECOLOR_RECOLOR_NET_HPP
