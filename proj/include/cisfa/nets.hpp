#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace cisfa::nets {

/// Feature tap inside the generator encoder.
struct Tap {
  enum class Kind { input, down1, down2, resblock };
  Kind kind = Kind::input;
  int index = 0;  // resblock index (0-based) for Kind::resblock

  static Tap input() { return {Kind::input, 0}; }
  static Tap down1() { return {Kind::down1, 0}; }
  static Tap down2() { return {Kind::down2, 0}; }
  static Tap resblock(int i) { return {Kind::resblock, i}; }
  static Tap parse(const std::string& s);
  std::string str() const;
  bool operator==(const Tap&) const = default;
};

/// Raw input, both downsampling outputs, the first residual block and the
/// fifth (or last, when fewer exist).
std::vector<Tap> default_taps(int n_resblocks);

struct GeneratorSpec {
  int base_channels = 16;
  int n_resblocks = 4;
  std::vector<Tap> feature_layers = default_taps(4);

  static GeneratorSpec paper_scale();
  static GeneratorSpec desk_scale();
};

struct SegmenterSpec {
  int stages = 4;
  int base_channels = 16;
  int out_channels = 3;  // classes + background
};

struct DiscriminatorSpec {
  int layers = 3;
  int in_channels = 1;
  int base_channels = 64;
};

struct ProjectionHeadSpec {
  int out_dim = 128;
  int hidden_dim = 256;
  int depth = 2;
};

/// Channels produced at a tap.
int tap_channels(const GeneratorSpec& spec, const Tap& tap);

/// N(0, 0.02) on conv/linear weights, zero biases, BN scale N(1, 0.02).
void init_weights(torch::nn::Module& module, double std = 0.02);

std::int64_t parameter_count(const torch::nn::Module& module);

struct ResBlockImpl : torch::nn::Module {
  explicit ResBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ResBlock);

struct GeneratorOutput {
  torch::Tensor image;
  std::vector<torch::Tensor> features;  // one per requested tap, in request order
};

/// ResNet-style translator: 7×7 stem, two stride-2 convolutions, residual
/// blocks, two transpose convolutions, 7×7 output conv. The encoder half
/// (stem through the residual blocks) is G_enc.
struct GeneratorImpl : torch::nn::Module {
  explicit GeneratorImpl(GeneratorSpec spec);

  /// Throws ShapeError unless x is B×1×H×W with H, W divisible by 4.
  GeneratorOutput forward(const torch::Tensor& x, const std::vector<Tap>& taps = {});
  /// Encoder-only pass that stops at the deepest requested tap.
  std::vector<torch::Tensor> encode(const torch::Tensor& x, const std::vector<Tap>& taps);
  /// Parameters of G_enc (stem, downsampling, residual blocks).
  std::vector<torch::Tensor> encoder_parameters() const;

  GeneratorSpec spec;
  torch::nn::Conv2d stem{nullptr}, down1{nullptr}, down2{nullptr}, out{nullptr};
  torch::nn::InstanceNorm2d stem_norm{nullptr}, down1_norm{nullptr}, down2_norm{nullptr}, up1_norm{nullptr},
      up2_norm{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr};

 private:
  void check_input(const torch::Tensor& x) const;
};
TORCH_MODULE(Generator);

struct DoubleConvImpl : torch::nn::Module {
  DoubleConvImpl(int in, int out);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(DoubleConv);

/// U-Net with `stages` resolution levels and skip connections. Inputs whose
/// size is not a multiple of 2^(stages−1) are replicate-padded internally and
/// the output cropped back.
struct SegmenterImpl : torch::nn::Module {
  explicit SegmenterImpl(SegmenterSpec spec);

  torch::Tensor forward(const torch::Tensor& x);
  /// Global-average-pooled bottleneck of the downsampling path: B × (base·2^(stages−1)).
  torch::Tensor encode_global(const torch::Tensor& x);
  std::vector<torch::Tensor> encoder_parameters() const;
  int global_feature_dim() const;

  SegmenterSpec spec;
  torch::nn::ModuleList down{nullptr}, up{nullptr}, dec{nullptr};
  torch::nn::Conv2d head{nullptr};

 private:
  std::vector<torch::Tensor> run_encoder(const torch::Tensor& x);
  torch::Tensor pad(const torch::Tensor& x) const;
};
TORCH_MODULE(Segmenter);

/// PatchGAN-style critic: `layers` stride-2 4×4 convolutions, leaky-ReLU(0.2),
/// instance norm on the hidden layers, raw single-channel score map out.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(DiscriminatorSpec spec);
  torch::Tensor forward(const torch::Tensor& x);

  DiscriminatorSpec spec;
  torch::nn::ModuleList convs{nullptr};
  torch::nn::ModuleList norms{nullptr};
};
TORCH_MODULE(Discriminator);

/// Linear → ReLU → Linear (depth 2).
struct ProjectionHeadImpl : torch::nn::Module {
  ProjectionHeadImpl(int in_dim, ProjectionHeadSpec spec);
  torch::Tensor forward(const torch::Tensor& x);

  int in_dim;
  ProjectionHeadSpec spec;
  torch::nn::Sequential mlp{nullptr};
};
TORCH_MODULE(ProjectionHead);

}  // namespace cisfa::nets
