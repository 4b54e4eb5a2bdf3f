#include "cisfa/nets.hpp"

#include <algorithm>

#include "cisfa/errors.hpp"

namespace cisfa::nets {

namespace F = torch::nn::functional;

Tap Tap::parse(const std::string& s) {
  if (s == "input") return input();
  if (s == "down1") return down1();
  if (s == "down2") return down2();
  if (s.rfind("res", 0) == 0) {
    try {
      return resblock(std::stoi(s.substr(3)));
    } catch (const std::exception&) {
    }
  }
  throw InvalidMode("unknown feature tap '" + s + "'");
}

std::string Tap::str() const {
  switch (kind) {
    case Kind::input: return "input";
    case Kind::down1: return "down1";
    case Kind::down2: return "down2";
    case Kind::resblock: return "res" + std::to_string(index);
  }
  return "input";
}

std::vector<Tap> default_taps(int n_resblocks) {
  return {Tap::input(), Tap::down1(), Tap::down2(), Tap::resblock(0),
          Tap::resblock(std::min(4, std::max(0, n_resblocks - 1)))};
}

GeneratorSpec GeneratorSpec::paper_scale() { return {64, 9, default_taps(9)}; }
GeneratorSpec GeneratorSpec::desk_scale() { return {16, 4, default_taps(4)}; }

int tap_channels(const GeneratorSpec& spec, const Tap& tap) {
  switch (tap.kind) {
    case Tap::Kind::input: return 1;
    case Tap::Kind::down1: return 2 * spec.base_channels;
    case Tap::Kind::down2:
    case Tap::Kind::resblock: return 4 * spec.base_channels;
  }
  return 1;
}

void init_weights(torch::nn::Module& module, double std) {
  torch::NoGradGuard guard;
  for (auto& m : module.modules(/*include_self=*/false)) {
    auto init = [&](torch::Tensor& w, torch::Tensor& b) {
      w.normal_(0.0, std);
      if (b.defined()) b.zero_();
    };
    if (auto* c = m->as<torch::nn::Conv2d>()) {
      init(c->weight, c->bias);
    } else if (auto* t = m->as<torch::nn::ConvTranspose2d>()) {
      init(t->weight, t->bias);
    } else if (auto* l = m->as<torch::nn::Linear>()) {
      init(l->weight, l->bias);
    } else if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      bn->weight.normal_(1.0, std);
      bn->bias.zero_();
    }
  }
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

// ---- generator ---------------------------------------------------------------

ResBlockImpl::ResBlockImpl(int c) {
  conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3)));
  conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3)));
  norm1 = register_module("norm1", torch::nn::InstanceNorm2d(c));
  norm2 = register_module("norm2", torch::nn::InstanceNorm2d(c));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  auto pad = F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect);
  auto h = torch::relu(norm1(conv1(F::pad(x, pad))));
  h = norm2(conv2(F::pad(h, pad)));
  return x + h;
}

GeneratorImpl::GeneratorImpl(GeneratorSpec s) : spec(std::move(s)) {
  const int b = spec.base_channels;
  if (b < 1 || spec.n_resblocks < 1) throw InvalidMode("generator needs base_channels >= 1 and >= 1 resblock");
  for (const auto& t : spec.feature_layers)
    if (t.kind == Tap::Kind::resblock && (t.index < 0 || t.index >= spec.n_resblocks))
      throw InvalidMode("tap " + t.str() + " does not exist");
  stem = register_module("stem", torch::nn::Conv2d(torch::nn::Conv2dOptions(1, b, 7)));
  stem_norm = register_module("stem_norm", torch::nn::InstanceNorm2d(b));
  down1 = register_module("down1", torch::nn::Conv2d(torch::nn::Conv2dOptions(b, 2 * b, 3).stride(2).padding(1)));
  down1_norm = register_module("down1_norm", torch::nn::InstanceNorm2d(2 * b));
  down2 = register_module("down2", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * b, 4 * b, 3).stride(2).padding(1)));
  down2_norm = register_module("down2_norm", torch::nn::InstanceNorm2d(4 * b));
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < spec.n_resblocks; ++i) blocks->push_back(ResBlock(4 * b));
  up1 = register_module("up1", torch::nn::ConvTranspose2d(
                                   torch::nn::ConvTranspose2dOptions(4 * b, 2 * b, 3).stride(2).padding(1).output_padding(1)));
  up1_norm = register_module("up1_norm", torch::nn::InstanceNorm2d(2 * b));
  up2 = register_module("up2", torch::nn::ConvTranspose2d(
                                   torch::nn::ConvTranspose2dOptions(2 * b, b, 3).stride(2).padding(1).output_padding(1)));
  up2_norm = register_module("up2_norm", torch::nn::InstanceNorm2d(b));
  out = register_module("out", torch::nn::Conv2d(torch::nn::Conv2dOptions(b, 1, 7)));
  init_weights(*this);
}

void GeneratorImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 1) throw ShapeError("generator expects B×1×H×W input");
  if (x.size(2) % 4 != 0 || x.size(3) % 4 != 0) throw ShapeError("generator input H and W must be divisible by 4");
}

namespace {
torch::Tensor reflect3(const torch::Tensor& x) {
  return F::pad(x, F::PadFuncOptions({3, 3, 3, 3}).mode(torch::kReflect));
}

int tap_depth(const Tap& t) {
  switch (t.kind) {
    case Tap::Kind::input: return 0;
    case Tap::Kind::down1: return 1;
    case Tap::Kind::down2: return 2;
    case Tap::Kind::resblock: return 3 + t.index;
  }
  return 0;
}
}  // namespace

std::vector<torch::Tensor> GeneratorImpl::encode(const torch::Tensor& x, const std::vector<Tap>& taps) {
  check_input(x);
  std::vector<torch::Tensor> feats(taps.size());
  int deepest = -1;
  for (const auto& t : taps) deepest = std::max(deepest, tap_depth(t));
  auto record = [&](int depth, const torch::Tensor& h) {
    for (std::size_t i = 0; i < taps.size(); ++i)
      if (tap_depth(taps[i]) == depth) feats[i] = h;
  };
  record(0, x);
  if (deepest < 1) return feats;
  auto h = torch::relu(stem_norm(stem(reflect3(x))));
  h = torch::relu(down1_norm(down1(h)));
  record(1, h);
  if (deepest < 2) return feats;
  h = torch::relu(down2_norm(down2(h)));
  record(2, h);
  for (int i = 0; i < spec.n_resblocks && 3 + i <= deepest; ++i) {
    h = blocks[i]->as<ResBlock>()->forward(h);
    record(3 + i, h);
  }
  return feats;
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& x, const std::vector<Tap>& taps) {
  check_input(x);
  GeneratorOutput o;
  o.features.resize(taps.size());
  auto record = [&](int depth, const torch::Tensor& h) {
    for (std::size_t i = 0; i < taps.size(); ++i)
      if (tap_depth(taps[i]) == depth) o.features[i] = h;
  };
  record(0, x);
  auto h = torch::relu(stem_norm(stem(reflect3(x))));
  h = torch::relu(down1_norm(down1(h)));
  record(1, h);
  h = torch::relu(down2_norm(down2(h)));
  record(2, h);
  for (int i = 0; i < spec.n_resblocks; ++i) {
    h = blocks[i]->as<ResBlock>()->forward(h);
    record(3 + i, h);
  }
  h = torch::relu(up1_norm(up1(h)));
  h = torch::relu(up2_norm(up2(h)));
  o.image = out(reflect3(h));
  return o;
}

std::vector<torch::Tensor> GeneratorImpl::encoder_parameters() const {
  std::vector<torch::Tensor> ps;
  for (const auto& part : {stem->parameters(), down1->parameters(), down2->parameters(), blocks->parameters()})
    ps.insert(ps.end(), part.begin(), part.end());
  return ps;
}

// ---- segmenter ---------------------------------------------------------------

DoubleConvImpl::DoubleConvImpl(int in, int out) {
  conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(out));
  conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(out));
}

torch::Tensor DoubleConvImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(bn1(conv1(x)));
  return torch::relu(bn2(conv2(h)));
}

SegmenterImpl::SegmenterImpl(SegmenterSpec s) : spec(s) {
  if (spec.stages < 2 || spec.base_channels < 1 || spec.out_channels < 2)
    throw InvalidMode("segmenter needs >= 2 stages, base_channels >= 1 and >= 2 output channels");
  down = register_module("down", torch::nn::ModuleList());
  up = register_module("up", torch::nn::ModuleList());
  dec = register_module("dec", torch::nn::ModuleList());
  int in = 1;
  for (int i = 0; i < spec.stages; ++i) {
    const int c = spec.base_channels << i;
    down->push_back(DoubleConv(in, c));
    in = c;
  }
  for (int i = spec.stages - 2; i >= 0; --i) {
    const int c = spec.base_channels << i;
    up->push_back(torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(2 * c, c, 2).stride(2)));
    dec->push_back(DoubleConv(2 * c, c));
  }
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.base_channels, spec.out_channels, 1)));
  init_weights(*this);
}

int SegmenterImpl::global_feature_dim() const { return spec.base_channels << (spec.stages - 1); }

torch::Tensor SegmenterImpl::pad(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 1) throw ShapeError("segmenter expects B×1×H×W input");
  const std::int64_t m = std::int64_t{1} << (spec.stages - 1);
  const std::int64_t ph = (m - x.size(2) % m) % m, pw = (m - x.size(3) % m) % m;
  if (ph == 0 && pw == 0) return x;
  return F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
}

std::vector<torch::Tensor> SegmenterImpl::run_encoder(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips;
  auto h = x;
  for (int i = 0; i < spec.stages; ++i) {
    if (i > 0) h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
    h = down[i]->as<DoubleConv>()->forward(h);
    skips.push_back(h);
  }
  return skips;
}

torch::Tensor SegmenterImpl::forward(const torch::Tensor& x) {
  const auto padded = pad(x);
  auto skips = run_encoder(padded);
  auto h = skips.back();
  for (int j = 0; j < spec.stages - 1; ++j) {
    const int level = spec.stages - 2 - j;
    h = up[j]->as<torch::nn::ConvTranspose2d>()->forward(h);
    h = dec[j]->as<DoubleConv>()->forward(torch::cat({skips[level], h}, 1));
  }
  auto logits = head(h);
  if (padded.size(2) != x.size(2) || padded.size(3) != x.size(3))
    logits = logits.narrow(2, 0, x.size(2)).narrow(3, 0, x.size(3));
  return logits;
}

torch::Tensor SegmenterImpl::encode_global(const torch::Tensor& x) {
  auto skips = run_encoder(pad(x));
  return skips.back().mean({2, 3});
}

std::vector<torch::Tensor> SegmenterImpl::encoder_parameters() const {
  return down->parameters();
}

// ---- discriminator -----------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorSpec s) : spec(s) {
  if (spec.layers < 1 || spec.in_channels < 1 || spec.base_channels < 1) throw InvalidMode("invalid discriminator spec");
  convs = register_module("convs", torch::nn::ModuleList());
  norms = register_module("norms", torch::nn::ModuleList());
  int in = spec.in_channels;
  for (int i = 0; i < spec.layers; ++i) {
    const bool last = i == spec.layers - 1;
    const int out = last ? 1 : spec.base_channels << i;
    convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    if (i > 0 && !last) norms->push_back(torch::nn::InstanceNorm2d(out));
    in = out;
  }
  init_weights(*this);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != spec.in_channels)
    throw ShapeError("discriminator expects " + std::to_string(spec.in_channels) + " input channels");
  auto h = x;
  for (int i = 0; i < spec.layers; ++i) {
    h = convs[i]->as<torch::nn::Conv2d>()->forward(h);
    if (i == spec.layers - 1) break;
    if (i > 0) h = norms[i - 1]->as<torch::nn::InstanceNorm2d>()->forward(h);
    h = F::leaky_relu(h, F::LeakyReLUFuncOptions().negative_slope(0.2));
  }
  return h;
}

// ---- projection head ---------------------------------------------------------

ProjectionHeadImpl::ProjectionHeadImpl(int in, ProjectionHeadSpec s) : in_dim(in), spec(s) {
  if (spec.depth != 2) throw InvalidMode("projection heads have depth 2");
  mlp = register_module("mlp", torch::nn::Sequential(torch::nn::Linear(in_dim, spec.hidden_dim), torch::nn::ReLU(),
                                                      torch::nn::Linear(spec.hidden_dim, spec.out_dim)));
  init_weights(*this);
}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& x) { return mlp->forward(x); }

}  // namespace cisfa::nets
