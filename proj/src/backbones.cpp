// SPDX-License-Identifier: Apache-2.0
#include "gssl/backbones.hpp"

#include <string>

#include "gssl/errors.hpp"

namespace gssl::nn {

BackboneSpec backbone_spec(BackboneKind kind) noexcept {
  switch (kind) {
    case BackboneKind::ResNet32Cifar: return {kind, 64};
    case BackboneKind::ResNet18: return {kind, 512};
    case BackboneKind::TinyCnn: return {kind, 512};
  }
  return {kind, 0};
}

std::string_view backbone_name(BackboneKind kind) noexcept {
  switch (kind) {
    case BackboneKind::ResNet32Cifar: return "resnet32-cifar";
    case BackboneKind::ResNet18: return "resnet18";
    case BackboneKind::TinyCnn: return "tinycnn";
  }
  return "?";
}

std::optional<BackboneKind> parse_backbone(std::string_view name) {
  if (name == "resnet32-cifar" || name == "resnet32") return BackboneKind::ResNet32Cifar;
  if (name == "resnet18") return BackboneKind::ResNet18;
  if (name == "tinycnn") return BackboneKind::TinyCnn;
  return std::nullopt;
}

namespace {

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

struct ConvBn {
  Conv2d conv;
  BatchNorm2d bn;

  ConvBn() = default;
  ConvBn(const std::string& name, int in, int out, int kernel, int stride, int pad)
      : conv(name + ".conv", in, out, kernel, stride, pad), bn(name + ".bn", out) {}

  void init(std::uint64_t seed) { conv.init(seed); }
  Tensor forward(const Tensor& x, Mode mode) { return bn.forward(conv.forward(x), mode); }
  Tensor backward(const Tensor& g, bool need_input_grad = true) {
    return conv.backward(bn.backward(g), need_input_grad);
  }
  void collect(std::vector<Parameter*>& p) {
    conv.collect(p);
    bn.collect(p);
  }
  void collect_buffers(std::vector<Buffer>& b) { bn.collect_buffers(b); }
};

enum class Shortcut { Identity, PadSubsample, Projection };

/// conv-bn-relu-conv-bn plus shortcut, then relu.
class BasicBlock {
 public:
  BasicBlock(const std::string& name, int in, int planes, int stride, bool projection)
      : in_(in), planes_(planes), stride_(stride),
        c1_(name + ".1", in, planes, 3, stride, 1),
        c2_(name + ".2", planes, planes, 3, 1, 1) {
    if (stride == 1 && in == planes) {
      shortcut_ = Shortcut::Identity;
    } else if (projection) {
      shortcut_ = Shortcut::Projection;
      proj_ = ConvBn(name + ".shortcut", in, planes, 1, stride, 0);
    } else {
      shortcut_ = Shortcut::PadSubsample;
    }
  }

  void init(std::uint64_t seed) {
    c1_.init(seed);
    c2_.init(seed);
    if (shortcut_ == Shortcut::Projection) proj_.init(seed);
  }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor h = relu1_.forward(c1_.forward(x, mode));
    h = c2_.forward(h, mode);
    Tensor s;
    switch (shortcut_) {
      case Shortcut::Identity: s = x; break;
      case Shortcut::Projection: s = proj_.forward(x, mode); break;
      case Shortcut::PadSubsample: s = pad_subsample(x); break;
    }
    in_shape_ = x.shape();
    return relu_out_.forward(add(h, s));
  }

  Tensor backward(const Tensor& grad) {
    const Tensor g = relu_out_.backward(grad);
    Tensor dx = c1_.backward(relu1_.backward(c2_.backward(g)));
    switch (shortcut_) {
      case Shortcut::Identity: dx = add(dx, g); break;
      case Shortcut::Projection: dx = add(dx, proj_.backward(g)); break;
      case Shortcut::PadSubsample: dx = add(dx, pad_subsample_backward(g)); break;
    }
    return dx;
  }

  void collect(std::vector<Parameter*>& p) {
    c1_.collect(p);
    c2_.collect(p);
    if (shortcut_ == Shortcut::Projection) proj_.collect(p);
  }
  void collect_buffers(std::vector<Buffer>& b) {
    c1_.collect_buffers(b);
    c2_.collect_buffers(b);
    if (shortcut_ == Shortcut::Projection) proj_.collect_buffers(b);
  }

 private:
  // Parameter-free shortcut: spatial subsample by the stride, then zero-pad
  // channels equally on both sides up to `planes`.
  Tensor pad_subsample(const Tensor& x) const {
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = (h + stride_ - 1) / stride_, ow = (w + stride_ - 1) / stride_;
    const int lead = (planes_ - in_) / 2;
    Tensor y({b, planes_, oh, ow});
    for (int n = 0; n < b; ++n)
      for (int c = 0; c < in_; ++c)
        for (int yy = 0; yy < oh; ++yy)
          for (int xx = 0; xx < ow; ++xx)
            y[((static_cast<std::size_t>(n) * planes_ + c + lead) * oh + yy) * ow + xx] =
                x[((static_cast<std::size_t>(n) * in_ + c) * h + yy * stride_) * w + xx * stride_];
    return y;
  }

  Tensor pad_subsample_backward(const Tensor& g) const {
    const int b = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
    const int oh = g.dim(2), ow = g.dim(3);
    const int lead = (planes_ - in_) / 2;
    Tensor dx(in_shape_);
    for (int n = 0; n < b; ++n)
      for (int c = 0; c < in_; ++c)
        for (int yy = 0; yy < oh; ++yy)
          for (int xx = 0; xx < ow; ++xx)
            dx[((static_cast<std::size_t>(n) * in_ + c) * h + yy * stride_) * w + xx * stride_] =
                g[((static_cast<std::size_t>(n) * planes_ + c + lead) * oh + yy) * ow + xx];
    return dx;
  }

  int in_, planes_, stride_;
  Shortcut shortcut_ = Shortcut::Identity;
  ConvBn c1_, c2_, proj_;
  ReLU relu1_, relu_out_;
  std::vector<int> in_shape_;
};

void require_images(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != 3)
    throw ShapeError("backbone expects (B,3,H,W) images, got " + shape_string(x.shape()));
  if (x.dim(2) < 2 || x.dim(3) < 2) throw ShapeError("backbone input must be at least 2x2");
}

/// 3 stages x 5 basic blocks, widths 16/32/64, option-A shortcuts.
class ResNet32Cifar final : public Backbone {
 public:
  explicit ResNet32Cifar(std::uint64_t seed) : stem_("backbone.stem", 3, 16, 3, 1, 1) {
    const int widths[3] = {16, 32, 64};
    int in = 16;
    for (int s = 0; s < 3; ++s) {
      for (int b = 0; b < 5; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        blocks_.emplace_back("backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b), in, widths[s],
                             stride, false);
        in = widths[s];
      }
    }
    stem_.init(seed);
    for (auto& b : blocks_) b.init(seed);
  }

  BackboneKind kind() const noexcept override { return BackboneKind::ResNet32Cifar; }

  Tensor forward(const Tensor& x, Mode mode) override {
    require_images(x);
    Tensor h = relu_.forward(stem_.forward(x, mode));
    for (auto& b : blocks_) h = b.forward(h, mode);
    return pool_.forward(h);
  }

  void backward(const Tensor& g) override {
    Tensor h = pool_.backward(g);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) h = it->backward(h);
    stem_.backward(relu_.backward(h), false);
  }

  void collect(std::vector<Parameter*>& p) override {
    stem_.collect(p);
    for (auto& b : blocks_) b.collect(p);
  }
  void collect_buffers(std::vector<Buffer>& bufs) override {
    stem_.collect_buffers(bufs);
    for (auto& b : blocks_) b.collect_buffers(bufs);
  }

 private:
  ConvBn stem_;
  ReLU relu_;
  std::vector<BasicBlock> blocks_;
  GlobalAvgPool pool_;
};

/// Standard ResNet-18: 7x7/2 stem, 3x3/2 max pool, 4 stages of 2 blocks.
class ResNet18 final : public Backbone {
 public:
  explicit ResNet18(std::uint64_t seed) : stem_("backbone.stem", 3, 64, 7, 2, 3) {
    const int widths[4] = {64, 128, 256, 512};
    int in = 64;
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < 2; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        blocks_.emplace_back("backbone.layer" + std::to_string(s + 1) + ".block" + std::to_string(b), in, widths[s],
                             stride, true);
        in = widths[s];
      }
    }
    stem_.init(seed);
    for (auto& b : blocks_) b.init(seed);
  }

  BackboneKind kind() const noexcept override { return BackboneKind::ResNet18; }

  Tensor forward(const Tensor& x, Mode mode) override {
    require_images(x);
    Tensor h = pool0_.forward(relu_.forward(stem_.forward(x, mode)));
    for (auto& b : blocks_) h = b.forward(h, mode);
    return pool_.forward(h);
  }

  void backward(const Tensor& g) override {
    Tensor h = pool_.backward(g);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) h = it->backward(h);
    stem_.backward(relu_.backward(pool0_.backward(h)), false);
  }

  void collect(std::vector<Parameter*>& p) override {
    stem_.collect(p);
    for (auto& b : blocks_) b.collect(p);
  }
  void collect_buffers(std::vector<Buffer>& bufs) override {
    stem_.collect_buffers(bufs);
    for (auto& b : blocks_) b.collect_buffers(bufs);
  }

 private:
  ConvBn stem_;
  ReLU relu_;
  MaxPool2d pool0_;
  std::vector<BasicBlock> blocks_;
  GlobalAvgPool pool_;
};

/// Two conv-bn-relu blocks (3->16->8) and a per-quadrant average pool,
/// giving D = 8 * 4 = 32. Small enough for desk-scale runs.
class TinyCnn final : public Backbone {
 public:
  explicit TinyCnn(std::uint64_t seed)
      : b1_("backbone.block1", 3, 16, 3, 1, 1), b2_("backbone.block2", 16, 32, 3, 1, 1) {
    b1_.init(seed);
    b2_.init(seed);
  }

  BackboneKind kind() const noexcept override { return BackboneKind::TinyCnn; }

  Tensor forward(const Tensor& x, Mode mode) override {
    require_images(x);
    Tensor h = r1_.forward(b1_.forward(x, mode));
    h = r2_.forward(b2_.forward(h, mode));
    return pool_.forward(h);
  }

  void backward(const Tensor& g) override {
    Tensor h = b2_.backward(r2_.backward(pool_.backward(g)));
    b1_.backward(r1_.backward(h), false);
  }

  void collect(std::vector<Parameter*>& p) override {
    b1_.collect(p);
    b2_.collect(p);
  }
  void collect_buffers(std::vector<Buffer>& bufs) override {
    b1_.collect_buffers(bufs);
    b2_.collect_buffers(bufs);
  }

 private:
  ConvBn b1_, b2_;
  ReLU r1_, r2_;
  GridAvgPool pool_{4};
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(BackboneKind kind, std::uint64_t seed) {
  switch (kind) {
    case BackboneKind::ResNet32Cifar: return std::make_unique<ResNet32Cifar>(seed);
    case BackboneKind::ResNet18: return std::make_unique<ResNet18>(seed);
    case BackboneKind::TinyCnn: return std::make_unique<TinyCnn>(seed);
  }
  throw ConfigError("unknown backbone");
}

}  // namespace gssl::nn
