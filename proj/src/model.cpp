// SPDX-License-Identifier: Apache-2.0
#include "gssl/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gssl/errors.hpp"

namespace gssl::nn {

GatedModel GatedModel::assemble(BackboneKind backbone, int num_classes, std::vector<transforms::TaskKind> tasks,
                                std::uint64_t seed) {
  if (tasks.empty()) throw ConfigError("at least one pretext task is required");
  std::set<transforms::TaskKind> seen;
  for (auto t : tasks) {
    if (!seen.insert(t).second)
      throw ConfigError("duplicate pretext task: " + std::string(transforms::task_name(t)));
  }
  if (num_classes < 2) throw ConfigError("need at least two classes");

  GatedModel m;
  m.backbone_ = make_backbone(backbone, seed);
  const int d = m.backbone_->feature_dim();
  m.classifier_ = NormedLinear("classifier", d, num_classes);
  m.classifier_.init(seed);
  for (auto t : tasks) {
    Linear head("ssl_heads." + std::string(transforms::task_name(t)), d, transforms::label_cardinality(t));
    head.init(seed);
    m.ssl_heads_.push_back(std::move(head));
  }
  m.gate_ = Linear("gate", d, static_cast<int>(tasks.size()));
  m.gate_.weight().value.zero();
  m.gate_.bias().value.zero();
  m.tasks_ = std::move(tasks);
  m.num_classes_ = num_classes;
  m.seed_ = seed;
  return m;
}

ForwardOutput GatedModel::forward(const Tensor& images, Mode mode) {
  ForwardOutput out;
  out.features = backbone_->forward(images, mode);
  out.class_logits = classifier_.forward(out.features);
  for (auto& h : ssl_heads_) out.ssl_logits.push_back(h.forward(out.features));
  out.gate_logits = gate_.forward(out.features);
  return out;
}

void GatedModel::backward(const ForwardGrads& grads, bool detach_gate_input) {
  if (grads.ssl_logits.size() != ssl_heads_.size())
    throw ShapeError("expected gradients for " + std::to_string(ssl_heads_.size()) + " pretext heads");
  Tensor dx = classifier_.backward(grads.class_logits);
  for (std::size_t n = 0; n < ssl_heads_.size(); ++n) {
    const Tensor g = ssl_heads_[n].backward(grads.ssl_logits[n]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  }
  if (detach_gate_input) {
    gate_.backward(grads.gate_logits, false);
  } else {
    const Tensor g = gate_.backward(grads.gate_logits);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  }
  backbone_->backward(dx);
}

std::vector<Parameter*> GatedModel::parameters() {
  std::vector<Parameter*> p;
  backbone_->collect(p);
  classifier_.collect(p);
  for (auto& h : ssl_heads_) h.collect(p);
  gate_.collect(p);
  return p;
}

std::vector<Buffer> GatedModel::buffers() {
  std::vector<Buffer> b;
  backbone_->collect_buffers(b);
  return b;
}

void GatedModel::zero_grad() {
  for (auto* p : parameters()) p->grad.zero();
}

std::map<std::string, Tensor> GatedModel::state() {
  std::map<std::string, Tensor> s;
  for (auto* p : parameters()) s[p->name] = p->value;
  for (auto& b : buffers()) s[b.name] = *b.tensor;
  return s;
}

void GatedModel::load_state(const std::map<std::string, Tensor>& state) {
  auto restore = [&](const std::string& name, Tensor& dst) {
    auto it = state.find(name);
    if (it == state.end()) throw ShapeError("checkpoint is missing tensor " + name);
    if (!it->second.same_shape(dst))
      throw ShapeError("tensor " + name + " has shape " + shape_string(it->second.shape()) + ", model expects " +
                       shape_string(dst.shape()));
    dst = it->second;
  };
  for (auto* p : parameters()) restore(p->name, p->value);
  for (auto& b : buffers()) restore(b.name, *b.tensor);
}

// ---------------------------------------------------------------------------

Tensor gate_distribution(const Tensor& gate_logits) {
  if (gate_logits.rank() != 2) throw ShapeError("gate logits must be (B,t)");
  Tensor g(gate_logits.shape());
  for (int i = 0; i < gate_logits.rows(); ++i) {
    auto in = gate_logits.row(i);
    for (double v : in) {
      if (!std::isfinite(v)) throw NumericError("non-finite gate logit in row " + std::to_string(i));
    }
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    auto out = g.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    for (auto& v : out) v /= z;
  }
  return g;
}

Tensor gate_distribution_backward(const Tensor& gate, const Tensor& grad_gate) {
  if (!gate.same_shape(grad_gate)) throw ShapeError("gate and its gradient differ in shape");
  Tensor d(gate.shape());
  for (int i = 0; i < gate.rows(); ++i) {
    double dot = 0.0;
    for (int j = 0; j < gate.cols(); ++j) dot += gate.at(i, j) * grad_gate.at(i, j);
    for (int j = 0; j < gate.cols(); ++j) d.at(i, j) = gate.at(i, j) * (grad_gate.at(i, j) - dot);
  }
  return d;
}

}  // namespace gssl::nn
