// SPDX-License-Identifier: Apache-2.0
#include "gssl/selftest.hpp"

#include <cmath>
#include <sstream>

#include "gssl/model.hpp"
#include "gssl/oracles.hpp"
#include "gssl/rng.hpp"
#include "gssl/transforms.hpp"

namespace gssl::selftest {

namespace {

using transforms::TaskKind;

struct Check {
  bool ok = true;
  std::ostringstream why;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why << what;
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(12);
    s << what << ": got " << got << ", expected " << want << " (tol " << tol << ")";
    expect(std::abs(got - want) <= tol, s.str());
  }
};

Tensor random_matrix(Rng& rng, int rows, int cols, double scale) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

std::vector<int> random_labels(Rng& rng, int n, int classes) {
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int& v : out) v = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(classes)));
  return out;
}

Tensor from_span(std::span<const double> p, int rows, int cols) {
  Tensor t({rows, cols});
  std::copy(p.begin(), p.end(), t.data());
  return t;
}

void check_transforms(Check& c) {
  const auto img = oracle::distinct_image(6, 6);
  const std::pair<TaskKind, int> expected[] = {
      {TaskKind::LorotE, 16}, {TaskKind::QuadFlip, 2}, {TaskKind::ChannelShuffle, 6}};
  for (auto [task, n] : expected) {
    const std::string name(transforms::task_name(task));
    auto outs = oracle::enumerate_outcomes(task, img, 3);
    c.expect(static_cast<int>(outs.size()) == n && transforms::label_cardinality(task) == n,
             name + ": wrong outcome count");
    if (task == TaskKind::LorotE)
      c.expect(oracle::lorot_structure_holds(outs, img), name + ": unexpected outcome structure");
    else
      c.expect(oracle::outcomes_decodable(outs), name + ": outcomes not pairwise distinct");
    for (const auto& o : outs) {
      auto t = [&] {
        switch (task) {
          case TaskKind::LorotE:
            return transforms::make_outcome(task, transforms::QuadrantId(o.label / 4),
                                            transforms::RotationStep(o.label % 4));
          case TaskKind::QuadFlip:
            return transforms::make_outcome(task, transforms::QuadrantId(3), o.label == 1);
          case TaskKind::ChannelShuffle:
            break;
        }
        return transforms::make_outcome(task, transforms::QuadrantId(3), transforms::Permutation3(o.label));
      }();
      auto got = transforms::apply_outcome(img, t);
      c.expect(got.label == o.label && got.image == o.image,
               name + ": transform disagrees with oracle for label " + std::to_string(o.label));
    }
  }
}

void check_gate(Check& c, const Targets& t) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const int b = 1 + static_cast<int>(rng.uniform_int(4));
    const int k = 1 + static_cast<int>(rng.uniform_int(4));
    auto g = t.gate_distribution(random_matrix(rng, b, k, 20.0));
    for (int i = 0; i < b; ++i) {
      double s = 0.0;
      for (double v : g.row(i)) s += v;
      if (std::abs(s - 1.0) > 1e-6) {
        c.near(s, 1.0, 1e-6, "gate row sum");
        return;
      }
    }
  }
  auto u = t.gate_distribution(Tensor({2, 3}));
  for (double v : u.values()) c.expect(v == 1.0 / 3.0, "zero logits must give exactly 1/3");
}

void check_margins(Check& c, const Targets& t) {
  const std::vector<int> counts{1000, 16};
  auto m = t.ldam_margins(counts, 0.5, 30.0);
  c.expect(m.deltas.size() == 2, "wrong margin count");
  if (!c.ok) return;
  c.near(m.deltas[0], 0.17783, 1e-4, "delta for n=1000");
  c.near(m.deltas[1], 0.5, 1e-4, "delta for n=16");
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> n(2 + rng.uniform_int(8));
    for (int& v : n) v = 1 + static_cast<int>(rng.uniform_int(5000));
    auto got = t.ldam_margins(n, 0.5, 30.0);
    auto want = oracle::ldam_margin_oracle(n, 0.5L);
    for (std::size_t j = 0; j < n.size(); ++j) c.near(got.deltas[j], static_cast<double>(want[j]), 1e-12, "delta");
  }
  auto bal = t.ldam_margins(std::vector<int>(5, 300), 0.5, 30.0);
  for (double d : bal.deltas) c.expect(d == bal.deltas[0], "balanced counts must give equal margins");
}

void check_drw(Check& c, const Targets& t) {
  auto bal = t.drw_weights(std::vector<int>(4, 123), 0.9999);
  for (double w : bal.weights) c.expect(w == 1.0, "balanced counts must give weights exactly 1");
  const std::vector<int> counts{5000, 50};
  auto w = t.drw_weights(counts, 0.9999);
  c.near(w.weights[1] / w.weights[0], 78.89, 0.1, "tail/head weight ratio");
  auto raw = oracle::drw_raw_oracle(counts, 0.9999L);
  c.near(w.weights[1] / w.weights[0], static_cast<double>(raw[1] / raw[0]), 1e-9, "ratio vs oracle");
  c.near(w.weights[0] + w.weights[1], 2.0, 1e-12, "weights mean 1");
}

void check_task_ce(Check& c, const Targets& t) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto z = random_matrix(rng, 8, 6, 4.0);
    auto y = random_labels(rng, 8, 6);
    auto r = t.task_ce(z, y);
    for (int i = 0; i < 8; ++i)
      c.near(r.per_sample[i], static_cast<double>(oracle::ce_oracle(z.row(i), y[i])), 1e-10, "task_ce vs oracle");
  }
  auto u = t.task_ce(Tensor({1, 16}), std::vector<int>{3});
  c.near(u.per_sample[0], std::log(16.0), 1e-12, "uniform 16-way loss");
}

void check_ldam_loss(Check& c, const Targets& t) {
  Rng rng(9);
  const std::vector<int> counts{900, 300, 60, 20, 5};
  for (int trial = 0; trial < 50; ++trial) {
    auto z = random_matrix(rng, 4, 5, 2.0);
    auto y = random_labels(rng, 4, 5);
    auto margins = t.ldam_margins(counts, 0.5, 1.0);
    margins.scale = 1.0;
    auto r = t.ldam_loss(z, y, margins, nullptr);
    long double mean = 0.0L;
    for (int i = 0; i < 4; ++i) {
      std::vector<double> shifted(z.row(i).begin(), z.row(i).end());
      shifted[y[i]] -= margins.deltas[y[i]];
      const long double ref = oracle::ce_oracle(shifted, y[i]);
      c.near(r.per_sample[i], static_cast<double>(ref), 1e-10, "ldam (s=1) vs shifted-logit oracle");
      mean += ref;
    }
    c.near(r.mean, static_cast<double>(mean / 4), 1e-10, "ldam mean");
  }
}

void check_gated(Check& c, const Targets& t) {
  auto r = t.gated_total_loss(1.0, Tensor::from_rows({{0.5, 0.5}}), {{2.0}, {4.0}}, 0.1);
  c.near(r.breakdown.l_tot, 1.3, 1e-12, "hand example");
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int b = 1 + static_cast<int>(rng.uniform_int(6));
    const int k = 1 + static_cast<int>(rng.uniform_int(3));
    auto g = t.gate_distribution(random_matrix(rng, b, k, 3.0));
    std::vector<std::vector<double>> losses(k, std::vector<double>(b));
    for (auto& l : losses)
      for (double& v : l) v = rng.uniform(0.0, 5.0);
    const double l_c = rng.uniform(0.0, 3.0);
    const double lambda = rng.uniform(0.0, 1.0);
    auto res = t.gated_total_loss(l_c, g, losses, lambda);
    long double sum = 0.0L;
    for (int n = 0; n < k; ++n) {
      long double term = 0.0L;
      for (int i = 0; i < b; ++i) term += static_cast<long double>(g.at(i, n)) * losses[n][i];
      term /= b;
      c.near(res.breakdown.per_task_gated[n], static_cast<double>(term), 1e-12, "gated term");
      sum += term;
    }
    c.near(res.breakdown.l_tot - l_c, lambda * static_cast<double>(sum), 1e-9, "composition identity");
    auto zero = t.gated_total_loss(l_c, g, losses, 0.0);
    c.expect(zero.breakdown.l_tot == l_c, "lambda=0 must reproduce l_c bit-for-bit");
  }
}

void check_profile(Check& c, const Targets& t) {
  for (double ratio : {0.01, 0.02, 0.05}) {
    auto p = t.exponential_profile(10, 5000, ratio);
    auto want = oracle::profile_oracle(10, 5000, static_cast<long double>(ratio));
    for (std::size_t j = 0; j < want.size(); ++j)
      c.expect(p.counts.size() == want.size() && p.counts[j] == want[j],
               "ratio " + std::to_string(ratio) + " class " + std::to_string(j) + " differs from oracle");
  }
}

void check_grad_calibration(Check& c) {
  const std::vector<double> coef{1.0, -2.0, 0.5, 3.0};
  auto f = [&](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += coef[i] * x[i] * x[i];
    return s;
  };
  const std::vector<double> x{0.3, -1.2, 2.0, 0.7};
  std::vector<double> g(4);
  for (int i = 0; i < 4; ++i) g[i] = 2.0 * coef[i] * x[i];
  auto r = oracle::fd_gradient("quadratic", f, x, g, 1e-4, 1e-8);
  c.expect(r.passed, "quadratic calibration: " + r.detail);
}

void check_grad_ldam(Check& c, const Targets& t) {
  Rng rng(17);
  const std::vector<int> counts{500, 120, 40, 9};
  auto margins = t.ldam_margins(counts, 0.5, 30.0);
  auto weights = t.drw_weights(counts, 0.9999);
  for (int trial = 0; trial < 10; ++trial) {
    const int b = 1 + static_cast<int>(rng.uniform_int(4));
    auto z = random_matrix(rng, b, 4, 0.3);
    auto y = random_labels(rng, b, 4);
    const loss::ClassWeights* w = trial % 2 ? &weights : nullptr;
    auto analytic = t.ldam_loss(z, y, margins, w);
    auto f = [&](std::span<const double> p) { return t.ldam_loss(from_span(p, b, 4), y, margins, w).mean; };
    auto r = oracle::fd_gradient("ldam_loss", f, {z.values().begin(), z.values().end()}, analytic.grad.values());
    c.expect(r.passed, "ldam_loss: " + r.detail);
  }
}

void check_grad_task_ce(Check& c, const Targets& t) {
  Rng rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const int b = 1 + static_cast<int>(rng.uniform_int(4));
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    auto z = random_matrix(rng, b, k, 2.0);
    auto y = random_labels(rng, b, k);
    auto analytic = t.task_ce(z, y);
    // Sum over samples so the per-row gradients stack into one vector.
    auto f = [&](std::span<const double> p) {
      double s = 0.0;
      for (double v : t.task_ce(from_span(p, b, k), y).per_sample) s += v;
      return s;
    };
    auto r = oracle::fd_gradient("task_ce", f, {z.values().begin(), z.values().end()}, analytic.grad.values());
    c.expect(r.passed, "task_ce: " + r.detail);
  }
}

void check_grad_gated(Check& c, const Targets& t) {
  Rng rng(23);
  const int sizes[] = {5, 2, 6};
  for (int trial = 0; trial < 10; ++trial) {
    const int b = 1 + static_cast<int>(rng.uniform_int(4));
    const int tasks = 1 + static_cast<int>(rng.uniform_int(3));
    const double lambda = rng.uniform(0.05, 1.0);
    const double l_c = rng.uniform(0.0, 2.0);
    auto gate_logits = random_matrix(rng, b, tasks, 2.0);
    std::vector<Tensor> ssl;
    std::vector<std::vector<int>> labels;
    for (int n = 0; n < tasks; ++n) {
      ssl.push_back(random_matrix(rng, b, sizes[n], 2.0));
      labels.push_back(random_labels(rng, b, sizes[n]));
    }
    // Flatten gate logits followed by every ssl logit block.
    std::vector<double> params(gate_logits.values().begin(), gate_logits.values().end());
    for (const auto& s : ssl) params.insert(params.end(), s.values().begin(), s.values().end());

    auto eval = [&](std::span<const double> p) {
      std::size_t off = 0;
      Tensor gl = from_span(p.subspan(off, static_cast<std::size_t>(b) * tasks), b, tasks);
      off += gl.size();
      std::vector<std::vector<double>> losses;
      for (int n = 0; n < tasks; ++n) {
        Tensor z = from_span(p.subspan(off, static_cast<std::size_t>(b) * sizes[n]), b, sizes[n]);
        off += z.size();
        losses.push_back(t.task_ce(z, labels[n]).per_sample);
      }
      return t.gated_total_loss(l_c, t.gate_distribution(gl), losses, lambda).breakdown.l_tot;
    };

    auto g = t.gate_distribution(gate_logits);
    std::vector<loss::TaskCeResult> ce;
    std::vector<std::vector<double>> losses;
    for (int n = 0; n < tasks; ++n) {
      ce.push_back(t.task_ce(ssl[n], labels[n]));
      losses.push_back(ce.back().per_sample);
    }
    auto res = t.gated_total_loss(l_c, g, losses, lambda);
    auto d_gate_logits = nn::gate_distribution_backward(g, res.grad_gate);
    std::vector<double> analytic(d_gate_logits.values().begin(), d_gate_logits.values().end());
    for (int n = 0; n < tasks; ++n) {
      for (int i = 0; i < b; ++i)
        for (double v : ce[n].grad.row(i)) analytic.push_back(v * res.grad_task_losses[n][i]);
    }
    auto r = oracle::fd_gradient("gated_total_loss", eval, params, analytic);
    c.expect(r.passed, "gated_total_loss: " + r.detail);
  }
}

void check_cifar(Check& c) {
  std::vector<std::uint8_t> bytes;
  for (int rec = 0; rec < 3; ++rec) {
    bytes.push_back(static_cast<std::uint8_t>(rec * 3));
    for (int k = 0; k < 3072; ++k) bytes.push_back(static_cast<std::uint8_t>((k * 7 + rec * 31) & 0xff));
  }
  auto d = data::parse_cifar10(bytes);
  c.expect(d.size() == 3 && d.label(2) == 6, "cifar10 labels");
  std::vector<std::uint8_t> back;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto r = data::serialize_cifar10_record(d, i);
    back.insert(back.end(), r.begin(), r.end());
  }
  c.expect(back == bytes, "cifar10 round trip");
  auto img = d.image(1);
  c.expect(img.at(0, 0, 1) == static_cast<float>((7 + 31) & 0xff) / 255.0f, "cifar10 pixel scaling");

  std::vector<std::uint8_t> b100;
  for (int rec = 0; rec < 2; ++rec) {
    b100.push_back(static_cast<std::uint8_t>(4 + rec));
    b100.push_back(static_cast<std::uint8_t>(90 + rec));
    for (int k = 0; k < 3072; ++k) b100.push_back(static_cast<std::uint8_t>((k * 13 + rec) & 0xff));
  }
  auto d100 = data::parse_cifar100(b100);
  c.expect(d100.size() == 2 && d100.label(1) == 91, "cifar100 fine labels");
  std::vector<std::uint8_t> back100;
  for (std::size_t i = 0; i < d100.size(); ++i) {
    auto r = data::serialize_cifar100_record(d100, i, static_cast<std::uint8_t>(4 + i));
    back100.insert(back100.end(), r.begin(), r.end());
  }
  c.expect(back100 == b100, "cifar100 round trip");
}

}  // namespace

Targets::Targets() : gate_distribution(nn::gate_distribution) {}

std::vector<CheckResult> run(const Targets& targets) {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> checks = {
      {"transforms", [&](Check& c) { check_transforms(c); }},
      {"gate_distribution", [&](Check& c) { check_gate(c, targets); }},
      {"ldam_margins", [&](Check& c) { check_margins(c, targets); }},
      {"drw_weights", [&](Check& c) { check_drw(c, targets); }},
      {"task_ce", [&](Check& c) { check_task_ce(c, targets); }},
      {"ldam_loss", [&](Check& c) { check_ldam_loss(c, targets); }},
      {"gated_total_loss", [&](Check& c) { check_gated(c, targets); }},
      {"exponential_profile", [&](Check& c) { check_profile(c, targets); }},
      {"grad.calibration", [&](Check& c) { check_grad_calibration(c); }},
      {"grad.ldam_loss", [&](Check& c) { check_grad_ldam(c, targets); }},
      {"grad.task_ce", [&](Check& c) { check_grad_task_ce(c, targets); }},
      {"grad.gated_total_loss", [&](Check& c) { check_grad_gated(c, targets); }},
      {"cifar_records", [&](Check& c) { check_cifar(c); }},
  };
  std::vector<CheckResult> out;
  for (const auto& [name, fn] : checks) {
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.why << "exception: " << e.what();
    }
    out.push_back({name, c.ok, c.why.str()});
  }
  return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return true;
}

}  // namespace gssl::selftest
