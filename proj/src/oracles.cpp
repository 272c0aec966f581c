// SPDX-License-Identifier: Apache-2.0
#include "gssl/oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace gssl::oracle {

long double ce_oracle(std::span<const double> logits, int target) {
  long double denom = 0.0L;
  for (double z : logits) denom += std::exp(static_cast<long double>(z));
  const long double p = std::exp(static_cast<long double>(logits[static_cast<std::size_t>(target)])) / denom;
  return -std::log(p);
}

std::vector<long double> ldam_margin_oracle(std::span<const int> counts, long double max_margin) {
  std::vector<long double> raw;
  for (int n : counts) raw.push_back(1.0L / std::sqrt(std::sqrt(static_cast<long double>(n))));
  const long double top = *std::max_element(raw.begin(), raw.end());
  for (auto& r : raw) r = max_margin * r / top;
  return raw;
}

std::vector<long double> drw_raw_oracle(std::span<const int> counts, long double beta) {
  std::vector<long double> out;
  for (int n : counts) {
    long double pow = 1.0L, base = beta;
    for (unsigned e = static_cast<unsigned>(n); e; e >>= 1) {
      if (e & 1u) pow *= base;
      base *= base;
    }
    out.push_back((1.0L - beta) / (1.0L - pow));
  }
  return out;
}

std::vector<long long> profile_oracle(int num_classes, int n_max, long double ratio) {
  std::vector<long long> out;
  for (int j = 0; j < num_classes; ++j) {
    const long double e = static_cast<long double>(j) / (num_classes - 1);
    const long double v = static_cast<long double>(n_max) * std::exp(e * std::log(ratio));
    long long n = static_cast<long long>(std::floor(v * (1.0L + 1e-12L)));
    out.push_back(std::max(1LL, n));
  }
  return out;
}

GradCheckReport fd_gradient(const std::string& block, const std::function<double(std::span<const double>)>& loss,
                            std::vector<double> params, std::span<const double> analytic, double step,
                            double tolerance) {
  GradCheckReport r;
  r.block = block;
  r.tolerance = tolerance;
  if (analytic.size() != params.size()) {
    r.detail = "analytic gradient has " + std::to_string(analytic.size()) + " entries for " +
               std::to_string(params.size()) + " parameters";
    r.max_rel_error = INFINITY;
    return r;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    params[i] = orig + step;
    const double up = loss(params);
    params[i] = orig - step;
    const double down = loss(params);
    params[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      r.max_rel_error = INFINITY;
      r.detail = "non-finite loss at coordinate " + std::to_string(i);
      return r;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > r.max_rel_error || std::isnan(rel)) {
      r.max_rel_error = rel;
      r.detail = "worst coordinate " + std::to_string(i) + ": analytic " + std::to_string(analytic[i]) +
                 ", numeric " + std::to_string(numeric);
    }
  }
  r.passed = r.max_rel_error < tolerance;
  return r;
}

namespace {

struct Box {
  int y0, x0, h, w;
};

// Row-major 2x2 grid split at floor(H/2), floor(W/2).
Box quadrant_box(int q, int height, int width) {
  const int hy = height / 2, hx = width / 2;
  const bool bottom = q >= 2, right = q % 2 == 1;
  return {bottom ? hy : 0, right ? hx : 0, bottom ? height - hy : hy, right ? width - hx : hx};
}

// One counterclockwise quarter turn of a square block, applied `turns` times
// by literally moving pixels.
ImageTensor rotate_block(const ImageTensor& img, Box b, int turns) {
  ImageTensor cur = img;
  for (int t = 0; t < turns; ++t) {
    ImageTensor next = cur;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < b.h; ++y)
        for (int x = 0; x < b.w; ++x) {
          // A CCW turn sends the pixel at (y, x) to (w-1-x, y).
          next.at(c, b.y0 + (b.w - 1 - x), b.x0 + y) = cur.at(c, b.y0 + y, b.x0 + x);
        }
    cur = std::move(next);
  }
  return cur;
}

ImageTensor mirror_block(const ImageTensor& img, Box b) {
  ImageTensor out = img;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < b.h; ++y)
      for (int x = 0; x < b.w; ++x) out.at(c, b.y0 + y, b.x0 + b.w - 1 - x) = img.at(c, b.y0 + y, b.x0 + x);
  return out;
}

ImageTensor permute_block(const ImageTensor& img, Box b, const std::array<int, 3>& perm) {
  ImageTensor out = img;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < b.h; ++y)
      for (int x = 0; x < b.w; ++x) out.at(c, b.y0 + y, b.x0 + x) = img.at(perm[c], b.y0 + y, b.x0 + x);
  return out;
}

}  // namespace

std::vector<Outcome> enumerate_outcomes(transforms::TaskKind task, const ImageTensor& img, int quadrant) {
  std::vector<Outcome> out;
  switch (task) {
    case transforms::TaskKind::LorotE:
      for (int q = 0; q < 4; ++q)
        for (int r = 0; r < 4; ++r) out.push_back({rotate_block(img, quadrant_box(q, img.height(), img.width()), r),
                                                   q * 4 + r});
      break;
    case transforms::TaskKind::QuadFlip: {
      const Box b = quadrant_box(quadrant, img.height(), img.width());
      out.push_back({img, 0});
      out.push_back({mirror_block(img, b), 1});
      break;
    }
    case transforms::TaskKind::ChannelShuffle: {
      const Box b = quadrant_box(quadrant, img.height(), img.width());
      std::array<int, 3> perm{0, 1, 2};
      int label = 0;
      do {
        out.push_back({permute_block(img, b, perm), label++});
      } while (std::next_permutation(perm.begin(), perm.end()));
      break;
    }
  }
  return out;
}

bool outcomes_decodable(const std::vector<Outcome>& outcomes) {
  std::set<int> labels;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    labels.insert(outcomes[i].label);
    for (std::size_t j = i + 1; j < outcomes.size(); ++j) {
      if (outcomes[i].image == outcomes[j].image) return false;
    }
  }
  return labels.size() == outcomes.size() && *labels.begin() == 0 &&
         *labels.rbegin() == static_cast<int>(outcomes.size()) - 1;
}

std::size_t distinct_images(const std::vector<Outcome>& outcomes) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < i && !seen; ++j) seen = outcomes[i].image == outcomes[j].image;
    if (!seen) ++n;
  }
  return n;
}

bool lorot_structure_holds(const std::vector<Outcome>& outcomes, const ImageTensor& img) {
  if (outcomes.size() != 16) return false;
  std::set<int> labels;
  std::vector<Outcome> turned;
  for (const auto& o : outcomes) {
    labels.insert(o.label);
    if (o.label % 4 == 0) {
      if (!(o.image == img)) return false;
    } else {
      if (o.image == img) return false;
      turned.push_back(o);
    }
  }
  return labels.size() == 16 && *labels.begin() == 0 && *labels.rbegin() == 15 && distinct_images(turned) == 12;
}

ImageTensor distinct_image(int height, int width) {
  const std::size_t n = static_cast<std::size_t>(3) * height * width;
  std::vector<float> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<float>(k + 1) / static_cast<float>(n + 1);
  return ImageTensor(height, width, std::move(v));
}

}  // namespace gssl::oracle
