// Copyright 2026 The refexp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "refexp/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace refexp {

namespace {

Tensor uniform_tensor(Shape shape, double r, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * r;
  return t;
}

}  // namespace

FeaturizerLayout add_featurizer_params(ParamStore& params, const FeaturizerDims& d, Rng& rng, bool conv_trainable) {
  if (d.patch < d.kernel + 1 || d.channels == 0 || d.feat == 0 || d.kernel == 0)
    throw std::invalid_argument("featurizer dims are inconsistent");
  FeaturizerLayout l{d, 0, 0, 0, 0};
  const double conv_r = 1.0 / std::sqrt(double(3 * d.kernel * d.kernel));
  l.conv_w = params.add("feat.conv.w", uniform_tensor(Shape{d.channels, 3, d.kernel, d.kernel}, conv_r, rng),
                        conv_trainable);
  l.conv_b = params.add("feat.conv.b", Tensor(Shape{d.channels}, 0.0), conv_trainable);
  const double fc_r = 1.0 / std::sqrt(double(d.pooled_size()));
  l.fc_w = params.add("feat.fc.w", uniform_tensor(Shape{d.feat, d.pooled_size()}, fc_r, rng), true);
  l.fc_b = params.add("feat.fc.b", Tensor(Shape{d.feat}, 0.0), true);
  return l;
}

std::array<double, 5> location_vector(const Region& box, double width, double height) {
  if (!(width > 0) || !(height > 0)) throw std::invalid_argument("location_vector: scene extents must be positive");
  if (!box.valid()) throw std::invalid_argument("location_vector: degenerate box");
  if (!box.within(width, height)) throw std::invalid_argument("location_vector: box outside the scene");
  return {box.x_tl / width, box.y_tl / height, box.x_br / width, box.y_br / height, box.area() / (width * height)};
}

Tensor warp_region(const Tensor& raster, const Region& box, std::size_t out_size) {
  if (raster.rank() != 3 || raster.dim(2) != 3) throw std::invalid_argument("warp_region: raster must be [H, W, 3]");
  if (out_size == 0) throw std::invalid_argument("warp_region: output size must be positive");
  const auto H = static_cast<long>(raster.dim(0));
  const auto W = static_cast<long>(raster.dim(1));
  if (!box.valid() || !box.within(double(W), double(H)))
    throw std::invalid_argument("warp_region: box outside the raster");

  const long x0 = std::clamp(static_cast<long>(std::floor(box.x_tl)), 0L, W - 1);
  const long y0 = std::clamp(static_cast<long>(std::floor(box.y_tl)), 0L, H - 1);
  const long x1 = std::clamp(static_cast<long>(std::ceil(box.x_br)), x0 + 1, W);
  const long y1 = std::clamp(static_cast<long>(std::ceil(box.y_br)), y0 + 1, H);
  const long cw = x1 - x0, ch = y1 - y0;

  std::array<double, 3> mean{0, 0, 0};
  for (long y = y0; y < y1; ++y)
    for (long x = x0; x < x1; ++x)
      for (int k = 0; k < 3; ++k) mean[k] += raster.data[(std::size_t(y) * W + x) * 3 + k];
  for (double& m : mean) m /= double(cw * ch);

  const auto S = static_cast<long>(out_size);
  const double scale = double(S) / double(std::max(cw, ch));
  const long nw = std::clamp(static_cast<long>(std::lround(cw * scale)), 1L, S);
  const long nh = std::clamp(static_cast<long>(std::lround(ch * scale)), 1L, S);
  const long ox = (S - nw) / 2, oy = (S - nh) / 2;

  Tensor out(Shape{3, out_size, out_size}, 0.0);
  for (long r = 0; r < S; ++r)
    for (long q = 0; q < S; ++q) {
      const bool inside = r >= oy && r < oy + nh && q >= ox && q < ox + nw;
      for (int k = 0; k < 3; ++k) {
        double v = mean[k];
        if (inside) {
          const long sx = x0 + std::min(cw - 1, static_cast<long>((double(q - ox) + 0.5) * double(cw) / double(nw)));
          const long sy = y0 + std::min(ch - 1, static_cast<long>((double(r - oy) + 0.5) * double(ch) / double(nh)));
          v = raster.data[(std::size_t(sy) * W + sx) * 3 + k];
        }
        out.data[(std::size_t(k) * S + r) * S + q] = v;
      }
    }
  return out;
}

namespace {

NodeId pooled_on_tape(Tape& tape, const FeaturizerLayout& l, const Tensor& patch) {
  const auto& d = l.dims;
  if (patch.shape != Shape{3, d.patch, d.patch})
    throw std::invalid_argument("extract_features: patch must be " + shape_string(Shape{3, d.patch, d.patch}) +
                                ", got " + shape_string(patch.shape));
  const NodeId conv = tape.conv2d(tape.param(l.conv_w), tape.param(l.conv_b), tape.input(patch));
  return tape.avgpool2(tape.tanh(conv));
}

}  // namespace

std::vector<double> pooled_features(const ParamStore& params, const FeaturizerLayout& layout, const Tensor& patch) {
  Tape tape(&params);
  return tape.value(pooled_on_tape(tape, layout, patch)).data;
}

std::vector<double> extract_features(const ParamStore& params, const FeaturizerLayout& layout, const Tensor& patch) {
  Tape tape(&params);
  return tape.value(extract_features(tape, layout, patch)).data;
}

NodeId extract_features(Tape& tape, const FeaturizerLayout& layout, const Tensor& patch) {
  const NodeId pooled = pooled_on_tape(tape, layout, patch);
  return tape.affine(tape.param(layout.fc_w), pooled, tape.param(layout.fc_b));
}

NodeId features_from_pooled(Tape& tape, const FeaturizerLayout& layout, std::vector<double> pooled) {
  if (pooled.size() != layout.dims.pooled_size())
    throw std::invalid_argument("features_from_pooled: expected " + std::to_string(layout.dims.pooled_size()) +
                                " pooled values, got " + std::to_string(pooled.size()));
  return tape.affine(tape.param(layout.fc_w), tape.input(Tensor::vector(std::move(pooled))), tape.param(layout.fc_b));
}

std::vector<double> VisualVector::concat() const {
  std::vector<double> v;
  v.reserve(size());
  v.insert(v.end(), region_feat.begin(), region_feat.end());
  v.insert(v.end(), scene_feat.begin(), scene_feat.end());
  v.insert(v.end(), loc.begin(), loc.end());
  return v;
}

VisualVector visual_vector(const ParamStore& params, const FeaturizerLayout& layout, const Scene& scene,
                           const Region& region) {
  VisualVector v;
  v.loc = location_vector(region, scene.width, scene.height);
  v.region_feat = extract_features(params, layout, warp_region(scene.raster, region, layout.dims.patch));
  v.scene_feat = extract_features(params, layout, warp_region(scene.raster, scene.full_box(), layout.dims.patch));
  return v;
}

const std::vector<double>& FeatureCache::pooled(const ParamStore& params, const FeaturizerLayout& layout,
                                                const Scene& scene, const Region& region) {
  Key key{&scene, region.x_tl, region.y_tl, region.x_br, region.y_br};
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  auto feats = pooled_features(params, layout, warp_region(scene.raster, region, layout.dims.patch));
  std::lock_guard lock(mu_);
  return cache_.emplace(key, std::move(feats)).first->second;
}

NodeId visual_on_tape(Tape& tape, const ParamStore& params, const FeaturizerLayout& layout, const Scene& scene,
                      const Region& region, FeatureCache* cache) {
  const auto loc = location_vector(region, scene.width, scene.height);
  const bool frozen = !params.trainable(layout.conv_w) && !params.trainable(layout.conv_b);
  NodeId region_feat, scene_feat;
  if (cache && frozen) {
    region_feat = features_from_pooled(tape, layout, cache->pooled(params, layout, scene, region));
    scene_feat = features_from_pooled(tape, layout, cache->pooled(params, layout, scene, scene.full_box()));
  } else {
    region_feat = extract_features(tape, layout, warp_region(scene.raster, region, layout.dims.patch));
    scene_feat = extract_features(tape, layout, warp_region(scene.raster, scene.full_box(), layout.dims.patch));
  }
  const NodeId loc_node = tape.input(Tensor::vector(std::vector<double>(loc.begin(), loc.end())));
  const NodeId parts[] = {region_feat, scene_feat, loc_node};
  return tape.concat(parts);
}

}  // namespace refexp
