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

#ifndef REFEXP_FEATURIZER_HPP_
#define REFEXP_FEATURIZER_HPP_

#include <array>
#include <cstddef>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "refexp/rng.hpp"
#include "refexp/scene.hpp"
#include "refexp/tape.hpp"

namespace refexp {

struct FeaturizerDims {
  std::size_t patch = 16;
  std::size_t channels = 8;
  std::size_t kernel = 3;
  std::size_t feat = 32;

  std::size_t pooled_side() const { return (patch - kernel + 1) / 2; }
  std::size_t pooled_size() const { return channels * pooled_side() * pooled_side(); }
};

// Where the featurizer's arrays live inside a ParamStore.
struct FeaturizerLayout {
  FeaturizerDims dims;
  ParamId conv_w = 0;
  ParamId conv_b = 0;
  ParamId fc_w = 0;
  ParamId fc_b = 0;
};

// conv(k x k) -> tanh -> 2x2 average pool -> affine(feat). Only the final
// affine layer is trainable unless `conv_trainable` is set.
FeaturizerLayout add_featurizer_params(ParamStore& params, const FeaturizerDims& dims, Rng& rng,
                                       bool conv_trainable = false);

// [x_tl/W, y_tl/H, x_br/W, y_br/H, area/(W*H)]
std::array<double, 5> location_vector(const Region& box, double width, double height);

// Crops `box` from an [H, W, 3] raster, scales its longer side to
// `out_size` with nearest-neighbour sampling, centres it, and pads the
// margins with the crop's mean colour. Returns [3, out_size, out_size].
Tensor warp_region(const Tensor& raster, const Region& box, std::size_t out_size);

// Output of the frozen part (conv, tanh, pool), flattened.
std::vector<double> pooled_features(const ParamStore& params, const FeaturizerLayout& layout, const Tensor& patch);
std::vector<double> extract_features(const ParamStore& params, const FeaturizerLayout& layout, const Tensor& patch);

NodeId extract_features(Tape& tape, const FeaturizerLayout& layout, const Tensor& patch);
// Applies only the final affine layer to precomputed pooled features.
NodeId features_from_pooled(Tape& tape, const FeaturizerLayout& layout, std::vector<double> pooled);

struct VisualVector {
  std::vector<double> region_feat;
  std::vector<double> scene_feat;
  std::array<double, 5> loc{};

  std::vector<double> concat() const;
  std::size_t size() const { return region_feat.size() + scene_feat.size() + loc.size(); }
};

VisualVector visual_vector(const ParamStore& params, const FeaturizerLayout& layout, const Scene& scene,
                           const Region& region);

// Memoizes pooled features per (scene, box). Valid only while the conv
// layer stays frozen and the cached scenes stay alive. Thread-safe.
class FeatureCache {
 public:
  const std::vector<double>& pooled(const ParamStore& params, const FeaturizerLayout& layout, const Scene& scene,
                                    const Region& region);
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

 private:
  using Key = std::tuple<const Scene*, double, double, double, double>;
  std::map<Key, std::vector<double>> cache_;
  mutable std::mutex mu_;
};

// The full visual vector on a tape: concat(region feat, scene feat, loc).
// Uses `cache` for the frozen layers when provided and the conv is frozen.
NodeId visual_on_tape(Tape& tape, const ParamStore& params, const FeaturizerLayout& layout, const Scene& scene,
                      const Region& region, FeatureCache* cache = nullptr);

}  // namespace refexp

#endif  // REFEXP_FEATURIZER_HPP_
