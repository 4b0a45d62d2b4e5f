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

#ifndef REFEXP_CHECKPOINT_HPP_
#define REFEXP_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "refexp/tape.hpp"

namespace refexp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container: magic "REFXCKPT", u32 version, u64 vocabulary hash,
// named integer dims, then every parameter as name / trainable flag /
// extents / little-endian IEEE-754 doubles.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t vocab_hash = 0;
  std::vector<std::pair<std::string, std::int64_t>> dims;
  ParamStore params;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace refexp

#endif  // REFEXP_CHECKPOINT_HPP_
