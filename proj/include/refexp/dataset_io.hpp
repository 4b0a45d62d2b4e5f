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

#ifndef REFEXP_DATASET_IO_HPP_
#define REFEXP_DATASET_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "refexp/dataset.hpp"

namespace refexp {

class DatasetFormatError : public std::runtime_error {
 public:
  DatasetFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// JSONL, one record per line: "scene", then "refexample", then "bbonly".
std::string to_jsonl(const Dataset& d);
Dataset from_jsonl(const std::string& text);

void save_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset load_external_dataset(const std::filesystem::path& path);

// FNV-1a of the canonical JSONL serialization.
std::uint64_t dataset_hash(const Dataset& d);

}  // namespace refexp

#endif  // REFEXP_DATASET_IO_HPP_
