// Copyright 2026 The LayerTag Authors. All Rights Reserved.
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

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layertag/representation.hpp"

namespace layertag {

inline constexpr std::uint32_t kCacheFormatVersion = 1;

// One record file per utterance:
//   "WATC" | u32 version | u32 id length | id bytes | u32 L | u32 n | u32 d |
//   u8 dtype | L*n*d values (f32 or IEEE binary16), layer-major.
void write_cache_record(const std::filesystem::path& path, const RepresentationStack& stack,
                        DType dtype);
RepresentationStack read_cache_record(const std::filesystem::path& path, double frame_rate);

// Rounds every value through binary16, as an f16 write followed by a read would.
RepresentationStack quantize_f16(const RepresentationStack& stack);

// Directory of cache records. The frame rate and producing backbone live in a
// store.json next to the records, since the record header does not carry them.
class CacheStore {
 public:
  struct Info {
    std::string backbone;
    double frame_rate = 50.0;
    DType dtype = DType::kF16;
  };

  // Opens (creating if needed) a store. An existing store.json wins over info
  // unless they disagree on backbone or frame rate, which throws ConfigError.
  explicit CacheStore(std::filesystem::path dir, std::optional<Info> info = std::nullopt);

  const std::filesystem::path& dir() const { return dir_; }
  const Info& info() const { return info_; }

  std::filesystem::path path_for(const std::string& utterance_id) const;
  bool contains(const std::string& utterance_id) const;

  // Writes at the store dtype unless overridden; returns the record id. The
  // record appears atomically, so concurrent writers of distinct ids and
  // concurrent readers are safe.
  std::string write(const RepresentationStack& stack, std::optional<DType> dtype = std::nullopt) const;
  RepresentationStack read(const std::string& utterance_id) const;

  // Ids of the given list that have no record.
  std::vector<std::string> missing(const std::vector<std::string>& ids) const;

 private:
  std::filesystem::path dir_;
  Info info_;
};

}  // namespace layertag
