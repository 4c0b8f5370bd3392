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

#include "layertag/cache.hpp"

#include <Eigen/Core>
#include <atomic>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "json.hpp"
#include "layertag/error.hpp"

namespace layertag {
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'W', 'A', 'T', 'C'};
constexpr const char* kStoreFile = "store.json";

std::string percent_encode(const std::string& id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (std::size_t i = 0; i < id.size(); ++i) {
    const auto c = static_cast<unsigned char>(id[i]);
    const bool plain = std::isalnum(c) != 0 || c == '-' || c == '_' || (c == '.' && i > 0);
    if (plain) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

// A sibling name unique to this process, thread and call.
fs::path temp_sibling(const fs::path& target) {
  static std::atomic<std::uint64_t> counter{0};
  thread_local std::mt19937_64 rng(std::random_device{}() ^
                                   std::hash<std::thread::id>{}(std::this_thread::get_id()));
  std::ostringstream name;
  name << target.filename().string() << ".tmp." << std::hex << rng() << '.' << counter++;
  return target.parent_path() / name.str();
}

void atomic_write(const fs::path& target, const std::string& bytes) {
  const fs::path tmp = temp_sibling(target);
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot move record into place at " + target.string());
  }
}

}  // namespace

void write_cache_record(const fs::path& path, const RepresentationStack& stack, DType dtype) {
  if (!stack.all_finite()) {
    throw InvalidInput("stack '" + stack.utterance_id() + "' contains non-finite values");
  }
  std::ostringstream os(std::ios::binary);
  io::BinaryWriter w(os);
  w.bytes(kMagic, 4);
  w.u32(kCacheFormatVersion);
  w.str(stack.utterance_id());
  w.u32(static_cast<std::uint32_t>(stack.layers()));
  w.u32(static_cast<std::uint32_t>(stack.frames()));
  w.u32(static_cast<std::uint32_t>(stack.dim()));
  w.u8(static_cast<std::uint8_t>(dtype));
  const auto values = stack.values();
  if (dtype == DType::kF32) {
    w.array(values);
  } else {
    std::vector<std::uint16_t> half(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      half[i] = Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(values[i]));
    }
    w.array(std::span<const std::uint16_t>(half));
  }
  atomic_write(path, std::move(os).str());
}

RepresentationStack read_cache_record(const fs::path& path, double frame_rate) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFound("no cache record at " + path.string());
  io::BinaryReader r(is, "cache record " + path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + " is not a cache record");
  const std::uint32_t version = r.u32();
  if (version != kCacheFormatVersion) {
    throw FormatError("cache record " + path.string() + " has format version " +
                      std::to_string(version) + ", expected " + std::to_string(kCacheFormatVersion));
  }
  std::string id = r.str(1U << 16);
  const std::uint32_t L = r.u32();
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  const std::uint8_t tag = r.u8();
  if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag) + " in " + path.string());
  if (L == 0 || n == 0 || d == 0 || static_cast<std::uint64_t>(L) * n * d > (1ULL << 32)) {
    throw FormatError("implausible shape in " + path.string());
  }
  const auto dtype = static_cast<DType>(tag);
  RepresentationStack stack(std::move(id), static_cast<int>(L), static_cast<int>(n),
                            static_cast<int>(d), frame_rate, dtype);
  auto values = stack.values();
  if (dtype == DType::kF32) {
    r.array(values);
  } else {
    std::vector<std::uint16_t> half(values.size());
    r.array(std::span<std::uint16_t>(half));
    for (std::size_t i = 0; i < half.size(); ++i) {
      values[i] = static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(half[i]));
    }
  }
  if (!r.at_eof()) throw FormatError("trailing bytes in " + path.string());
  return stack;
}

RepresentationStack quantize_f16(const RepresentationStack& stack) {
  RepresentationStack out = stack;
  for (float& v : out.values()) v = static_cast<float>(Eigen::half(v));
  out.set_dtype(DType::kF16);
  return out;
}

CacheStore::CacheStore(fs::path dir, std::optional<Info> info) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) throw InvalidInput("cannot create cache directory " + dir_.string());
  const fs::path meta = dir_ / kStoreFile;
  if (fs::exists(meta)) {
    std::ifstream is(meta);
    nlohmann::json j;
    try {
      is >> j;
      info_.backbone = j.at("backbone").get<std::string>();
      info_.frame_rate = j.at("frame_rate").get<double>();
      info_.dtype = parse_dtype(j.at("dtype").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed " + meta.string() + ": " + e.what());
    }
    if (info && (info->backbone != info_.backbone || info->frame_rate != info_.frame_rate)) {
      throw ConfigError("cache " + dir_.string() + " belongs to backbone '" + info_.backbone +
                        "', not '" + info->backbone + "'");
    }
    return;
  }
  if (info) info_ = *info;
  const nlohmann::json j = {{"backbone", info_.backbone},
                            {"frame_rate", info_.frame_rate},
                            {"dtype", std::string(to_string(info_.dtype))},
                            {"format_version", kCacheFormatVersion}};
  atomic_write(meta, j.dump(2) + "\n");
}

fs::path CacheStore::path_for(const std::string& utterance_id) const {
  if (utterance_id.empty()) throw InvalidInput("empty utterance id");
  return dir_ / (percent_encode(utterance_id) + ".watc");
}

bool CacheStore::contains(const std::string& utterance_id) const {
  return fs::exists(path_for(utterance_id));
}

std::string CacheStore::write(const RepresentationStack& stack, std::optional<DType> dtype) const {
  write_cache_record(path_for(stack.utterance_id()), stack, dtype.value_or(info_.dtype));
  return stack.utterance_id();
}

RepresentationStack CacheStore::read(const std::string& utterance_id) const {
  const fs::path path = path_for(utterance_id);
  if (!fs::exists(path)) {
    throw NotFound("utterance '" + utterance_id + "' is not cached in " + dir_.string());
  }
  auto stack = read_cache_record(path, info_.frame_rate);
  if (stack.utterance_id() != utterance_id) {
    throw FormatError("record " + path.string() + " holds utterance '" + stack.utterance_id() + "'");
  }
  return stack;
}

std::vector<std::string> CacheStore::missing(const std::vector<std::string>& ids) const {
  std::vector<std::string> out;
  for (const auto& id : ids) {
    if (!contains(id)) out.push_back(id);
  }
  return out;
}

}  // namespace layertag
