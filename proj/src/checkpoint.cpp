// Copyright 2026 The Navigability Authors
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

#include "navig/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "navig/io_util.hpp"

namespace navig {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_floats(std::string& out, const ad::Mat<float>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(m.data()[i]));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(ad::Mat<float>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(uint(4)));
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw ArtifactError("checkpoint: truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ad::ParamStore<float>& store, bool with_optimizer) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, with_optimizer ? 1u : 0u);
  put_u64(out, static_cast<std::uint64_t>(store.step));
  put_u32(out, static_cast<std::uint32_t>(store.params().size()));
  for (const auto& p : store.params()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    put_floats(out, p.value);
    if (with_optimizer) {
      put_floats(out, p.m);
      put_floats(out, p.v);
    }
  }
  put_u64(out, fnv1a64(out));
  return out;
}

ad::ParamStore<float> decode_checkpoint(const std::string& bytes, bool* has_optimizer) {
  if (bytes.size() < sizeof kCheckpointMagic + 8 || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw ArtifactError("checkpoint: bad magic");
  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes.substr(body), 8);
  if (tail.uint(8) != fnv1a64(std::string_view(bytes).substr(0, body))) throw ArtifactError("checkpoint: checksum mismatch");
  Reader r(bytes, body);
  r.text(sizeof kCheckpointMagic);
  if (r.uint(4) != kCheckpointVersion) throw ArtifactError("checkpoint: unsupported version");
  const bool opt = (r.uint(4) & 1u) != 0;
  if (has_optimizer) *has_optimizer = opt;
  ad::ParamStore<float> store;
  store.step = static_cast<std::int64_t>(r.uint(8));
  const auto count = r.uint(4);
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = r.text(r.uint(4));
    const auto rows = static_cast<Eigen::Index>(r.uint(4));
    const auto cols = static_cast<Eigen::Index>(r.uint(4));
    ad::Mat<float> value(rows, cols);
    r.floats(value);
    auto& p = store.add(name, std::move(value));
    if (opt) {
      r.floats(p.m);
      r.floats(p.v);
    }
  }
  if (!r.done()) throw ArtifactError("checkpoint: trailing bytes");
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ad::ParamStore<float>& store, bool with_optimizer) {
  write_file_atomic(path, encode_checkpoint(store, with_optimizer));
}

ad::ParamStore<float> read_checkpoint(const std::filesystem::path& path, bool* has_optimizer) {
  return decode_checkpoint(read_file(path), has_optimizer);
}

void load_checkpoint(const std::filesystem::path& path, ad::ParamStore<float>& store) {
  bool opt = false;
  const ad::ParamStore<float> file = read_checkpoint(path, &opt);
  if (file.params().size() != store.params().size())
    throw ArtifactError("checkpoint " + path.string() + ": tensor count differs from the model");
  for (auto& p : store.params()) {
    if (!file.contains(p.name)) throw ArtifactError("checkpoint " + path.string() + ": missing tensor '" + p.name + "'");
    const auto& q = file.get(p.name);
    if (q.value.rows() != p.value.rows() || q.value.cols() != p.value.cols())
      throw ArtifactError("checkpoint " + path.string() + ": shape mismatch for '" + p.name + "'");
    p.value = q.value;
    if (opt) {
      p.m = q.m;
      p.v = q.v;
    }
  }
  if (opt) store.step = file.step;
}

}  // namespace navig
