// Copyright 2026 The Syfer Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "syfer/dataio.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace syfer {

using nlohmann::json;

// --- TensorStore -----------------------------------------------------------

void TensorStore::put_f32(const std::string& name, Tensor t) {
  check(!name.empty(), ErrorKind::Config, "container: empty entry name");
  Entry e;
  e.dtype = Dtype::F32;
  e.shape = t.shape;
  e.f32 = std::move(t.data);
  entries_[name] = std::move(e);
}

void TensorStore::put_u32(const std::string& name, std::vector<uint32_t> v,
                          Shape shape) {
  check(numel_of(shape) == static_cast<int64_t>(v.size()), ErrorKind::Dimension,
        "container: u32 data does not match shape");
  Entry e;
  e.dtype = Dtype::U32;
  e.shape = std::move(shape);
  e.u32 = std::move(v);
  entries_[name] = std::move(e);
}

bool TensorStore::contains(const std::string& name) const {
  return entries_.count(name) > 0;
}

const Tensor TensorStore::get_f32(const std::string& name) const {
  auto it = entries_.find(name);
  check(it != entries_.end(), ErrorKind::Data,
        "container: missing entry '" + name + "'");
  check(it->second.dtype == Dtype::F32, ErrorKind::Data,
        "container: entry '" + name + "' is not f32");
  return Tensor(it->second.shape, it->second.f32);
}

const std::vector<uint32_t>& TensorStore::get_u32(
    const std::string& name) const {
  auto it = entries_.find(name);
  check(it != entries_.end(), ErrorKind::Data,
        "container: missing entry '" + name + "'");
  check(it->second.dtype == Dtype::U32, ErrorKind::Data,
        "container: entry '" + name + "' is not u32");
  return it->second.u32;
}

Shape TensorStore::shape_of(const std::string& name) const {
  auto it = entries_.find(name);
  check(it != entries_.end(), ErrorKind::Data,
        "container: missing entry '" + name + "'");
  return it->second.shape;
}

std::vector<std::string> TensorStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

bool TensorStore::all_names_under(
    const std::vector<std::string>& prefixes) const {
  for (const auto& [name, e] : entries_) {
    bool ok = false;
    for (const auto& p : prefixes) {
      if (name.rfind(p, 0) == 0) {
        ok = true;
        break;
      }
    }
    if (!ok) return false;
  }
  return true;
}

namespace {

void append_u64_le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t read_u64_le(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_f32_le(std::vector<uint8_t>& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
  }
}

void append_u32_le(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t read_u32_le(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void format_fail(const std::string& msg, size_t byte_offset) {
  fail(ErrorKind::Format,
       "container: " + msg + " (at byte " + std::to_string(byte_offset) + ")");
}

}  // namespace

std::vector<uint8_t> TensorStore::serialize() const {
  json header = json::object();
  uint64_t offset = 0;
  for (const auto& [name, e] : entries_) {
    const uint64_t nbytes = static_cast<uint64_t>(numel_of(e.shape)) * 4;
    header[name] = {{"dtype", e.dtype == Dtype::F32 ? "f32" : "u32"},
                    {"shape", e.shape},
                    {"offset", offset},
                    {"nbytes", nbytes}};
    offset += nbytes;
  }
  const std::string hs = header.dump();
  std::vector<uint8_t> out;
  out.reserve(8 + hs.size() + offset);
  append_u64_le(out, hs.size());
  out.insert(out.end(), hs.begin(), hs.end());
  for (const auto& [name, e] : entries_) {
    if (e.dtype == Dtype::F32) {
      for (float f : e.f32) append_f32_le(out, f);
    } else {
      for (uint32_t v : e.u32) append_u32_le(out, v);
    }
  }
  return out;
}

TensorStore TensorStore::deserialize(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8) format_fail("truncated before header length", bytes.size());
  const uint64_t hlen = read_u64_le(bytes.data());
  if (hlen > bytes.size() - 8) format_fail("header length exceeds file size", 0);
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
  } catch (const json::exception& e) {
    format_fail(std::string("header is not valid JSON: ") + e.what(), 8);
  }
  if (!header.is_object()) format_fail("header is not a JSON object", 8);

  const size_t payload_off = 8 + hlen;
  const uint64_t payload_size = bytes.size() - payload_off;

  TensorStore ts;
  uint64_t expected_offset = 0;
  for (auto it = header.begin(); it != header.end(); ++it) {
    const std::string& name = it.key();
    const json& meta = it.value();
    if (!meta.is_object() || !meta.contains("dtype") || !meta.contains("shape") ||
        !meta.contains("offset") || !meta.contains("nbytes")) {
      format_fail("entry '" + name + "' missing fields", payload_off);
    }
    const std::string dtype = meta["dtype"].get<std::string>();
    if (dtype != "f32" && dtype != "u32") {
      format_fail("entry '" + name + "' has unknown dtype '" + dtype + "'",
                  payload_off);
    }
    Shape shape;
    for (const auto& d : meta["shape"]) {
      const int64_t dim = d.get<int64_t>();
      if (dim < 0) format_fail("entry '" + name + "' has negative dim", payload_off);
      shape.push_back(dim);
    }
    const uint64_t offset = meta["offset"].get<uint64_t>();
    const uint64_t nbytes = meta["nbytes"].get<uint64_t>();
    if (nbytes != static_cast<uint64_t>(numel_of(shape)) * 4) {
      format_fail("entry '" + name + "' nbytes inconsistent with shape",
                  payload_off + offset);
    }
    if (offset != expected_offset) {
      format_fail("entry '" + name + "' offset not ascending/contiguous",
                  payload_off + offset);
    }
    if (offset + nbytes > payload_size) {
      format_fail("entry '" + name + "' extends past end of file",
                  payload_off + offset);
    }
    expected_offset = offset + nbytes;

    const uint8_t* p = bytes.data() + payload_off + offset;
    const int64_t count = numel_of(shape);
    Entry e;
    e.dtype = dtype == "f32" ? Dtype::F32 : Dtype::U32;
    e.shape = shape;
    if (e.dtype == Dtype::F32) {
      e.f32.resize(static_cast<size_t>(count));
      for (int64_t i = 0; i < count; ++i) {
        const uint32_t bits = read_u32_le(p + i * 4);
        std::memcpy(&e.f32[i], &bits, 4);
      }
    } else {
      e.u32.resize(static_cast<size_t>(count));
      for (int64_t i = 0; i < count; ++i) e.u32[i] = read_u32_le(p + i * 4);
    }
    ts.entries_[name] = std::move(e);
  }
  if (expected_offset != payload_size) {
    format_fail("payload size inconsistent with header", payload_off);
  }
  return ts;
}

void TensorStore::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorKind::Data, "cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  check(f.good(), ErrorKind::Data, "short write to '" + path + "'");
}

TensorStore TensorStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorKind::Data, "cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

// --- Synthetic data --------------------------------------------------------

Dataset Dataset::subset(const std::vector<int64_t>& indices) const {
  const int64_t hw = images.dim(1) * images.dim(2);
  Tensor out = Tensor::zeros({static_cast<int64_t>(indices.size()),
                              images.dim(1), images.dim(2)});
  std::vector<uint32_t> lab(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const int64_t src = indices[i];
    check(src >= 0 && src < size(), ErrorKind::Domain, "subset: index range");
    std::copy_n(&images.data[src * hw], hw, &out.data[i * hw]);
    lab[i] = labels[src];
  }
  return Dataset{std::move(out), std::move(lab)};
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  check(spec.n >= 4, ErrorKind::Config, "synthetic: n must be >= 4");
  check(spec.n % 2 == 0, ErrorKind::Config,
        "synthetic: n must be even for balanced labels");
  check(spec.height >= 8 && spec.width >= 8, ErrorKind::Config,
        "synthetic: dims must be >= 8");
  check(spec.task_rule == "bright-blob-presence" ||
            spec.task_rule == "stripe-orientation",
        ErrorKind::Config, "synthetic: unknown task rule '" + spec.task_rule + "'");

  const int64_t n = spec.n, H = spec.height, W = spec.width;
  Rng rng(spec.seed);

  // balanced labels, shuffled
  std::vector<uint32_t> labels(n);
  for (int64_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 1 : 2;
  const auto perm = rng.next_permutation(static_cast<uint32_t>(n));
  std::vector<uint32_t> shuffled(n);
  for (int64_t i = 0; i < n; ++i) shuffled[i] = labels[perm[i]];
  labels = std::move(shuffled);

  Tensor images = Tensor::zeros({n, H, W});
  for (int64_t i = 0; i < n; ++i) {
    Rng img_rng = rng.split(static_cast<uint64_t>(i));
    float* px = images.data.data() + i * H * W;

    const double base = 0.2 + 0.3 * img_rng.next_uniform();
    const double contrast =
        spec.texture_contrast_min +
        (spec.texture_contrast_max - spec.texture_contrast_min) *
            img_rng.next_uniform();
    struct Wave {
      double fx, fy, phase, amp;
    };
    std::vector<Wave> waves(spec.texture_waves);
    for (auto& wv : waves) {
      wv.fx = (0.5 + 2.5 * img_rng.next_uniform()) / static_cast<double>(W);
      wv.fy = (0.5 + 2.5 * img_rng.next_uniform()) / static_cast<double>(H);
      wv.phase = 6.283185307179586 * img_rng.next_uniform();
      wv.amp = (0.3 + 0.7 * img_rng.next_uniform()) / waves.size();
    }
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        double v = base;
        for (const auto& wv : waves) {
          v += contrast * wv.amp *
               std::cos(6.283185307179586 * (wv.fx * x + wv.fy * y) + wv.phase);
        }
        v += 0.02 * img_rng.next_uniform();
        px[y * W + x] = static_cast<float>(std::clamp(v, 0.0, 0.85));
      }
    }

    const bool positive = labels[i] == 2;
    if (spec.task_rule == "bright-blob-presence") {
      if (positive) {
        const double cy = H * (0.3 + 0.4 * img_rng.next_uniform());
        const double cx = W * (0.3 + 0.4 * img_rng.next_uniform());
        const double ry = H * (0.10 + 0.08 * img_rng.next_uniform());
        const double rx = W * (0.10 + 0.08 * img_rng.next_uniform());
        const double gain = 0.4 + 0.2 * img_rng.next_uniform();
        for (int64_t y = 0; y < H; ++y) {
          for (int64_t x = 0; x < W; ++x) {
            const double dy = (y - cy) / ry, dx = (x - cx) / rx;
            const double r2 = dy * dy + dx * dx;
            if (r2 < 4.0) {
              const double m = std::exp(-1.5 * r2);
              const double v = px[y * W + x] + gain * m;
              px[y * W + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
          }
        }
      }
    } else {  // stripe-orientation
      const double freq = 2.0 + 2.0 * img_rng.next_uniform();
      const double phase = 6.283185307179586 * img_rng.next_uniform();
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          const double coord = positive ? static_cast<double>(x) / W
                                        : static_cast<double>(y) / H;
          const double v = px[y * W + x] +
                           0.15 * std::cos(6.283185307179586 * freq * coord + phase);
          px[y * W + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return Dataset{std::move(images), std::move(labels)};
}

SplitIndices split_dataset(const Dataset& ds, const std::vector<double>& ratios,
                           Rng& rng) {
  check(ratios.size() == 3, ErrorKind::Config, "split: need 3 ratios");
  double sum = 0;
  for (double r : ratios) {
    check(r >= 0.0, ErrorKind::Config, "split: negative ratio");
    sum += r;
  }
  check(std::fabs(sum - 1.0) < 1e-9, ErrorKind::Config,
        "split: ratios must sum to 1");

  // per class: shuffle, then largest-remainder apportionment
  SplitIndices out;
  std::vector<uint32_t> classes;
  for (uint32_t l : ds.labels) {
    if (std::find(classes.begin(), classes.end(), l) == classes.end()) {
      classes.push_back(l);
    }
  }
  std::sort(classes.begin(), classes.end());
  for (uint32_t cls : classes) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == cls) idx.push_back(i);
    }
    const auto perm = rng.next_permutation(static_cast<uint32_t>(idx.size()));
    std::vector<int64_t> shuffled(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) shuffled[i] = idx[perm[i]];

    const int64_t c = static_cast<int64_t>(idx.size());
    std::vector<int64_t> counts(3);
    std::vector<std::pair<double, int>> rema;
    int64_t assigned = 0;
    for (int j = 0; j < 3; ++j) {
      const double exact = ratios[j] * c;
      counts[j] = static_cast<int64_t>(exact);
      assigned += counts[j];
      rema.push_back({exact - counts[j], j});
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int64_t r = 0; r < c - assigned; ++r) counts[rema[r % 3].second]++;

    int64_t pos = 0;
    for (int j = 0; j < 3; ++j) {
      auto* dst = j == 0 ? &out.train : (j == 1 ? &out.dev : &out.test);
      for (int64_t k = 0; k < counts[j]; ++k) dst->push_back(shuffled[pos++]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.dev.begin(), out.dev.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<int64_t> class_balance(const std::vector<uint32_t>& labels,
                                   Rng& rng) {
  std::vector<int64_t> pos, neg;
  for (size_t i = 0; i < labels.size(); ++i) {
    check(labels[i] == 1 || labels[i] == 2, ErrorKind::Domain,
          "class_balance: labels must be binary {1,2}");
    (labels[i] == 2 ? pos : neg).push_back(static_cast<int64_t>(i));
  }
  check(!pos.empty() && !neg.empty(), ErrorKind::Insufficient,
        "class_balance: need at least one positive and one negative");
  check(neg.size() >= pos.size(), ErrorKind::Insufficient,
        "class_balance: cannot pair " + std::to_string(pos.size()) +
            " positives with " + std::to_string(neg.size()) + " negatives");

  // sample |pos| negatives without replacement
  std::vector<int64_t> pool = neg;
  std::vector<int64_t> chosen;
  for (size_t i = 0; i < pos.size(); ++i) {
    const size_t j = i + static_cast<size_t>(rng.next_below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    chosen.push_back(pool[i]);
  }
  std::vector<int64_t> keep = pos;
  keep.insert(keep.end(), chosen.begin(), chosen.end());
  std::sort(keep.begin(), keep.end());
  return keep;
}

// --- PGM export -------------------------------------------------------------

void write_pgm(const std::string& path, const float* pixels, int64_t h,
               int64_t w) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorKind::Data, "cannot open '" + path + "' for writing");
  f << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(w));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double v = std::clamp(static_cast<double>(pixels[y * w + x]), 0.0, 1.0);
      row[x] = static_cast<uint8_t>(std::nearbyint(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(row.data()), w);
  }
  check(f.good(), ErrorKind::Data, "short write to '" + path + "'");
}

void export_images(const Tensor& images, const std::string& dir) {
  check(images.rank() == 3, ErrorKind::Dimension,
        "export_images: need [n,H,W]");
  std::filesystem::create_directories(dir);
  const int64_t n = images.dim(0), h = images.dim(1), w = images.dim(2);
  for (int64_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05lld.pgm",
                  static_cast<long long>(i));
    write_pgm(dir + "/" + name, images.data.data() + i * h * w, h, w);
  }
}

}  // namespace syfer
