/* Copyright 2026 The tinysed Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "tinysed/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tinysed {
namespace {

constexpr char kMagic[4] = {'T', 'S', 'E', 'D'};
constexpr int kArchVersion = 1;

class ByteWriter {
 public:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }
  void put_raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename U>
  U get_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("tensor blob is truncated");
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

LayerKind kind_from_string(const std::string& s) {
  for (LayerKind k : {LayerKind::Conv2D, LayerKind::MaxPool2, LayerKind::Dense,
                      LayerKind::BatchNorm, LayerKind::Recurrent, LayerKind::Flatten,
                      LayerKind::Softmax}) {
    if (to_string(k) == s) return k;
  }
  throw FormatError("unknown layer kind '" + s + "'");
}

}  // namespace

void write_blob(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  ByteWriter w;
  w.put_raw(kMagic, 4);
  w.put_le<std::uint16_t>(kBlobVersion);
  w.put_le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) {
    w.put_le<std::uint32_t>(static_cast<std::uint32_t>(nt.name.size()));
    w.put_raw(nt.name.data(), nt.name.size());
    std::visit(
        [&](const auto& t) {
          using T = typename std::decay_t<decltype(t)>::value_type;
          DType dtype = DType::I8;
          if constexpr (std::is_same_v<T, double>) dtype = nt.real_dtype;
          w.put_le<std::uint8_t>(static_cast<std::uint8_t>(dtype));
          w.put_le<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
          for (std::size_t d : t.shape()) w.put_le<std::uint32_t>(static_cast<std::uint32_t>(d));
          for (T v : t.values()) {
            if constexpr (std::is_same_v<T, double>) {
              if (dtype == DType::F32) {
                w.put_le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
              } else {
                w.put_le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
              }
            } else {
              w.put_le<std::uint8_t>(static_cast<std::uint8_t>(v));
            }
          }
        },
        nt.tensor);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DomainError("cannot write '" + path.string() + "'");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw DomainError("write to '" + path.string() + "' failed");
}

std::vector<NamedTensor> read_blob(const std::filesystem::path& path) {
  ByteReader r(slurp(path));
  if (r.get_string(4) != std::string(kMagic, 4)) throw FormatError("bad magic, not a TSED blob");
  const auto version = r.get_le<std::uint16_t>();
  if (version != kBlobVersion) {
    throw FormatError("unsupported blob version " + std::to_string(version));
  }
  const auto count = r.get_le<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.get_string(r.get_le<std::uint32_t>());
    const auto dtype = static_cast<DType>(r.get_le<std::uint8_t>());
    const auto rank = r.get_le<std::uint32_t>();
    if (rank > 8) throw FormatError("tensor '" + nt.name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get_le<std::uint32_t>();
    const std::size_t n = element_count(shape);
    switch (dtype) {
      case DType::F32:
      case DType::F64: {
        std::vector<double> data(n);
        for (auto& v : data) {
          v = dtype == DType::F32
                  ? static_cast<double>(std::bit_cast<float>(r.get_le<std::uint32_t>()))
                  : std::bit_cast<double>(r.get_le<std::uint64_t>());
        }
        nt.tensor = TensorF(shape, std::move(data));
        nt.real_dtype = dtype;
        break;
      }
      case DType::I8: {
        std::vector<std::int8_t> data(n);
        for (auto& v : data) v = static_cast<std::int8_t>(r.get_le<std::uint8_t>());
        nt.tensor = TensorI8(shape, std::move(data));
        break;
      }
      default:
        throw FormatError("tensor '" + nt.name + "' has unknown dtype tag");
    }
    out.push_back(std::move(nt));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last tensor");
  return out;
}

TensorF stack_tensors(std::span<const TensorF> items, const Shape& item_shape) {
  Shape shape{items.size()};
  shape.insert(shape.end(), item_shape.begin(), item_shape.end());
  TensorF out(shape);
  const std::size_t n = element_count(item_shape);
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k].shape() != item_shape) {
      throw DomainError("stack_tensors: item " + std::to_string(k) + " has shape " +
                        shape_to_string(items[k].shape()) + ", expected " +
                        shape_to_string(item_shape));
    }
    std::copy(items[k].values().begin(), items[k].values().end(), out.values().begin() + k * n);
  }
  return out;
}

std::vector<TensorF> unstack_tensors(const TensorF& stacked) {
  if (stacked.rank() < 2) throw FormatError("unstack_tensors: need rank >= 2");
  const Shape item(stacked.shape().begin() + 1, stacked.shape().end());
  const std::size_t n = element_count(item);
  std::vector<TensorF> out;
  out.reserve(stacked.shape()[0]);
  for (std::size_t k = 0; k < stacked.shape()[0]; ++k) {
    TensorF t(item);
    std::copy(stacked.values().begin() + k * n, stacked.values().begin() + (k + 1) * n,
              t.values().begin());
    out.push_back(std::move(t));
  }
  return out;
}

void save_patches(const std::filesystem::path& path, std::span<const TensorF> patches) {
  if (patches.empty()) throw DomainError("save_patches: no patches");
  write_blob(path, {{"patches", stack_tensors(patches, patches.front().shape()), DType::F32}});
}

std::vector<TensorF> load_patches(const std::filesystem::path& path) {
  for (NamedTensor& nt : read_blob(path)) {
    if (nt.name == "patches" && std::holds_alternative<TensorF>(nt.tensor)) {
      return unstack_tensors(std::get<TensorF>(nt.tensor));
    }
  }
  throw FormatError("'" + path.string() + "' holds no real tensor named 'patches'");
}

nlohmann::json arch_to_json(const ModelArch& arch) {
  nlohmann::json j;
  j["format"] = "tinysed-arch";
  j["version"] = kArchVersion;
  j["name"] = arch.name;
  j["input_shape"] = arch.input_shape;
  j["layers"] = nlohmann::json::array();
  for (const LayerSpec& l : arch.layers) {
    nlohmann::json lj;
    lj["kind"] = to_string(l.kind);
    lj["name"] = l.name;
    switch (l.kind) {
      case LayerKind::Conv2D:
        lj["units"] = l.units;
        lj["padding"] = to_string(l.padding);
        lj["activation"] = to_string(l.activation);
        break;
      case LayerKind::Dense:
        lj["units"] = l.units;
        lj["activation"] = to_string(l.activation);
        break;
      case LayerKind::BatchNorm:
        lj["activation"] = to_string(l.activation);
        break;
      case LayerKind::Recurrent:
        lj["units"] = l.units;
        lj["mode"] = to_string(l.rnn_mode);
        break;
      default:
        break;
    }
    if (l.embedding_tap) lj["embedding_tap"] = true;
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

ModelArch arch_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "tinysed-arch") throw FormatError("not a tinysed architecture");
    if (j.at("version").get<int>() != kArchVersion) {
      throw FormatError("unsupported architecture version");
    }
    ModelArch a;
    a.name = j.at("name").get<std::string>();
    a.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = kind_from_string(lj.at("kind").get<std::string>());
      l.name = lj.at("name").get<std::string>();
      l.units = lj.value("units", 0);
      l.padding = lj.value("padding", "valid") == "same" ? Padding::Same : Padding::Valid;
      l.activation = lj.value("activation", "none") == "relu" ? Activation::Relu : Activation::None;
      l.rnn_mode = lj.value("mode", "gru") == "gru" ? RecurrentMode::Gru : RecurrentMode::VanillaTanh;
      l.embedding_tap = lj.value("embedding_tap", false);
      a.layers.push_back(std::move(l));
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed architecture: ") + e.what());
  }
}

std::filesystem::path model_json_path(const std::filesystem::path& path) {
  auto p = path;
  if (p.extension() == ".json" || p.extension() == ".bin") p.replace_extension();
  return p.string() + ".json";
}

std::filesystem::path model_blob_path(const std::filesystem::path& path) {
  auto p = path;
  if (p.extension() == ".json" || p.extension() == ".bin") p.replace_extension();
  return p.string() + ".bin";
}

void save_model(const std::filesystem::path& path, const Model& m) {
  check_weights(m.arch, m.weights);
  nlohmann::json j = arch_to_json(m.arch);
  j["weights"] = model_blob_path(path).filename().string();
  {
    std::ofstream out(model_json_path(path), std::ios::trunc);
    if (!out) throw DomainError("cannot write '" + model_json_path(path).string() + "'");
    out << j.dump(2) << "\n";
  }
  std::vector<NamedTensor> tensors;
  for (const auto& [key, shape] : parameter_shapes(m.arch)) {
    tensors.push_back({key, m.weights.at(key), DType::F64});
  }
  write_blob(model_blob_path(path), tensors);
}

Model load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  {
    std::ifstream in(model_json_path(path));
    if (!in) throw FormatError("cannot open '" + model_json_path(path).string() + "'");
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed architecture JSON: ") + e.what());
    }
  }
  Model m;
  m.arch = arch_from_json(j);
  shape_trace(m.arch);
  for (NamedTensor& nt : read_blob(model_blob_path(path))) {
    auto* real = std::get_if<TensorF>(&nt.tensor);
    if (real == nullptr) throw FormatError("weight '" + nt.name + "' is not a real tensor");
    m.weights.tensors.emplace(nt.name, std::move(*real));
  }
  try {
    check_weights(m.arch, m.weights);
  } catch (const FormatError&) {
    throw;
  } catch (const DomainError& e) {
    throw FormatError(std::string("shape mismatch vs. declared architecture: ") + e.what());
  }
  return m;
}

}  // namespace tinysed
