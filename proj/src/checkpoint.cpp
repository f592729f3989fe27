// Copyright 2026 The lowrank Authors.
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

#include "lowrank/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "lowrank/error.hpp"
#include "lowrank/io.hpp"

namespace lowrank {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

const DenseMatrix* TensorFile::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

const DenseMatrix& TensorFile::require(std::string_view name) const {
  const DenseMatrix* m = find(name);
  if (!m) throw FormatError("checkpoint is missing tensor '" + std::string(name) + "'");
  return *m;
}

namespace {

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensor_file(const TensorFile& file) {
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = file.header.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, t.value.rows());
    put<std::uint64_t>(out, t.value.cols());
    out.append(reinterpret_cast<const char*>(t.value.data()), t.value.size() * sizeof(double));
  }
  return out;
}

TensorFile decode_tensor_file(std::string_view bytes) {
  Reader r(bytes);
  const std::string_view magic = r.take(4, "magic");
  if (magic != std::string_view(kCheckpointMagic, 4)) throw FormatError("bad checkpoint magic bytes");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  TensorFile file;
  const auto header_len = r.get<std::uint32_t>("header length");
  try {
    file.header = nlohmann::json::parse(r.take(header_len, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    rec.name = std::string(r.take(name_len, "tensor name"));
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF64) throw FormatError("tensor " + rec.name + ": unsupported dtype tag");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 2) throw FormatError("tensor " + rec.name + ": unsupported rank");
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t k = 0; k < rank; ++k) dims[2 - rank + k] = r.get<std::uint64_t>("dims");
    const std::uint64_t n = dims[0] * dims[1];
    if (dims[1] != 0 && n / dims[1] != dims[0]) throw FormatError("tensor " + rec.name + ": dims overflow");
    const std::string_view raw = r.take(n * sizeof(double), "tensor data");
    std::vector<double> data(n);
    std::memcpy(data.data(), raw.data(), raw.size());
    try {
      rec.value = DenseMatrix(dims[0], dims[1], std::move(data));
    } catch (const ValidationError& e) {
      throw FormatError("tensor " + rec.name + ": " + e.what());
    }
    file.tensors.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError("trailing bytes after last checkpoint record");
  return file;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  io::write_file_atomic(path, encode_tensor_file(file));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  return decode_tensor_file(io::read_file(path));
}

TensorFile checkpoint_file(const TinyLM& model, const nlohmann::json& extra) {
  TensorFile file;
  if (extra.is_object()) file.header = extra;
  file.header["kind"] = "dense";
  file.header["config"] = model.config();
  model.params().for_each([&](const std::string& name, const DenseMatrix& m) {
    file.tensors.push_back({name, m});
  });
  return file;
}

namespace {

ParameterSet params_from_file(const TensorFile& file, const ModelConfig& config, const std::string& prefix) {
  ParameterSet p = ParameterSet::zeros(config);
  p.for_each([&](const std::string& name, DenseMatrix& m) {
    const DenseMatrix& src = file.require(prefix + name);
    if (src.rows() != m.rows() || src.cols() != m.cols()) {
      throw FormatError("tensor " + prefix + name + " has shape " + std::to_string(src.rows()) + "x" +
                        std::to_string(src.cols()) + ", config expects " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    }
    m = src;
  });
  return p;
}

ModelConfig config_from_header(const TensorFile& file) {
  if (!file.header.contains("config")) throw FormatError("checkpoint header has no config block");
  ModelConfig c = file.header.at("config").get<ModelConfig>();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  return c;
}

}  // namespace

TinyLM model_from_file(const TensorFile& file) {
  if (file.header.value("kind", "") != "dense") throw FormatError("not a dense model checkpoint");
  const ModelConfig c = config_from_header(file);
  return TinyLM(c, params_from_file(file, c, ""));
}

void save_checkpoint(const TinyLM& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  write_tensor_file(path, checkpoint_file(model, extra));
}

TinyLM load_checkpoint(const std::filesystem::path& path) { return model_from_file(read_tensor_file(path)); }

void save_gradients(const TinyLM& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  if (!model.grads()) throw ValidationError("save_gradients: model has no gradient buffers");
  TensorFile file;
  if (extra.is_object()) file.header = extra;
  file.header["kind"] = "gradients";
  file.header["config"] = model.config();
  model.grads()->for_each([&](const std::string& name, const DenseMatrix& m) {
    file.tensors.push_back({"grad." + name, m});
  });
  write_tensor_file(path, file);
}

void load_gradients(TinyLM& model, const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  if (file.header.value("kind", "") != "gradients") throw FormatError(path.string() + " is not a gradient artifact");
  if (config_from_header(file) != model.config()) {
    throw FormatError("gradient artifact " + path.string() + " was computed for a different model config");
  }
  model.mutable_grads() = params_from_file(file, model.config(), "grad.");
}

}  // namespace lowrank
