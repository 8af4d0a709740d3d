#include "litevsr/nn/weights.hpp"

#include <fstream>

#include <fmt/format.h>

#include "../binary_io.hpp"
#include "litevsr/errors.hpp"

namespace litevsr::nn {

namespace fs = std::filesystem;
using detail::read_pod;
using detail::write_pod;
using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "LVSRWTS1";

size_t dtype_size(DType t) { return t == DType::kFloat32 ? 4 : 8; }

const char* dtype_name(DType t) { return t == DType::kFloat32 ? "float32" : "float64"; }

}  // namespace

const WeightEntry* WeightsFile::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

fs::path layout_path(const fs::path& weights_path) {
  return fs::path(weights_path.string() + ".json");
}

void write_weights(const fs::path& path, const WeightsFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write weights {}", path.string()));
  out.write(kMagic.data(), kMagic.size());
  write_pod<uint32_t>(out, static_cast<uint32_t>(file.entries.size()));

  json layout_entries = json::array();
  for (const auto& e : file.entries) {
    if (numel(e.shape) != e.data.size()) {
      throw DimensionError(fmt::format("weights entry {} has inconsistent shape", e.name));
    }
    write_pod<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod<uint8_t>(out, static_cast<uint8_t>(e.dtype));
    write_pod<uint32_t>(out, static_cast<uint32_t>(e.shape.size()));
    for (int d : e.shape) write_pod<int64_t>(out, d);
    const uint64_t nbytes = e.data.size() * dtype_size(e.dtype);
    write_pod<uint64_t>(out, nbytes);
    const auto offset = static_cast<uint64_t>(out.tellp());
    if (e.dtype == DType::kFloat64) {
      out.write(reinterpret_cast<const char*>(e.data.data()), static_cast<std::streamsize>(nbytes));
    } else {
      for (double v : e.data) write_pod<float>(out, static_cast<float>(v));
    }
    layout_entries.push_back({{"name", e.name},
                              {"shape", e.shape},
                              {"dtype", dtype_name(e.dtype)},
                              {"offset", offset},
                              {"nbytes", nbytes}});
  }
  if (!out) throw DataError(fmt::format("failed writing weights {}", path.string()));

  json layout{{"format", "litevsr-weights"},
              {"version", 1},
              {"model", file.model.is_null() ? json::object() : file.model},
              {"entries", std::move(layout_entries)}};
  std::ofstream lout(layout_path(path));
  if (!lout) throw DataError(fmt::format("cannot write {}", layout_path(path).string()));
  lout << layout.dump(2) << '\n';
}

WeightsFile read_weights(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open weights {}", path.string()));
  detail::expect_magic(in, kMagic, path.string());
  WeightsFile file;
  const auto count = read_pod<uint32_t>(in, "entry count");
  for (uint32_t i = 0; i < count; ++i) {
    WeightEntry e;
    const auto name_len = read_pod<uint32_t>(in, "name length");
    e.name.resize(name_len);
    detail::read_bytes(in, e.name.data(), name_len, "name");
    const auto dtype = read_pod<uint8_t>(in, "dtype");
    if (dtype > 1) throw DataError(fmt::format("{}: unknown dtype {}", e.name, dtype));
    e.dtype = static_cast<DType>(dtype);
    const auto ndim = read_pod<uint32_t>(in, "ndim");
    for (uint32_t d = 0; d < ndim; ++d) e.shape.push_back(static_cast<int>(read_pod<int64_t>(in, "dim")));
    const auto nbytes = read_pod<uint64_t>(in, "nbytes");
    const size_t n = numel(e.shape);
    if (nbytes != n * dtype_size(e.dtype)) {
      throw DataError(fmt::format("{}: byte count {} does not match shape", e.name, nbytes));
    }
    e.data.resize(n);
    if (e.dtype == DType::kFloat64) {
      detail::read_bytes(in, e.data.data(), nbytes, "tensor data");
    } else {
      std::vector<float> buf(n);
      detail::read_bytes(in, buf.data(), nbytes, "tensor data");
      for (size_t j = 0; j < n; ++j) e.data[j] = buf[j];
    }
    file.entries.push_back(std::move(e));
  }
  if (fs::exists(layout_path(path))) {
    std::ifstream lin(layout_path(path));
    try {
      json layout = json::parse(lin);
      file.model = layout.value("model", json::object());
    } catch (const json::exception& ex) {
      throw DataError(fmt::format("{}: {}", layout_path(path).string(), ex.what()));
    }
  }
  return file;
}

WeightsFile to_weights(const ParameterList& params, json model, DType dtype) {
  WeightsFile file;
  file.model = std::move(model);
  for (const auto& p : params) {
    file.entries.push_back(
        {p.name, p.var.shape(), dtype, {p.var.value().begin(), p.var.value().end()}});
  }
  return file;
}

void load_parameters(const ParameterList& params, const WeightsFile& file) {
  for (const auto& p : params) {
    const WeightEntry* e = file.find(p.name);
    if (!e) throw DataError(fmt::format("weights file lacks parameter '{}'", p.name));
    if (e->shape != p.var.shape()) {
      throw DimensionError(fmt::format("parameter '{}': file shape {} vs model {}", p.name,
                                       shape_string(e->shape), shape_string(p.var.shape())));
    }
    auto dst = p.var.node()->value.begin();
    std::copy(e->data.begin(), e->data.end(), dst);
  }
}

}  // namespace litevsr::nn
