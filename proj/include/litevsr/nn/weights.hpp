#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "litevsr/nn/layers.hpp"

namespace litevsr::nn {

enum class DType : uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct WeightEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::kFloat64;
  std::vector<double> data;
};

// Weights interchange file.
//
// Binary table (<name>.lvw), all values little-endian:
//   "LVSRWTS1" | u32 entry_count |
//   entry_count x { u32 name_len | name bytes | u8 dtype (0 f32, 1 f64) |
//                   u32 ndim | i64 dims[ndim] | u64 nbytes | raw data }
//
// JSON layout manifest (<name>.lvw.json):
//   { "format": "litevsr-weights", "version": 1, "model": {...},
//     "entries": [ { "name", "shape", "dtype", "offset", "nbytes" } ] }
// where offset is the byte position of the raw data inside the table, so an
// external reader can seek to any tensor without parsing the headers.
struct WeightsFile {
  std::vector<WeightEntry> entries;
  nlohmann::json model;  // free-form model description (config, kind)

  const WeightEntry* find(const std::string& name) const;
};

std::filesystem::path layout_path(const std::filesystem::path& weights_path);

void write_weights(const std::filesystem::path& path, const WeightsFile& file);
WeightsFile read_weights(const std::filesystem::path& path);

WeightsFile to_weights(const ParameterList& params, nlohmann::json model,
                       DType dtype = DType::kFloat64);
// Copies values by name. Every parameter must be present with a matching shape.
void load_parameters(const ParameterList& params, const WeightsFile& file);

}  // namespace litevsr::nn
