#include "litevsr/manifest.hpp"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "litevsr/errors.hpp"

namespace litevsr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(LabelSource source) {
  switch (source) {
    case LabelSource::kHuman:
      return "human";
    case LabelSource::kPseudo:
      return "pseudo";
    case LabelSource::kNone:
      return "none";
  }
  return "none";
}

LabelSource label_source_from_string(const std::string& text) {
  if (text == "human") return LabelSource::kHuman;
  if (text == "pseudo") return LabelSource::kPseudo;
  if (text == "none") return LabelSource::kNone;
  throw DataError(fmt::format("unknown label_source '{}'", text));
}

namespace {

const json& require(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    throw DataError(fmt::format("missing required field '{}'", field));
  }
  return *it;
}

std::string require_string(const json& obj, const char* field) {
  const json& v = require(obj, field);
  if (!v.is_string()) {
    throw DataError(fmt::format("field '{}' must be a string", field));
  }
  return v.get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

fs::path relative_if_below(const fs::path& base, const fs::path& p) {
  if (base.empty() || !p.is_absolute()) return p;
  auto rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p;
  return rel;
}

}  // namespace

SampleManifestEntry parse_manifest_line(const std::string& line,
                                        const fs::path& base_dir) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("invalid JSON: {}", e.what()));
  }
  if (!obj.is_object()) throw DataError("manifest line is not a JSON object");

  SampleManifestEntry entry;
  entry.sample_id = require_string(obj, "sample_id");
  if (entry.sample_id.empty()) throw DataError("field 'sample_id' is empty");
  entry.video_path = resolve(base_dir, require_string(obj, "video_path"));
  entry.landmark_path = resolve(base_dir, require_string(obj, "landmark_path"));
  entry.label_source = label_source_from_string(require_string(obj, "label_source"));

  const json& duration = require(obj, "duration_s");
  if (!duration.is_number()) throw DataError("field 'duration_s' must be a number");
  entry.duration_s = duration.get<double>();
  if (entry.duration_s < 0.0) throw DataError("field 'duration_s' is negative");

  if (auto it = obj.find("audio_path"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError("field 'audio_path' must be a string");
    entry.audio_path = resolve(base_dir, it->get<std::string>());
  }
  if (auto it = obj.find("transcript"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError("field 'transcript' must be a string");
    entry.transcript = it->get<std::string>();
  }

  if (entry.labeled() && !entry.transcript) {
    throw DataError(fmt::format("missing required field 'transcript' (label_source {})",
                                to_string(entry.label_source)));
  }
  if (!entry.labeled() && entry.transcript) {
    throw DataError("field 'transcript' present but label_source is none");
  }
  return entry;
}

ManifestLoadResult load_manifest(const fs::path& path,
                                 const ManifestLoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open manifest {}", path.string()));
  const fs::path base = path.parent_path();

  ManifestLoadResult result;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto entry = parse_manifest_line(line, base);
      if (options.require_files) {
        std::vector<fs::path> files{entry.video_path, entry.landmark_path};
        if (entry.audio_path) files.push_back(*entry.audio_path);
        for (const auto& f : files) {
          if (!fs::exists(f)) {
            throw DataError(fmt::format("referenced file {} does not exist", f.string()));
          }
        }
      }
      result.entries.push_back(std::move(entry));
    } catch (const DataError& e) {
      const std::string msg =
          fmt::format("{}:{}: {}", path.string(), line_no, e.what());
      if (options.strict) throw DataError(msg);
      result.diagnostics.push_back({line_no, msg});
    }
  }
  return result;
}

void write_manifest(const fs::path& path,
                    const std::vector<SampleManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write manifest {}", path.string()));
  const fs::path base = fs::absolute(path).parent_path();
  for (const auto& e : entries) {
    json obj;
    obj["sample_id"] = e.sample_id;
    obj["video_path"] = relative_if_below(base, fs::absolute(e.video_path)).generic_string();
    obj["landmark_path"] =
        relative_if_below(base, fs::absolute(e.landmark_path)).generic_string();
    if (e.audio_path) {
      obj["audio_path"] = relative_if_below(base, fs::absolute(*e.audio_path)).generic_string();
    }
    if (e.transcript) obj["transcript"] = *e.transcript;
    obj["label_source"] = to_string(e.label_source);
    obj["duration_s"] = e.duration_s;
    out << obj.dump() << '\n';
  }
}

}  // namespace litevsr
