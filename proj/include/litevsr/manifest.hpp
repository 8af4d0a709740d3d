#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace litevsr {

enum class LabelSource { kHuman, kPseudo, kNone };

std::string to_string(LabelSource source);
LabelSource label_source_from_string(const std::string& text);

struct SampleManifestEntry {
  std::string sample_id;
  std::filesystem::path video_path;
  std::filesystem::path landmark_path;
  std::optional<std::filesystem::path> audio_path;
  std::optional<std::string> transcript;
  LabelSource label_source = LabelSource::kNone;
  double duration_s = 0.0;

  bool labeled() const { return label_source != LabelSource::kNone; }
};

struct ManifestDiagnostic {
  int line = 0;
  std::string message;
};

struct ManifestLoadOptions {
  // Abort on the first malformed line instead of collecting diagnostics.
  bool strict = false;
  // Require every referenced file to exist.
  bool require_files = false;
};

struct ManifestLoadResult {
  std::vector<SampleManifestEntry> entries;
  std::vector<ManifestDiagnostic> diagnostics;
};

// Reads a JSON-lines manifest. Relative paths resolve against the manifest's
// directory. Blank lines are skipped.
ManifestLoadResult load_manifest(const std::filesystem::path& path,
                                 const ManifestLoadOptions& options = {});

// Parses one manifest line; throws DataError naming the offending field.
SampleManifestEntry parse_manifest_line(const std::string& line,
                                        const std::filesystem::path& base_dir);

// Writes entries with paths made relative to the manifest's directory when
// they live below it.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<SampleManifestEntry>& entries);

}  // namespace litevsr
