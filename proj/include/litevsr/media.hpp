#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "litevsr/types.hpp"

namespace litevsr {

// Decoded 8-bit video, row-major [F, H, W, C].
struct RawVideo {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 1;
  double fps = 25.0;
  std::vector<uint8_t> pixels;

  uint8_t at(int f, int y, int x, int c) const {
    return pixels[((static_cast<size_t>(f) * height + y) * width + x) * channels + c];
  }
  uint8_t& at(int f, int y, int x, int c) {
    return pixels[((static_cast<size_t>(f) * height + y) * width + x) * channels + c];
  }
};

// Float video tensor [F, H, W, C] with values in [0, 1]; the model input.
struct VideoTensor {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> data;

  double at(int f, int y, int x, int c) const {
    return data[((static_cast<size_t>(f) * height + y) * width + x) * channels + c];
  }
  double& at(int f, int y, int x, int c) {
    return data[((static_cast<size_t>(f) * height + y) * width + x) * channels + c];
  }
  size_t frame_size() const { return static_cast<size_t>(height) * width * channels; }
};

inline constexpr int kNumLandmarks = 68;

// Per-frame 68-point facial landmarks in pixels, origin top-left.
struct LandmarkTrack {
  std::vector<Eigen::Vector2d> points;  // [F * 68]
  double frame_rate = 25.0;

  int frames() const { return static_cast<int>(points.size()) / kNumLandmarks; }
  const Eigen::Vector2d& point(int f, int i) const { return points[f * kNumLandmarks + i]; }
  Eigen::Vector2d& point(int f, int i) { return points[f * kNumLandmarks + i]; }

  void validate() const;
};

// Raw video container (.lvv):
//   "LVSRVID1" | u32 frames | u32 height | u32 width | u32 channels | f64 fps |
//   u8 pixels[F*H*W*C]
// All integers and floats little-endian.
RawVideo read_video(const std::filesystem::path& path);
void write_video(const std::filesystem::path& path, const RawVideo& video);

// Quantizes a [0,1] tensor to 8 bits for storage.
RawVideo to_raw_video(const VideoTensor& video, double fps);

// Landmark text table (.lmk):
//   # litevsr-landmarks v1
//   frames <F> fps <rate> points 68
//   <136 numbers per line: x0 y0 x1 y1 ...>   (F lines)
LandmarkTrack read_landmarks(const std::filesystem::path& path);
void write_landmarks(const std::filesystem::path& path, const LandmarkTrack& track);

// Feature matrix (.lvf): "LVSRFEA1" | u32 rows | u32 cols | f32 data[rows*cols]
Matrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Matrix& features);

}  // namespace litevsr
