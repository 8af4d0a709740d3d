#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "litevsr/media.hpp"

namespace litevsr {

// Landmark indices (68-point scheme) used for mouth geometry. The centre is the
// mean of the two lip corners and the outer top/bottom lip midpoints.
struct MouthLandmarks {
  std::array<int, 4> center_indices{48, 54, 51, 57};
  int left_corner = 48;
  int right_corner = 54;
};

struct MouthTrack {
  std::vector<Eigen::Vector2d> center;  // pixels
  std::vector<double> width;            // pixels, > 0

  int frames() const { return static_cast<int>(width.size()); }
};

enum class CropMode { kFramewise, kSmooth, kFixed };

std::string to_string(CropMode mode);
CropMode crop_mode_from_string(const std::string& text);

struct CropConfig {
  CropMode mode = CropMode::kFixed;
  double gaussian_sigma = 4.0;  // frames
  double width_scale = 1.5;     // crop side / mouth width
  int out_size = 88;
  bool grayscale = true;
  MouthLandmarks landmarks;

  void validate() const;
};

struct CropRect {
  double cx = 0.0;
  double cy = 0.0;
  double side = 0.0;

  bool operator==(const CropRect&) const = default;
};

struct CropPlan {
  CropMode mode = CropMode::kFixed;
  std::vector<CropRect> rects;

  int frames() const { return static_cast<int>(rects.size()); }

  // {"mode": "...", "rects": [[cx, cy, side], ...]}
  void save(const std::filesystem::path& path) const;
  static CropPlan load(const std::filesystem::path& path);
};

struct AugmentConfig {
  double max_center_shift = 0.0;   // pixels, per axis
  double width_jitter_frac = 0.0;  // in [0, 1)
  uint64_t seed = 0;

  void validate() const;
};

MouthTrack mouth_geometry(const LandmarkTrack& track, const MouthLandmarks& lm = {});

CropPlan plan_framewise(const MouthTrack& m, const CropConfig& cfg);
// Maximum width and mean centre over the whole clip, replicated to all frames.
CropPlan plan_fixed(const MouthTrack& m, const CropConfig& cfg);
// Gaussian-smoothed centres and widths, then framewise rects.
CropPlan plan_smooth(const MouthTrack& m, const CropConfig& cfg);
// Dispatches on cfg.mode.
CropPlan plan_crop(const MouthTrack& m, const CropConfig& cfg);

// Normalized Gaussian taps for offsets -r..r with r = floor(4 sigma + 0.5).
std::vector<double> gaussian_kernel(double sigma);
// Convolution with gaussian_kernel under half-sample symmetric (reflect)
// extension of the signal.
std::vector<double> gaussian_smooth(std::span<const double> signal, double sigma);

// One centre offset and one width multiplier drawn per clip and applied to
// every rect.
CropPlan augment_plan(const CropPlan& plan, const AugmentConfig& aug);

// Crops every frame (edge replication outside the image), resizes bilinearly
// to out_size x out_size and scales to [0, 1].
VideoTensor apply_plan(const RawVideo& video, const CropPlan& plan, const CropConfig& cfg);

}  // namespace litevsr
