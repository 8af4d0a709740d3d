#include "litevsr/crop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "litevsr/errors.hpp"
#include "litevsr/rng.hpp"

namespace litevsr {

using nlohmann::json;

std::string to_string(CropMode mode) {
  switch (mode) {
    case CropMode::kFramewise:
      return "framewise";
    case CropMode::kSmooth:
      return "smooth";
    case CropMode::kFixed:
      return "fixed";
  }
  return "fixed";
}

CropMode crop_mode_from_string(const std::string& text) {
  if (text == "framewise") return CropMode::kFramewise;
  if (text == "smooth") return CropMode::kSmooth;
  if (text == "fixed") return CropMode::kFixed;
  throw ConfigError(fmt::format("unknown crop mode '{}' (framewise, smooth, fixed)", text));
}

void CropConfig::validate() const {
  if (!(gaussian_sigma > 0.0)) throw ConfigError("gaussian_sigma must be positive");
  if (!(width_scale >= 1.0)) throw ConfigError("width_scale must be >= 1");
  if (out_size < 16) throw ConfigError("out_size must be >= 16");
  for (int i : landmarks.center_indices) {
    if (i < 0 || i >= kNumLandmarks) throw ConfigError("mouth landmark index out of range");
  }
}

void AugmentConfig::validate() const {
  if (!(max_center_shift >= 0.0)) throw ConfigError("max_center_shift must be >= 0");
  if (!(width_jitter_frac >= 0.0 && width_jitter_frac < 1.0)) {
    throw ConfigError("width_jitter_frac must lie in [0, 1)");
  }
}

void CropPlan::save(const std::filesystem::path& path) const {
  json rect_list = json::array();
  for (const auto& r : rects) rect_list.push_back({r.cx, r.cy, r.side});
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write crop plan {}", path.string()));
  out << json{{"mode", to_string(mode)}, {"rects", std::move(rect_list)}}.dump() << '\n';
}

CropPlan CropPlan::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open crop plan {}", path.string()));
  CropPlan plan;
  try {
    const json j = json::parse(in);
    plan.mode = crop_mode_from_string(j.at("mode").get<std::string>());
    for (const auto& r : j.at("rects")) {
      plan.rects.push_back({r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return plan;
}

MouthTrack mouth_geometry(const LandmarkTrack& track, const MouthLandmarks& lm) {
  track.validate();
  MouthTrack m;
  const int frames = track.frames();
  m.center.reserve(frames);
  m.width.reserve(frames);
  for (int f = 0; f < frames; ++f) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (int i : lm.center_indices) c += track.point(f, i);
    m.center.push_back(c / static_cast<double>(lm.center_indices.size()));
    const double w = (track.point(f, lm.left_corner) - track.point(f, lm.right_corner)).norm();
    if (!(w > 0.0)) {
      throw DataError(fmt::format("frame {}: lip corners coincide (zero mouth width)", f));
    }
    m.width.push_back(w);
  }
  return m;
}

namespace {

void check_track(const MouthTrack& m) {
  if (m.frames() == 0 || m.center.size() != m.width.size()) {
    throw DataError("mouth track must hold at least one frame");
  }
}

}  // namespace

CropPlan plan_framewise(const MouthTrack& m, const CropConfig& cfg) {
  check_track(m);
  CropPlan plan{CropMode::kFramewise, {}};
  for (int f = 0; f < m.frames(); ++f) {
    plan.rects.push_back({m.center[f].x(), m.center[f].y(), cfg.width_scale * m.width[f]});
  }
  return plan;
}

CropPlan plan_fixed(const MouthTrack& m, const CropConfig& cfg) {
  check_track(m);
  // Mean as an offset from the first centre, exact for a constant track.
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  for (const auto& p : m.center) offset += p - m.center[0];
  const Eigen::Vector2d c = m.center[0] + offset / static_cast<double>(m.frames());
  const double w = *std::max_element(m.width.begin(), m.width.end());
  return CropPlan{CropMode::kFixed,
                  std::vector<CropRect>(m.frames(), {c.x(), c.y(), cfg.width_scale * w})};
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

std::vector<double> gaussian_smooth(std::span<const double> signal, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int n = static_cast<int>(signal.size());
  // Index into the period-2n symmetric extension (d c b a | a b c d | d c b a).
  auto reflect = [n](int i) {
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
  };
  // Summing weighted offsets from the centre sample keeps constant signals
  // bit-exact, since the taps only sum to one up to rounding.
  std::vector<double> out(n, 0.0);
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    for (int j = -radius; j <= radius; ++j) {
      acc += k[j + radius] * (signal[reflect(t + j)] - signal[t]);
    }
    out[t] = signal[t] + acc;
  }
  return out;
}

CropPlan plan_smooth(const MouthTrack& m, const CropConfig& cfg) {
  check_track(m);
  std::vector<double> xs(m.frames());
  std::vector<double> ys(m.frames());
  for (int f = 0; f < m.frames(); ++f) {
    xs[f] = m.center[f].x();
    ys[f] = m.center[f].y();
  }
  MouthTrack smoothed;
  const auto sx = gaussian_smooth(xs, cfg.gaussian_sigma);
  const auto sy = gaussian_smooth(ys, cfg.gaussian_sigma);
  smoothed.width = gaussian_smooth(m.width, cfg.gaussian_sigma);
  for (int f = 0; f < m.frames(); ++f) smoothed.center.emplace_back(sx[f], sy[f]);
  CropPlan plan = plan_framewise(smoothed, cfg);
  plan.mode = CropMode::kSmooth;
  return plan;
}

CropPlan plan_crop(const MouthTrack& m, const CropConfig& cfg) {
  switch (cfg.mode) {
    case CropMode::kFramewise:
      return plan_framewise(m, cfg);
    case CropMode::kSmooth:
      return plan_smooth(m, cfg);
    case CropMode::kFixed:
      return plan_fixed(m, cfg);
  }
  return plan_fixed(m, cfg);
}

CropPlan augment_plan(const CropPlan& plan, const AugmentConfig& aug) {
  aug.validate();
  Rng rng(aug.seed);
  const double dx = rng.uniform(-aug.max_center_shift, aug.max_center_shift);
  const double dy = rng.uniform(-aug.max_center_shift, aug.max_center_shift);
  const double mult = rng.uniform(1.0 - aug.width_jitter_frac, 1.0 + aug.width_jitter_frac);
  CropPlan out = plan;
  for (auto& r : out.rects) {
    r.cx += dx;
    r.cy += dy;
    r.side *= mult;
  }
  return out;
}

VideoTensor apply_plan(const RawVideo& video, const CropPlan& plan, const CropConfig& cfg) {
  cfg.validate();
  if (plan.frames() != video.frames) {
    throw DataError(fmt::format("crop plan has {} rects for {} video frames", plan.frames(),
                                video.frames));
  }
  const bool to_gray = cfg.grayscale && video.channels == 3;
  VideoTensor out;
  out.frames = video.frames;
  out.height = cfg.out_size;
  out.width = cfg.out_size;
  out.channels = to_gray ? 1 : video.channels;
  out.data.resize(static_cast<size_t>(out.frames) * out.frame_size());

  const int s = cfg.out_size;
  auto sample = [&](int f, double x, double y, int c) {
    x = std::clamp(x, 0.0, static_cast<double>(video.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(video.height - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, video.width - 1);
    const int y1 = std::min(y0 + 1, video.height - 1);
    const double ax = x - x0;
    const double ay = y - y0;
    const double top = (1 - ax) * video.at(f, y0, x0, c) + ax * video.at(f, y0, x1, c);
    const double bottom = (1 - ax) * video.at(f, y1, x0, c) + ax * video.at(f, y1, x1, c);
    return (1 - ay) * top + ay * bottom;
  };

  for (int f = 0; f < video.frames; ++f) {
    const CropRect& r = plan.rects[f];
    if (!(r.side > 0.0)) throw DataError(fmt::format("frame {}: crop side must be positive", f));
    const double step = r.side / s;
    const double x_start = r.cx - r.side / 2.0;
    const double y_start = r.cy - r.side / 2.0;
    for (int i = 0; i < s; ++i) {
      const double y = y_start + (i + 0.5) * step - 0.5;
      for (int j = 0; j < s; ++j) {
        const double x = x_start + (j + 0.5) * step - 0.5;
        if (to_gray) {
          const double v = 0.299 * sample(f, x, y, 0) + 0.587 * sample(f, x, y, 1) +
                           0.114 * sample(f, x, y, 2);
          out.at(f, i, j, 0) = v / 255.0;
        } else {
          for (int c = 0; c < out.channels; ++c) out.at(f, i, j, c) = sample(f, x, y, c) / 255.0;
        }
      }
    }
  }
  return out;
}

}  // namespace litevsr
