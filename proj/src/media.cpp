#include "litevsr/media.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "litevsr/errors.hpp"

namespace litevsr {

namespace fs = std::filesystem;
using detail::read_pod;
using detail::write_pod;

namespace {

constexpr std::string_view kVideoMagic = "LVSRVID1";
constexpr std::string_view kFeatureMagic = "LVSRFEA1";
constexpr std::string_view kLandmarkMagic = "# litevsr-landmarks v1";

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  return out;
}

}  // namespace

void LandmarkTrack::validate() const {
  if (points.empty() || points.size() % kNumLandmarks != 0) {
    throw DataError("landmark track must hold F >= 1 frames of 68 points");
  }
  for (const auto& p : points) {
    if (!std::isfinite(p.x()) || !std::isfinite(p.y())) {
      throw DataError("landmark track contains non-finite coordinates");
    }
  }
  if (!(frame_rate > 0.0)) throw DataError("landmark frame rate must be positive");
}

RawVideo read_video(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  detail::expect_magic(in, kVideoMagic, path.string());
  RawVideo v;
  v.frames = static_cast<int>(read_pod<uint32_t>(in, "frames"));
  v.height = static_cast<int>(read_pod<uint32_t>(in, "height"));
  v.width = static_cast<int>(read_pod<uint32_t>(in, "width"));
  v.channels = static_cast<int>(read_pod<uint32_t>(in, "channels"));
  v.fps = read_pod<double>(in, "fps");
  if (v.channels != 1 && v.channels != 3) {
    throw DataError(fmt::format("{}: unsupported channel count {}", path.string(), v.channels));
  }
  v.pixels.resize(static_cast<size_t>(v.frames) * v.height * v.width * v.channels);
  detail::read_bytes(in, v.pixels.data(), v.pixels.size(), "pixels");
  return v;
}

void write_video(const fs::path& path, const RawVideo& v) {
  auto out = open_out(path, std::ios::binary);
  out.write(kVideoMagic.data(), kVideoMagic.size());
  write_pod<uint32_t>(out, v.frames);
  write_pod<uint32_t>(out, v.height);
  write_pod<uint32_t>(out, v.width);
  write_pod<uint32_t>(out, v.channels);
  write_pod<double>(out, v.fps);
  out.write(reinterpret_cast<const char*>(v.pixels.data()),
            static_cast<std::streamsize>(v.pixels.size()));
}

RawVideo to_raw_video(const VideoTensor& video, double fps) {
  RawVideo raw;
  raw.frames = video.frames;
  raw.height = video.height;
  raw.width = video.width;
  raw.channels = video.channels;
  raw.fps = fps;
  raw.pixels.resize(video.data.size());
  for (size_t i = 0; i < video.data.size(); ++i) {
    raw.pixels[i] =
        static_cast<uint8_t>(std::lround(std::clamp(video.data[i], 0.0, 1.0) * 255.0));
  }
  return raw;
}

LandmarkTrack read_landmarks(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kLandmarkMagic, 0) != 0) {
    throw DataError(fmt::format("{}: missing landmark header", path.string()));
  }
  if (!std::getline(in, line)) {
    throw DataError(fmt::format("{}: missing landmark dimensions line", path.string()));
  }
  std::istringstream header(line);
  std::string key;
  int frames = -1;
  int points = -1;
  double fps = -1.0;
  while (header >> key) {
    if (key == "frames") {
      header >> frames;
    } else if (key == "fps") {
      header >> fps;
    } else if (key == "points") {
      header >> points;
    } else {
      throw DataError(fmt::format("{}: unknown header key '{}'", path.string(), key));
    }
  }
  if (frames < 1 || points != kNumLandmarks || !(fps > 0.0)) {
    throw DataError(fmt::format("{}: invalid header '{}'", path.string(), line));
  }
  LandmarkTrack track;
  track.frame_rate = fps;
  track.points.resize(static_cast<size_t>(frames) * kNumLandmarks);
  for (int f = 0; f < frames; ++f) {
    for (int i = 0; i < kNumLandmarks; ++i) {
      double x = 0.0;
      double y = 0.0;
      if (!(in >> x >> y)) {
        throw DataError(fmt::format("{}: truncated at frame {}", path.string(), f));
      }
      track.point(f, i) = {x, y};
    }
  }
  track.validate();
  return track;
}

void write_landmarks(const fs::path& path, const LandmarkTrack& track) {
  track.validate();
  auto out = open_out(path);
  out << kLandmarkMagic << '\n';
  out << fmt::format("frames {} fps {} points {}\n", track.frames(), track.frame_rate,
                     kNumLandmarks);
  for (int f = 0; f < track.frames(); ++f) {
    for (int i = 0; i < kNumLandmarks; ++i) {
      const auto& p = track.point(f, i);
      out << fmt::format("{}{:.17g} {:.17g}", i == 0 ? "" : " ", p.x(), p.y());
    }
    out << '\n';
  }
}

Matrix read_features(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  detail::expect_magic(in, kFeatureMagic, path.string());
  const auto rows = read_pod<uint32_t>(in, "rows");
  const auto cols = read_pod<uint32_t>(in, "cols");
  std::vector<float> buf(static_cast<size_t>(rows) * cols);
  detail::read_bytes(in, buf.data(), buf.size() * sizeof(float), "feature data");
  Matrix m(rows, cols);
  for (size_t i = 0; i < buf.size(); ++i) m.data()[i] = buf[i];
  return m;
}

void write_features(const fs::path& path, const Matrix& features) {
  auto out = open_out(path, std::ios::binary);
  out.write(kFeatureMagic.data(), kFeatureMagic.size());
  write_pod<uint32_t>(out, static_cast<uint32_t>(features.rows()));
  write_pod<uint32_t>(out, static_cast<uint32_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.size(); ++i) {
    write_pod<float>(out, static_cast<float>(features.data()[i]));
  }
}

}  // namespace litevsr
