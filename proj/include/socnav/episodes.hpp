#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "socnav/geometry.hpp"

namespace socnav {

/// Odometry pose in the world frame. theta is CCW from +x, in (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double stamp = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

struct VelocityCommand {
  double v = 0.0;      // m/s
  double omega = 0.0;  // rad/s
  friend bool operator==(const VelocityCommand&, const VelocityCommand&) = default;
};

/// Robot-frame LiDAR return: +x forward, +y left, +z up.
struct Point3f {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  friend bool operator==(const Point3f&, const Point3f&) = default;
};

inline constexpr int kImageHeight = 224;
inline constexpr int kImageWidth = 224;
inline constexpr int kImageChannels = 3;

/// Row-major 8-bit RGB image. Frames require 224x224x3; other sizes are
/// representable so that validation can report them.
struct Image {
  int height = kImageHeight;
  int width = kImageWidth;
  int channels = kImageChannels;
  std::vector<std::uint8_t> pixels;

  static Image filled(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                      int height = kImageHeight, int width = kImageWidth);

  bool has_frame_shape() const {
    return height == kImageHeight && width == kImageWidth && channels == kImageChannels &&
           pixels.size() == static_cast<std::size_t>(height) * width * channels;
  }
  std::uint8_t at(int row, int col, int ch) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

struct Frame {
  double stamp = 0.0;
  std::vector<Point3f> points;
  Image image;
  Pose2D odom;
  VelocityCommand action;
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Episode {
  std::string id;
  std::string scenario;
  std::vector<Frame> frames;
  double rate_hz = 10.0;
  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Actuation limits checked by validate_episode.
struct CommandLimits {
  double v_max = 2.0;
  double omega_max = 1.5;
};

/// Returns human-readable descriptions of every violated invariant; empty when
/// the episode is valid.
std::vector<std::string> validate_episode(const Episode& ep, const CommandLimits& limits = {});

/// Writes `ep` into `dir/<ep.id>/` and returns that directory.
///
/// Layout: meta.json, frames.idx (one text line per frame), and per frame a
/// little-endian float32 point file and a raw RGB image file. Throws
/// ValidationError for invalid episodes and StorageError on I/O failure.
std::filesystem::path save_episode(const Episode& ep, const std::filesystem::path& dir);

/// Reads an episode directory written by save_episode. Throws FormatError
/// naming the offending file when the layout is missing or corrupt.
Episode load_episode(const std::filesystem::path& dir);

/// Standalone point file: little-endian float32 x, y, z triples, no header.
/// Reading throws FormatError when the size is not a multiple of 12 bytes.
void write_points_file(const std::filesystem::path& path, const std::vector<Point3f>& points);
std::vector<Point3f> read_points_file(const std::filesystem::path& path);

inline constexpr const char* kEpisodeFormatVersion = "1";

}  // namespace socnav
