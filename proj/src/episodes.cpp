#include "socnav/episodes.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "socnav/errors.hpp"

namespace socnav {
namespace fs = std::filesystem;

namespace {

bool finite(double v) { return std::isfinite(v); }

std::string frame_file(std::size_t index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu.%s", index, ext);
  return buf;
}

// %.17g round-trips every double exactly through strtod.
std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_bytes(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw StorageError("write failed: " + path.string());
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing file: " + path.filename().string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

std::vector<char> encode_points(const std::vector<Point3f>& points) {
  std::vector<char> out(points.size() * 12);
  char* p = out.data();
  for (const auto& pt : points) {
    for (float f : {pt.x, pt.y, pt.z}) {
      std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(f));
      std::memcpy(p, &bits, 4);
      p += 4;
    }
  }
  return out;
}

std::vector<Point3f> decode_points(const std::vector<char>& bytes, std::size_t n) {
  std::vector<Point3f> points(n);
  const char* p = bytes.data();
  auto next = [&p] {
    std::uint32_t bits;
    std::memcpy(&bits, p, 4);
    p += 4;
    return std::bit_cast<float>(to_little_endian(bits));
  };
  for (auto& pt : points) {
    pt.x = next();
    pt.y = next();
    pt.z = next();
  }
  return points;
}

}  // namespace

void write_points_file(const fs::path& path, const std::vector<Point3f>& points) {
  const auto bytes = encode_points(points);
  write_bytes(path, bytes.data(), bytes.size());
}

std::vector<Point3f> read_points_file(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw FormatError("cannot read points file " + path.string());
  auto bytes = read_bytes(path);
  if (bytes.size() % 12 != 0)
    throw FormatError(path.filename().string() + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of 12 bytes (float32 x, y, z)");
  return decode_points(bytes, bytes.size() / 12);
}

Image Image::filled(std::uint8_t r, std::uint8_t g, std::uint8_t b, int height, int width) {
  Image img;
  img.height = height;
  img.width = width;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(height) * width * 3);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

std::vector<std::string> validate_episode(const Episode& ep, const CommandLimits& limits) {
  std::vector<std::string> out;
  if (ep.id.empty()) out.push_back("episode id is empty");
  if (ep.id.find_first_of("/\\") != std::string::npos || ep.id == "." || ep.id == "..")
    out.push_back("episode id '" + ep.id + "' is not a valid directory name");
  if (ep.scenario.empty()) out.push_back("scenario label is empty");
  if (!finite(ep.rate_hz) || ep.rate_hz <= 0.0) out.push_back("rate_hz must be finite and positive");
  if (ep.frames.size() < 2)
    out.push_back("episode has " + std::to_string(ep.frames.size()) + " frames; at least 2 required");

  for (std::size_t i = 0; i < ep.frames.size(); ++i) {
    const Frame& f = ep.frames[i];
    const std::string where = "frame " + std::to_string(i) + ": ";
    if (!f.image.has_frame_shape()) {
      out.push_back(where + "image is " + std::to_string(f.image.height) + "x" +
                    std::to_string(f.image.width) + "x" + std::to_string(f.image.channels) +
                    " (" + std::to_string(f.image.pixels.size()) + " bytes), expected 224x224x3");
    }
    for (std::size_t p = 0; p < f.points.size(); ++p) {
      const auto& pt = f.points[p];
      if (!std::isfinite(pt.x) || !std::isfinite(pt.y) || !std::isfinite(pt.z)) {
        out.push_back(where + "point " + std::to_string(p) + " has a non-finite coordinate");
        break;
      }
    }
    const Pose2D& o = f.odom;
    if (!finite(o.x) || !finite(o.y) || !finite(o.theta) || !finite(o.stamp)) {
      out.push_back(where + "odometry pose is not finite");
    } else if (!(o.theta > -std::numbers::pi && o.theta <= std::numbers::pi)) {
      out.push_back(where + "odometry heading outside (-pi, pi]");
    }
    if (!finite(f.stamp)) out.push_back(where + "stamp is not finite");
    if (f.stamp != o.stamp) out.push_back(where + "frame stamp differs from odometry stamp");
    if (i > 0 && !(f.stamp > ep.frames[i - 1].stamp))
      out.push_back(where + "stamp is not strictly greater than the previous frame");
    const VelocityCommand& a = f.action;
    if (!finite(a.v) || !finite(a.omega)) {
      out.push_back(where + "action is not finite");
    } else {
      if (std::abs(a.v) > limits.v_max) out.push_back(where + "|v| exceeds v_max");
      if (std::abs(a.omega) > limits.omega_max) out.push_back(where + "|omega| exceeds omega_max");
    }
  }
  return out;
}

fs::path save_episode(const Episode& ep, const fs::path& dir) {
  auto violations = validate_episode(ep);
  if (!violations.empty()) throw ValidationError("invalid episode: " + violations.front());

  const fs::path root = dir / ep.id;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw StorageError("cannot create " + root.string() + ": " + ec.message());

  nlohmann::json meta = {{"id", ep.id},
                         {"scenario", ep.scenario},
                         {"rate_hz", ep.rate_hz},
                         {"n_frames", ep.frames.size()},
                         {"format_version", kEpisodeFormatVersion}};
  const std::string meta_text = meta.dump(2) + "\n";
  write_bytes(root / "meta.json", meta_text.data(), meta_text.size());

  std::string index;
  for (std::size_t i = 0; i < ep.frames.size(); ++i) {
    const Frame& f = ep.frames[i];
    index += exact(f.stamp) + ' ' + exact(f.action.v) + ' ' + exact(f.action.omega) + ' ' +
             exact(f.odom.x) + ' ' + exact(f.odom.y) + ' ' + exact(f.odom.theta) + ' ' +
             std::to_string(f.points.size()) + '\n';
    auto pts = encode_points(f.points);
    write_bytes(root / frame_file(i, "pts"), pts.data(), pts.size());
    write_bytes(root / frame_file(i, "img"), f.image.pixels.data(), f.image.pixels.size());
  }
  write_bytes(root / "frames.idx", index.data(), index.size());
  return root;
}

Episode load_episode(const fs::path& dir) {
  Episode ep;
  {
    auto bytes = read_bytes(dir / "meta.json");
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(bytes.begin(), bytes.end());
      if (meta.at("format_version").get<std::string>() != kEpisodeFormatVersion)
        throw FormatError("meta.json: unsupported format_version");
      ep.id = meta.at("id").get<std::string>();
      ep.scenario = meta.at("scenario").get<std::string>();
      ep.rate_hz = meta.at("rate_hz").get<double>();
      ep.frames.resize(meta.at("n_frames").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("meta.json: ") + e.what());
    }
  }

  auto idx_bytes = read_bytes(dir / "frames.idx");
  std::istringstream lines(std::string(idx_bytes.begin(), idx_bytes.end()));
  std::string line;
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    if (i >= ep.frames.size()) throw FormatError("frames.idx: more lines than n_frames in meta.json");
    const char* p = line.c_str();
    char* end = nullptr;
    double vals[6];
    for (double& v : vals) {
      v = std::strtod(p, &end);
      if (end == p) throw FormatError("frames.idx: malformed line " + std::to_string(i + 1));
      p = end;
    }
    long long n_points = std::strtoll(p, &end, 10);
    if (end == p || n_points < 0) throw FormatError("frames.idx: bad point count on line " + std::to_string(i + 1));

    Frame& f = ep.frames[i];
    f.stamp = vals[0];
    f.action = {vals[1], vals[2]};
    f.odom = {vals[3], vals[4], vals[5], vals[0]};

    const std::string pts_name = frame_file(i, "pts");
    auto pts = read_bytes(dir / pts_name);
    if (pts.size() != static_cast<std::size_t>(n_points) * 12)
      throw FormatError(pts_name + ": expected " + std::to_string(n_points * 12) + " bytes, found " +
                        std::to_string(pts.size()));
    f.points = decode_points(pts, static_cast<std::size_t>(n_points));

    const std::string img_name = frame_file(i, "img");
    auto img = read_bytes(dir / img_name);
    constexpr std::size_t img_size = std::size_t{kImageHeight} * kImageWidth * kImageChannels;
    if (img.size() != img_size)
      throw FormatError(img_name + ": expected " + std::to_string(img_size) + " bytes, found " +
                        std::to_string(img.size()));
    f.image.pixels.assign(img.begin(), img.end());
    ++i;
  }
  if (i != ep.frames.size())
    throw FormatError("frames.idx: " + std::to_string(i) + " lines but meta.json declares " +
                      std::to_string(ep.frames.size()) + " frames");
  auto violations = validate_episode(ep);
  if (!violations.empty()) throw FormatError(dir.filename().string() + ": " + violations.front());
  return ep;
}

}  // namespace socnav
