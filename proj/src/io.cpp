#include "matfuse/io.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <sstream>

#include "matfuse/error.hpp"

namespace matfuse {
namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

struct NetpbmHeader {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

NetpbmHeader parse_netpbm(std::span<const unsigned char> bytes, const std::string& name) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError(name + ": not a binary PGM/PPM file");
  }
  NetpbmHeader h;
  h.kind = static_cast<char>(bytes[1]);
  std::size_t pos = 2;
  auto next_int = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    long value = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000) throw FormatError(name + ": header value too large");
      ++pos;
    }
    if (pos == start) throw FormatError(name + ": malformed header");
    return static_cast<int>(value);
  };
  h.width = next_int();
  h.height = next_int();
  h.maxval = next_int();
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(name + ": malformed header");
  h.data_offset = pos + 1;
  if (h.width <= 0 || h.height <= 0) throw FormatError(name + ": zero image dimension");
  if (h.maxval <= 0 || h.maxval > 65535) throw FormatError(name + ": invalid maxval");
  return h;
}

std::string netpbm_header(const char* magic, int width, int height, int maxval) {
  return std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n" +
         std::to_string(maxval) + "\n";
}

std::span<const unsigned char> payload(std::span<const unsigned char> bytes, const NetpbmHeader& h,
                                       std::size_t expected, const std::string& name) {
  if (bytes.size() < h.data_offset + expected) throw FormatError(name + ": truncated pixel data");
  return bytes.subspan(h.data_offset, expected);
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto h = parse_netpbm(bytes, path.string());
  if (h.kind != '6' || h.maxval > 255) throw FormatError(path.string() + ": expected 8-bit P6");
  RgbImage img(h.height, h.width);
  const auto data = payload(bytes, h, img.data().size(), path.string());
  std::copy(data.begin(), data.end(), img.data().begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  const std::string head = netpbm_header("P6", image.width(), image.height(), 255);
  std::vector<unsigned char> bytes(head.begin(), head.end());
  bytes.insert(bytes.end(), image.data().begin(), image.data().end());
  write_file(path, bytes);
}

LabelImage read_label_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto h = parse_netpbm(bytes, path.string());
  if (h.kind != '5' || h.maxval > 255) throw FormatError(path.string() + ": expected 8-bit P5");
  LabelImage img(h.height, h.width);
  const auto data = payload(bytes, h, img.data().size(), path.string());
  std::copy(data.begin(), data.end(), img.data().begin());
  return img;
}

void write_label_pgm(const std::filesystem::path& path, const LabelImage& image) {
  const std::string head = netpbm_header("P5", image.width(), image.height(), 255);
  std::vector<unsigned char> bytes(head.begin(), head.end());
  bytes.insert(bytes.end(), image.data().begin(), image.data().end());
  write_file(path, bytes);
}

DepthImage read_depth_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto h = parse_netpbm(bytes, path.string());
  if (h.kind != '5' || h.maxval < 256) throw FormatError(path.string() + ": expected 16-bit P5");
  DepthImage img(h.height, h.width);
  const auto data = payload(bytes, h, img.data().size() * 2, path.string());
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    img.data()[i] = static_cast<std::uint16_t>(data[2 * i] << 8 | data[2 * i + 1]);
  }
  return img;
}

void write_depth_pgm(const std::filesystem::path& path, const DepthImage& image) {
  const std::string head = netpbm_header("P5", image.width(), image.height(), 65535);
  std::vector<unsigned char> bytes(head.begin(), head.end());
  bytes.reserve(bytes.size() + image.data().size() * 2);
  for (std::uint16_t v : image.data()) {
    bytes.push_back(static_cast<unsigned char>(v >> 8));
    bytes.push_back(static_cast<unsigned char>(v & 0xff));
  }
  write_file(path, bytes);
}

LabelDistributionImage parse_unary(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "UNRY", 4) != 0) {
    throw FormatError("unary file: bad magic (expected UNRY)");
  }
  const std::uint64_t height = get_u32(bytes.data() + 4);
  const std::uint64_t width = get_u32(bytes.data() + 8);
  const std::uint64_t labels = get_u32(bytes.data() + 12);
  if (height == 0 || width == 0 || labels == 0) throw FormatError("unary file: zero dimension");
  if (height > 65535 || width > 65535 || labels > 255) {
    throw FormatError("unary file: dimensions exceed supported limits");
  }
  const std::uint64_t count = height * width * labels;
  if (bytes.size() - 16 != count * 4) {
    throw FormatError("unary file: payload holds " + std::to_string(bytes.size() - 16) +
                      " bytes, header implies " + std::to_string(count * 4));
  }
  LabelDistributionImage img(static_cast<int>(height), static_cast<int>(width), static_cast<int>(labels));
  auto out = img.data();
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint32_t bits = get_u32(bytes.data() + 16 + 4 * k);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    out[k] = f;
  }
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    auto p = img.pixel(i);
    double sum = 0.0;
    for (double v : p) {
      if (!std::isfinite(v) || v < 0.0) {
        throw FormatError("unary file: invalid probability at pixel " + std::to_string(i));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kUnarySumTolerance) {
      throw FormatError("unary file: probabilities at pixel " + std::to_string(i) + " sum to " +
                        std::to_string(sum));
    }
    for (double& v : p) v /= sum;
  }
  return img;
}

LabelDistributionImage load_unary(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_unary(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_unary(const LabelDistributionImage& image) {
  std::vector<unsigned char> bytes{'U', 'N', 'R', 'Y'};
  bytes.reserve(16 + image.data().size() * 4);
  put_u32(bytes, static_cast<std::uint32_t>(image.height()));
  put_u32(bytes, static_cast<std::uint32_t>(image.width()));
  put_u32(bytes, static_cast<std::uint32_t>(image.labels()));
  for (double v : image.data()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(bytes, bits);
  }
  return bytes;
}

void save_unary(const std::filesystem::path& path, const LabelDistributionImage& image) {
  write_file(path, encode_unary(image));
}

namespace {

constexpr std::array<const char*, 8> kPlyProperties = {
    "property float x",     "property float y",     "property float z",
    "property uchar red",   "property uchar green", "property uchar blue",
    "property uchar label", "property float confidence"};

void write_ply_rows(const std::filesystem::path& path, std::size_t count,
                    const std::function<void(std::size_t, char*, std::size_t)>& row) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << count << "\n";
  for (const char* p : kPlyProperties) out << p << "\n";
  out << "end_header\n";
  char line[256];
  for (std::size_t i = 0; i < count; ++i) {
    row(i, line, sizeof line);
    out << line << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_ply(const std::filesystem::path& path, std::span<const MapPoint> points) {
  write_ply_rows(path, points.size(), [&](std::size_t i, char* buf, std::size_t n) {
    const MapPoint& p = points[i];
    std::snprintf(buf, n, "%.9g %.9g %.9g %u %u %u %u %.9g", static_cast<float>(p.center.x()),
                  static_cast<float>(p.center.y()), static_cast<float>(p.center.z()), p.color[0],
                  p.color[1], p.color[2], p.label, static_cast<float>(p.confidence));
  });
}

void write_cloud_ply(const std::filesystem::path& path, const SemanticPointCloud& cloud) {
  write_ply_rows(path, cloud.size(), [&](std::size_t i, char* buf, std::size_t n) {
    const auto& p = cloud.points[i];
    const auto [label, conf] = cloud.hard_label(i);
    std::snprintf(buf, n, "%.9g %.9g %.9g %u %u %u %u %.9g", static_cast<float>(p.x()),
                  static_cast<float>(p.y()), static_cast<float>(p.z()), cloud.colors[i][0],
                  cloud.colors[i][1], cloud.colors[i][2], label, static_cast<float>(conf));
  });
}

std::vector<PlyVertex> read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  auto expect = [&](const std::string& want) {
    ++line_no;
    if (!std::getline(in, line) || line != want) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected '" + want + "'");
    }
  };
  expect("ply");
  expect("format ascii 1.0");
  ++line_no;
  if (!std::getline(in, line) || line.rfind("element vertex ", 0) != 0) {
    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected vertex element");
  }
  std::size_t count = 0;
  {
    const char* b = line.data() + 15;
    const char* e = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(b, e, count);
    if (ec != std::errc() || ptr != e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad vertex count");
    }
  }
  for (const char* p : kPlyProperties) expect(p);
  expect("end_header");

  std::vector<PlyVertex> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw FormatError(path.string() + ": expected " + std::to_string(count) + " vertices, found " +
                        std::to_string(i));
    }
    std::istringstream row(line);
    PlyVertex v;
    unsigned r, g, b, l;
    if (!(row >> v.x >> v.y >> v.z >> r >> g >> b >> l >> v.confidence) || r > 255 || g > 255 ||
        b > 255 || l > 255) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
    }
    std::string extra;
    if (row >> extra) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": trailing data");
    v.red = static_cast<std::uint8_t>(r);
    v.green = static_cast<std::uint8_t>(g);
    v.blue = static_cast<std::uint8_t>(b);
    v.label = static_cast<std::uint8_t>(l);
    out.push_back(v);
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw FormatError(path.string() + ": data after the last vertex");
  }
  return out;
}

}  // namespace matfuse
