#include "epcl/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "epcl/errors.hpp"

namespace epcl {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what) {
  throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

// Strips a trailing `#` comment and surrounding whitespace.
std::string payload_of(const std::string& raw) {
  std::string s = raw.substr(0, raw.find('#'));
  const char* ws = " \t\r\n";
  std::size_t b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

PointCloud load_cloud(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open cloud file '" + path + "'");

  PointCloud cloud;
  int columns = 0;  // fixed by the first point line
  std::string raw;
  for (std::size_t lineno = 1; std::getline(f, raw); ++lineno) {
    std::string line = payload_of(raw);
    if (line.empty()) continue;

    std::istringstream iss(line);
    float x, y, z;
    if (!(iss >> x >> y >> z)) fail(path, lineno, "expected `x y z [label]`");
    int label = 0;
    bool has_label = static_cast<bool>(iss >> label);
    std::string extra;
    if (iss >> extra) fail(path, lineno, "trailing token '" + extra + "'");
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      fail(path, lineno, "non-finite coordinate");
    if (has_label && label < 0) fail(path, lineno, "negative label");

    int cols = has_label ? 4 : 3;
    if (columns == 0) columns = cols;
    if (cols != columns)
      fail(path, lineno,
           "inconsistent column count (" + std::to_string(cols) + " after " +
               std::to_string(columns) + ")");

    cloud.xyz.insert(cloud.xyz.end(), {x, y, z});
    if (has_label) cloud.labels.push_back(label);
  }
  if (cloud.xyz.empty()) throw DataError("cloud file '" + path + "' has no points");
  return cloud;
}

void save_cloud(const PointCloud& cloud, const std::string& path) {
  if (!cloud.labels.empty() && cloud.labels.size() != cloud.size())
    throw std::invalid_argument("label count does not match point count");
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << std::setprecision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    f << cloud.xyz[i * 3] << ' ' << cloud.xyz[i * 3 + 1] << ' ' << cloud.xyz[i * 3 + 2];
    if (!cloud.labels.empty()) f << ' ' << cloud.labels[i];
    f << '\n';
  }
  if (!f) throw DataError("write to '" + path + "' failed");
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest '" + path + "'");

  std::string raw;
  std::size_t lineno = 1;
  if (!std::getline(f, raw) || payload_of(raw) != "EPCL-MANIFEST v1")
    fail(path, lineno, "expected header `EPCL-MANIFEST v1`");

  DatasetManifest m;
  while (std::getline(f, raw)) {
    ++lineno;
    std::string line = payload_of(raw);
    if (line.empty()) continue;

    std::istringstream iss(line);
    std::string kind;
    iss >> kind;
    if (kind == "class") {
      std::string name;
      if (!(iss >> name)) fail(path, lineno, "class line needs a name");
      m.class_names.push_back(name);
    } else if (kind == "train" || kind == "test") {
      DatasetManifest::Entry e;
      long long label;
      if (!(iss >> e.path >> label) || label < 0)
        fail(path, lineno, "expected `" + kind + " <path> <class id>`");
      e.label = static_cast<std::size_t>(label);
      if (e.label >= m.class_names.size())
        fail(path, lineno,
             "class id " + std::to_string(e.label) + " but only " +
                 std::to_string(m.class_names.size()) + " classes declared");
      (kind == "train" ? m.train : m.test).push_back(e);
    } else {
      fail(path, lineno, "unknown record '" + kind + "'");
    }
  }
  if (m.class_names.empty()) throw DataError("manifest '" + path + "' declares no classes");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << "EPCL-MANIFEST v1\n";
  for (const auto& name : m.class_names) f << "class " << name << '\n';
  for (const auto& e : m.train) f << "train " << e.path << ' ' << e.label << '\n';
  for (const auto& e : m.test) f << "test " << e.path << ' ' << e.label << '\n';
  if (!f) throw DataError("write to '" + path + "' failed");
}

Dataset load_split(const DatasetManifest& m, const std::string& split,
                   const std::string& base_dir) {
  if (split != "train" && split != "test")
    throw std::invalid_argument("split must be 'train' or 'test', got '" + split + "'");
  const auto& entries = split == "train" ? m.train : m.test;

  Dataset d;
  d.class_names = m.class_names;
  for (const auto& e : entries) {
    d.clouds.push_back(load_cloud((fs::path(base_dir) / e.path).string()));
    d.labels.push_back(e.label);
  }
  return d;
}

Image load_raster(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open raster '" + path + "'");

  std::string header;
  if (!std::getline(f, header)) throw DataError("raster '" + path + "' is empty");
  std::istringstream iss(header);
  std::string magic, version;
  long long h = 0, w = 0, c = 0;
  if (!(iss >> magic >> version >> h >> w >> c) || magic != "EPCL-RASTER" ||
      version != "v1")
    throw DataError("raster '" + path + "' has a malformed header");
  if (h <= 0 || w <= 0 || (c != 1 && c != 3))
    throw DataError("raster '" + path + "' has invalid dimensions " + std::to_string(h) +
                    "x" + std::to_string(w) + "x" + std::to_string(c));

  Image img;
  img.height = static_cast<std::size_t>(h);
  img.width = static_cast<std::size_t>(w);
  img.channels = static_cast<std::size_t>(c);
  std::size_t n = img.height * img.width * img.channels;
  std::vector<unsigned char> bytes(n);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(f.gcount()) != n)
    throw DataError("raster '" + path + "' is truncated: expected " + std::to_string(n) +
                    " pixel bytes, got " + std::to_string(f.gcount()));

  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = float(bytes[i]) / 255.0f;
  return img;
}

void save_raster(const Image& img, const std::string& path) {
  std::size_t n = img.height * img.width * img.channels;
  if (img.pixels.size() != n)
    throw std::invalid_argument("pixel buffer does not match raster dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << "EPCL-RASTER v1 " << img.height << ' ' << img.width << ' ' << img.channels << '\n';
  std::vector<unsigned char> bytes(n);
  for (std::size_t i = 0; i < n; ++i) {
    float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (!f) throw DataError("write to '" + path + "' failed");
}

}  // namespace epcl
