#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "epcl/geometry.hpp"
#include "epcl/tokenize.hpp"
#include "epcl/train.hpp"

// On-disk dataset formats, all plain and codec-free; FORMATS.md is the
// authoritative description. Loaders throw DataError naming the offending
// file (and line, where lines exist); writers throw DataError on I/O failure.

namespace epcl {

// ASCII cloud: one `x y z` or `x y z label` line per point, `#` comments and
// blank lines allowed. The column count must not change mid-file, and every
// coordinate must be finite.
PointCloud load_cloud(const std::string& path);
void save_cloud(const PointCloud& cloud, const std::string& path);

// Dataset manifest: class names plus per-split file lists with class ids.
// Paths are relative to the manifest's directory.
struct DatasetManifest {
  struct Entry {
    std::string path;
    std::size_t label = 0;
  };
  std::vector<std::string> class_names;
  std::vector<Entry> train;
  std::vector<Entry> test;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

// Loads every cloud of one split; split is "train" or "test".
Dataset load_split(const DatasetManifest& m, const std::string& split,
                   const std::string& base_dir);

// Uncompressed raster: one ASCII header line `EPCL-RASTER v1 H W C` followed
// by H*W*C raw bytes, row-major with interleaved channels. Byte 255 maps to
// pixel value 1.0.
Image load_raster(const std::string& path);
void save_raster(const Image& img, const std::string& path);

}  // namespace epcl
