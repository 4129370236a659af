#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "epcl/dataio.hpp"
#include "epcl/errors.hpp"
#include "epcl/rng.hpp"

using namespace epcl;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test run; contents are disposable.
struct ScratchDir {
  fs::path root;
  ScratchDir() : root(fs::temp_directory_path() / "epcl_dataio_test") {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~ScratchDir() { fs::remove_all(root); }
  std::string file(const std::string& name) const { return (root / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("cloud files round-trip coordinates and labels exactly") {
  ScratchDir dir;
  Rng rng(1);
  PointCloud c;
  for (std::size_t i = 0; i < 50; ++i) {
    c.xyz.push_back(float(rng.uniform(-10.0, 10.0)));
    c.xyz.push_back(float(rng.normal()));
    c.xyz.push_back(float(rng.uniform(-1.0, 1.0)) * 1e-6f);
  }

  SUBCASE("three columns") {
    save_cloud(c, dir.file("a.xyz"));
    PointCloud back = load_cloud(dir.file("a.xyz"));
    CHECK(back.xyz == c.xyz);
    CHECK(back.labels.empty());
  }

  SUBCASE("four columns") {
    for (std::size_t i = 0; i < c.size(); ++i) c.labels.push_back(int(i % 3));
    save_cloud(c, dir.file("b.xyz"));
    PointCloud back = load_cloud(dir.file("b.xyz"));
    CHECK(back.xyz == c.xyz);
    CHECK(back.labels == c.labels);
  }
}

TEST_CASE("cloud parser accepts comments and blank lines") {
  ScratchDir dir;
  write_text(dir.file("c.xyz"),
             "# exported fixture\n"
             "\n"
             "1 2 3   # first point\n"
             "  4 5 6\n"
             "\t\n");
  PointCloud c = load_cloud(dir.file("c.xyz"));
  CHECK(c.size() == 2);
  CHECK(c.xyz == std::vector<float>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("cloud parser rejects malformed files with line numbers") {
  ScratchDir dir;

  write_text(dir.file("cols.xyz"), "1 2 3\n4 5 6 1\n");
  CHECK_THROWS_WITH_AS(load_cloud(dir.file("cols.xyz")),
                       doctest::Contains(":2: inconsistent column count"), DataError);

  write_text(dir.file("short.xyz"), "1 2\n");
  CHECK_THROWS_WITH_AS(load_cloud(dir.file("short.xyz")), doctest::Contains(":1:"),
                       DataError);

  write_text(dir.file("extra.xyz"), "1 2 3 4 5\n");
  CHECK_THROWS_WITH_AS(load_cloud(dir.file("extra.xyz")),
                       doctest::Contains("trailing token"), DataError);

  write_text(dir.file("neg.xyz"), "1 2 3 -1\n");
  CHECK_THROWS_WITH_AS(load_cloud(dir.file("neg.xyz")), doctest::Contains("negative"),
                       DataError);

  write_text(dir.file("empty.xyz"), "# nothing\n");
  CHECK_THROWS_WITH_AS(load_cloud(dir.file("empty.xyz")), doctest::Contains("no points"),
                       DataError);

  CHECK_THROWS_WITH_AS(load_cloud(dir.file("missing.xyz")),
                       doctest::Contains("cannot open"), DataError);
}

TEST_CASE("manifest round-trips and validates its records") {
  ScratchDir dir;
  DatasetManifest m;
  m.class_names = {"sphere", "cube"};
  m.train = {{"clouds/t0.xyz", 0}, {"clouds/t1.xyz", 1}};
  m.test = {{"clouds/e0.xyz", 1}};
  save_manifest(m, dir.file("manifest.txt"));

  DatasetManifest back = load_manifest(dir.file("manifest.txt"));
  CHECK(back.class_names == m.class_names);
  REQUIRE(back.train.size() == 2);
  CHECK(back.train[0].path == "clouds/t0.xyz");
  CHECK(back.train[1].label == 1);
  REQUIRE(back.test.size() == 1);
  CHECK(back.test[0].path == "clouds/e0.xyz");

  write_text(dir.file("nohdr.txt"), "class a\n");
  CHECK_THROWS_WITH_AS(load_manifest(dir.file("nohdr.txt")),
                       doctest::Contains("EPCL-MANIFEST"), DataError);

  write_text(dir.file("badkind.txt"), "EPCL-MANIFEST v1\nclass a\nvalidate x 0\n");
  CHECK_THROWS_WITH_AS(load_manifest(dir.file("badkind.txt")),
                       doctest::Contains("unknown record 'validate'"), DataError);

  write_text(dir.file("badid.txt"), "EPCL-MANIFEST v1\nclass a\ntrain x.xyz 1\n");
  CHECK_THROWS_WITH_AS(load_manifest(dir.file("badid.txt")),
                       doctest::Contains("class id 1"), DataError);

  write_text(dir.file("noclass.txt"), "EPCL-MANIFEST v1\n");
  CHECK_THROWS_WITH_AS(load_manifest(dir.file("noclass.txt")),
                       doctest::Contains("no classes"), DataError);
}

TEST_CASE("split loading resolves paths relative to a base directory") {
  ScratchDir dir;
  fs::create_directories(dir.root / "clouds");
  PointCloud a;
  a.xyz = {0, 0, 0, 1, 1, 1};
  PointCloud b;
  b.xyz = {2, 2, 2};
  save_cloud(a, dir.file("clouds/a.xyz"));
  save_cloud(b, dir.file("clouds/b.xyz"));

  DatasetManifest m;
  m.class_names = {"x", "y"};
  m.train = {{"clouds/a.xyz", 0}, {"clouds/b.xyz", 1}};
  m.test = {{"clouds/b.xyz", 1}};

  Dataset train = load_split(m, "train", dir.root.string());
  CHECK(train.size() == 2);
  CHECK(train.clouds[0].xyz == a.xyz);
  CHECK(train.labels == std::vector<std::size_t>{0, 1});
  CHECK(train.class_names == m.class_names);

  Dataset test = load_split(m, "test", dir.root.string());
  CHECK(test.size() == 1);

  CHECK_THROWS_AS(load_split(m, "validation", dir.root.string()), std::invalid_argument);
}

TEST_CASE("raster files round-trip every byte value") {
  ScratchDir dir;
  Image img;
  img.height = 4;
  img.width = 8;
  img.channels = 3;
  for (std::size_t i = 0; i < 96; ++i)
    img.pixels.push_back(float((i * 37) % 256) / 255.0f);

  save_raster(img, dir.file("img.raster"));
  Image back = load_raster(dir.file("img.raster"));
  CHECK(back.height == 4);
  CHECK(back.width == 8);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);

  // Re-saving the loaded image reproduces the file byte for byte.
  save_raster(back, dir.file("img2.raster"));
  CHECK(read_bytes(dir.file("img2.raster")) == read_bytes(dir.file("img.raster")));
}

TEST_CASE("raster loader rejects malformed files by name") {
  ScratchDir dir;

  write_text(dir.file("bad.raster"), "PNG whatever\n");
  CHECK_THROWS_WITH_AS(load_raster(dir.file("bad.raster")),
                       doctest::Contains("malformed header"), DataError);

  write_text(dir.file("dims.raster"), "EPCL-RASTER v1 0 4 1\n");
  CHECK_THROWS_WITH_AS(load_raster(dir.file("dims.raster")),
                       doctest::Contains("invalid dimensions"), DataError);

  write_text(dir.file("chan.raster"), "EPCL-RASTER v1 4 4 2\n");
  CHECK_THROWS_AS(load_raster(dir.file("chan.raster")), DataError);

  write_text(dir.file("cut.raster"), std::string("EPCL-RASTER v1 2 2 1\n") + "abc");
  CHECK_THROWS_WITH_AS(load_raster(dir.file("cut.raster")),
                       doctest::Contains("truncated"), DataError);

  Image img;
  img.height = 2;
  img.width = 2;
  img.channels = 1;
  img.pixels = {0.0f, 0.5f, 1.0f};  // one short
  CHECK_THROWS_AS(save_raster(img, dir.file("x.raster")), std::invalid_argument);
}
