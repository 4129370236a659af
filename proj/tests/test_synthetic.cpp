#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "epcl/synthetic.hpp"

using namespace epcl;

namespace {

// Jitter is bounded by 0.02 per coordinate, so radial error stays under
// sqrt(3)*0.02 < 0.035.
constexpr float kRadialSlack = 0.035f;

float norm3(const float* p) {
  return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
}

std::vector<const PointCloud*> clouds_of_class(const SyntheticData& d, std::size_t cls) {
  std::vector<const PointCloud*> out;
  for (std::size_t i = 0; i < d.train.size(); ++i)
    if (d.train.labels[i] == cls) out.push_back(&d.train.clouds[i]);
  for (std::size_t i = 0; i < d.test.size(); ++i)
    if (d.test.labels[i] == cls) out.push_back(&d.test.clouds[i]);
  return out;
}

}  // namespace

TEST_CASE("generation is reproducible per seed") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 6;
  spec.points = 64;
  spec.seed = 9;
  SyntheticData a = gen_synthetic(spec);
  SyntheticData b = gen_synthetic(spec);

  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train.clouds[i].xyz == b.train.clouds[i].xyz);
  for (std::size_t i = 0; i < a.test.size(); ++i)
    CHECK(a.test.clouds[i].xyz == b.test.clouds[i].xyz);

  spec.seed = 10;
  SyntheticData c = gen_synthetic(spec);
  CHECK(a.train.clouds[0].xyz != c.train.clouds[0].xyz);
}

TEST_CASE("split sizes and labels follow the spec") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 10;
  spec.points = 32;
  spec.train_fraction = 0.8f;
  SyntheticData d = gen_synthetic(spec);

  CHECK(d.train.size() == 32);
  CHECK(d.test.size() == 8);
  CHECK(d.train.classes() == 4);
  for (std::size_t cls = 0; cls < 4; ++cls) {
    std::size_t train_n = 0, test_n = 0;
    for (auto l : d.train.labels) train_n += l == cls;
    for (auto l : d.test.labels) test_n += l == cls;
    CHECK(train_n == 8);
    CHECK(test_n == 2);
  }
  for (const auto& c : d.train.clouds) {
    CHECK(c.size() == 32);
    CHECK(c.labels.empty());  // classification clouds carry no point labels
  }
}

TEST_CASE("class names cycle through the families") {
  SyntheticSpec spec;
  spec.classes = 6;
  spec.per_class = 2;
  spec.points = 8;
  SyntheticData d = gen_synthetic(spec);
  CHECK(d.train.class_names ==
        std::vector<std::string>{"sphere", "cube", "cylinder", "plane", "sphere2",
                                 "cube2"});
}

TEST_CASE("sphere samples stay on the sphere within the jitter bound") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 4;
  spec.points = 128;
  SyntheticData d = gen_synthetic(spec);
  for (const PointCloud* c : clouds_of_class(d, 0))
    for (std::size_t i = 0; i < c->size(); ++i)
      CHECK(std::abs(norm3(&c->xyz[i * 3]) - 1.0f) <= kRadialSlack);
}

TEST_CASE("cube samples sit on the cube surface") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 4;
  spec.points = 128;
  SyntheticData d = gen_synthetic(spec);
  for (const PointCloud* c : clouds_of_class(d, 1))
    for (std::size_t i = 0; i < c->size(); ++i) {
      float m = std::max({std::abs(c->xyz[i * 3]), std::abs(c->xyz[i * 3 + 1]),
                          std::abs(c->xyz[i * 3 + 2])});
      CHECK(m >= 0.78f);
      CHECK(m <= 0.82f);
    }
}

TEST_CASE("cylinder samples keep their radial distance") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 4;
  spec.points = 128;
  SyntheticData d = gen_synthetic(spec);
  for (const PointCloud* c : clouds_of_class(d, 2))
    for (std::size_t i = 0; i < c->size(); ++i) {
      float r = std::hypot(c->xyz[i * 3], c->xyz[i * 3 + 1]);
      CHECK(std::abs(r - 0.6f) <= 0.03f);
      CHECK(std::abs(c->xyz[i * 3 + 2]) <= 1.12f);
    }
}

TEST_CASE("plane samples are flat and unlabeled for classification") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 4;
  spec.points = 128;
  SyntheticData d = gen_synthetic(spec);
  for (const PointCloud* c : clouds_of_class(d, 3))
    for (std::size_t i = 0; i < c->size(); ++i)
      CHECK(std::abs(c->xyz[i * 3 + 2]) <= 0.021f);
}

TEST_CASE("generator contracts reject degenerate requests") {
  SyntheticSpec spec;
  spec.classes = 1;
  CHECK_THROWS_AS(gen_synthetic(spec), std::invalid_argument);
  spec.classes = 2;
  spec.per_class = 0;
  CHECK_THROWS_AS(gen_synthetic(spec), std::invalid_argument);
  spec.per_class = 1;
  spec.train_fraction = 1.5f;
  CHECK_THROWS_AS(gen_synthetic(spec), std::invalid_argument);
  CHECK_THROWS_AS(gen_plane_segmentation(0, 16, 0.8f, 1), std::invalid_argument);
}

TEST_CASE("segmentation planes label the halves split exactly at x = 0") {
  SyntheticData d = gen_plane_segmentation(10, 256, 0.8f, 4);
  CHECK(d.train.size() == 8);
  CHECK(d.test.size() == 2);
  CHECK(d.train.class_names == std::vector<std::string>{"left", "right"});

  std::size_t left = 0, right = 0;
  for (const auto& c : d.train.clouds) {
    REQUIRE(c.labels.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      int expected = c.xyz[i * 3] >= 0.0f ? 1 : 0;
      CHECK(c.labels[i] == expected);
      (c.labels[i] ? right : left)++;
    }
  }
  // Uniform sampling puts a meaningful share of points on each side.
  CHECK(left > 100);
  CHECK(right > 100);

  SyntheticData d2 = gen_plane_segmentation(10, 256, 0.8f, 4);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    CHECK(d.train.clouds[i].xyz == d2.train.clouds[i].xyz);
    CHECK(d.train.clouds[i].labels == d2.train.clouds[i].labels);
  }
}

TEST_CASE("occupancy render marks exactly the cells points fall into") {
  PointCloud c;
  c.xyz = {-1.5f, 1.5f,  0.0f,   // top-left cell
           1.7f,  -1.2f, 0.3f,   // bottom-right region
           2.5f,  0.0f,  0.0f};  // outside the extent, ignored
  Image img = render_occupancy(c, 4, 2.0f);

  CHECK(img.height == 4);
  CHECK(img.width == 4);
  CHECK(img.channels == 1);
  std::size_t on = 0;
  for (float p : img.pixels) on += p == 1.0f;
  CHECK(on == 2);
  CHECK(img.pixels[0] == 1.0f);       // (-1.5, 1.5) -> row 0, col 0
  CHECK(img.pixels[3 * 4 + 3] == 1.0f);  // (1.7, -1.2) -> row 3, col 3

  CHECK_THROWS_AS(render_occupancy(c, 0, 1.0f), std::invalid_argument);
  CHECK_THROWS_AS(render_occupancy(c, 4, 0.0f), std::invalid_argument);
}

TEST_CASE("synthetic text bank rows are unit length and reproducible") {
  std::vector<std::string> names = {"sphere", "cube", "cylinder"};
  TextFeatureBank a = synthetic_text_bank(names, 32, 5);
  TextFeatureBank b = synthetic_text_bank(names, 32, 5);

  CHECK(a.labels == names);
  CHECK(a.features.rows() == 3);
  CHECK(a.features.cols() == 32);
  CHECK(a.features.data() == b.features.data());

  for (std::size_t r = 0; r < 3; ++r) {
    double n = 0.0;
    for (std::size_t k = 0; k < 32; ++k) {
      float v = a.features.data()[r * 32 + k];
      n += double(v) * double(v);
    }
    CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-6);
  }

  TextFeatureBank c = synthetic_text_bank(names, 32, 6);
  CHECK(a.features.data() != c.features.data());
  CHECK_THROWS_AS(synthetic_text_bank({}, 32, 1), std::invalid_argument);
}
