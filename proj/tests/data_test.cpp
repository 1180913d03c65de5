#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dualmod/data.hpp"
#include "dualmod/rng.hpp"

using namespace dualmod;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("dualmod_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST(GenerateScene, EmptyScene) {
  SceneSpec spec;
  spec.n_people = 0;
  spec.seed = 4;
  Sample s = generate_scene(spec);
  EXPECT_TRUE(s.points.empty());
  EXPECT_EQ(s.rgb.shape(), (Shape{3, 64, 64}));
  EXPECT_EQ(s.thermal.shape(), (Shape{1, 64, 64}));
  // background only: sensor noise, no blob signal anywhere
  for (std::size_t i = 0; i < s.thermal.size(); ++i) EXPECT_LE(s.thermal[i], 0.10);
}

TEST(GenerateScene, DeterministicPerSeed) {
  SceneSpec spec;
  spec.n_people = 6;
  spec.seed = 99;
  Sample a = generate_scene(spec);
  Sample b = generate_scene(spec);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].x, b.points[i].x);
    EXPECT_EQ(a.points[i].y, b.points[i].y);
  }
  for (std::size_t i = 0; i < a.rgb.size(); ++i) EXPECT_EQ(a.rgb[i], b.rgb[i]);
  for (std::size_t i = 0; i < a.thermal.size(); ++i) EXPECT_EQ(a.thermal[i], b.thermal[i]);

  spec.seed = 100;
  Sample c = generate_scene(spec);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.thermal.size() && !any_diff; ++i)
    any_diff = a.thermal[i] != c.thermal[i];
  EXPECT_TRUE(any_diff);
}

TEST(GenerateScene, DarkRgbCarriesNoPersonSignal) {
  SceneSpec dark;
  dark.n_people = 5;
  dark.seed = 42;
  dark.rgb_brightness = 0.0;
  SceneSpec lit = dark;
  lit.rgb_brightness = 0.9;
  Sample a = generate_scene(dark);
  Sample b = generate_scene(lit);
  // same seed: identical thermal and identical placement
  for (std::size_t i = 0; i < a.thermal.size(); ++i) EXPECT_EQ(a.thermal[i], b.thermal[i]);
  ASSERT_EQ(a.points.size(), b.points.size());
  // rgb differs exactly where blobs are, and the lit one is brighter there
  double max_gap = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    EXPECT_GE(b.rgb[i] + 1e-12, a.rgb[i]);  // person term only adds
    max_gap = std::max(max_gap, b.rgb[i] - a.rgb[i]);
  }
  EXPECT_GT(max_gap, 0.3);
  // at the first annotation the thermal peak is near 1
  const Point& p = a.points.front();
  EXPECT_GT(a.thermal(0, static_cast<std::size_t>(std::lround(p.y)),
                      static_cast<std::size_t>(std::lround(p.x))),
            0.6);
}

TEST(GenerateScene, ImpossiblePlacementErrors) {
  SceneSpec spec;
  spec.width = 16;
  spec.height = 16;
  spec.n_people = 200;
  spec.blob_radius = 3.0;
  EXPECT_THROW(generate_scene(spec), GenerationError);
}

TEST(PnmIo, PlainTextVariantsParse) {
  fs::path dir = temp_dir("pnm_plain");
  {
    std::ofstream f(dir / "g.pgm");
    f << "P2\n# comment line\n2 2\n255\n0 128\n255 64\n";
  }
  Tensor g = read_pnm((dir / "g.pgm").string());
  ASSERT_EQ(g.shape(), (Shape{1, 2, 2}));
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[1], 128.0 / 255.0);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
  {
    std::ofstream f(dir / "c.ppm");
    f << "P3\n1 2\n255\n255 0 0\n0 255 0\n";
  }
  Tensor c = read_pnm((dir / "c.ppm").string());
  ASSERT_EQ(c.shape(), (Shape{3, 2, 1}));
  EXPECT_DOUBLE_EQ(c(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(c(1, 1, 0), 1.0);
  {
    std::ofstream f(dir / "bad.pgm");
    f << "P2\n2 2\n65535\n0 0 0 0\n";
  }
  EXPECT_THROW(read_pnm((dir / "bad.pgm").string()), IoError);
}

TEST(DatasetIo, RoundTripWithinQuantization) {
  fs::path dir = temp_dir("roundtrip");
  SceneSpec spec;
  spec.n_people = 7;
  spec.seed = 31;
  spec.rgb_brightness = 0.7;
  Sample s = generate_scene(spec);
  s.id = "scene_0000";
  write_sample(dir.string(), "train", s);
  auto loaded = load_dataset(dir.string(), "train");
  ASSERT_EQ(loaded.size(), 1u);
  const Sample& l = loaded.front();
  EXPECT_EQ(l.id, s.id);
  ASSERT_EQ(l.points.size(), s.points.size());
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    EXPECT_EQ(l.points[i].x, s.points[i].x);  // annotations round-trip exactly
    EXPECT_EQ(l.points[i].y, s.points[i].y);
  }
  for (std::size_t i = 0; i < s.rgb.size(); ++i) EXPECT_LE(std::abs(l.rgb[i] - s.rgb[i]), 1.0 / 255.0);
  for (std::size_t i = 0; i < s.thermal.size(); ++i)
    EXPECT_LE(std::abs(l.thermal[i] - s.thermal[i]), 1.0 / 255.0);
}

TEST(DatasetIo, EmptyAnnotationFileGivesZeroPeople) {
  fs::path dir = temp_dir("empty_ann");
  SceneSpec spec;
  spec.n_people = 0;
  spec.seed = 8;
  Sample s = generate_scene(spec);
  s.id = "empty";
  write_sample(dir.string(), "test", s);
  auto loaded = load_dataset(dir.string(), "test");
  ASSERT_EQ(loaded.size(), 1u);
  EXPECT_TRUE(loaded.front().points.empty());
}

TEST(DatasetIo, MissingModalityNamesTheFile) {
  fs::path dir = temp_dir("missing");
  SceneSpec spec;
  spec.seed = 9;
  Sample s = generate_scene(spec);
  s.id = "lonely";
  write_sample(dir.string(), "train", s);
  fs::remove(dir / "train" / "thermal" / "lonely.pgm");
  try {
    load_dataset(dir.string(), "train");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(DatasetIo, MalformedAnnotationNamesLine) {
  fs::path dir = temp_dir("badann");
  SceneSpec spec;
  spec.seed = 10;
  Sample s = generate_scene(spec);
  s.id = "bad";
  write_sample(dir.string(), "train", s);
  {
    std::ofstream f(dir / "train" / "annotations" / "bad.txt");
    f << "1.0 2.0\n3.0\n";
  }
  try {
    load_dataset(dir.string(), "train");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(DatasetIo, LoaderDeterministicOrder) {
  fs::path dir = temp_dir("order");
  for (int i : {2, 0, 1}) {
    SceneSpec spec;
    spec.seed = 50 + i;
    Sample s = generate_scene(spec);
    char buf[16];
    std::snprintf(buf, sizeof buf, "s_%03d", i);
    s.id = buf;
    write_sample(dir.string(), "val", s);
  }
  auto a = load_dataset(dir.string(), "val");
  auto b = load_dataset(dir.string(), "val");
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].id, "s_000");
  EXPECT_EQ(a[1].id, "s_001");
  EXPECT_EQ(a[2].id, "s_002");
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < a[i].rgb.size(); ++j) EXPECT_EQ(a[i].rgb[j], b[i].rgb[j]);
}

TEST(Augment, IdentityWhenFullCropNoFlip) {
  SceneSpec spec;
  spec.seed = 61;
  spec.n_people = 5;
  Sample s = generate_scene(spec);
  Sample t = augment_fixed(s, 64, 0, 0, false);
  ASSERT_EQ(t.points.size(), s.points.size());
  for (std::size_t i = 0; i < s.points.size(); ++i) EXPECT_EQ(t.points[i].x, s.points[i].x);
  for (std::size_t i = 0; i < s.rgb.size(); ++i) EXPECT_EQ(t.rgb[i], s.rgb[i]);
}

TEST(Augment, FlipTwiceRestores) {
  SceneSpec spec;
  spec.seed = 62;
  spec.n_people = 6;
  Sample s = generate_scene(spec);
  Sample once = augment_fixed(s, 64, 0, 0, true);
  Sample twice = augment_fixed(once, 64, 0, 0, true);
  ASSERT_EQ(twice.points.size(), s.points.size());
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    // half-integer annotation coordinates flip exactly
    EXPECT_EQ(twice.points[i].x, s.points[i].x);
    EXPECT_EQ(twice.points[i].y, s.points[i].y);
  }
  for (std::size_t i = 0; i < s.thermal.size(); ++i) EXPECT_EQ(twice.thermal[i], s.thermal[i]);
}

TEST(Augment, BoundaryAnnotationsStayInRange) {
  // hand-built sample with annotations on the window edges
  Sample s;
  s.id = "edges";
  s.rgb = Tensor(Shape{3, 8, 8}, 0.5);
  s.thermal = Tensor(Shape{1, 8, 8}, 0.5);
  s.points = {{0.0, 0.0}, {7.0, 7.0}, {3.5, 0.0}, {0.0, 6.5}, {5.999, 2.0}};
  for (bool flip : {false, true}) {
    for (int x0 : {0, 1, 2}) {
      Sample t = augment_fixed(s, 6, x0, 1, flip);
      for (const Point& p : t.points) {
        EXPECT_GE(p.x, 0.0);
        EXPECT_LT(p.x, 6.0);
        EXPECT_GE(p.y, 0.0);
        EXPECT_LT(p.y, 6.0);
      }
    }
  }
  // annotations outside the window are dropped
  Sample t = augment_fixed(s, 4, 0, 0, false);
  for (const Point& p : t.points) {
    EXPECT_LT(p.x, 4.0);
    EXPECT_LT(p.y, 4.0);
  }
}

TEST(Augment, CropLargerThanImageRejected) {
  SceneSpec spec;
  spec.seed = 63;
  Sample s = generate_scene(spec);
  Rng rng(1);
  EXPECT_THROW(augment(s, 100, 0.5, rng), ConfigError);
}

TEST(Augment, ModalityAlignmentUnderRandomAugment) {
  SceneSpec spec;
  spec.seed = 64;
  spec.n_people = 4;
  spec.blob_radius = 3.0;
  Sample s = generate_scene(spec);
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    Sample t = augment(s, 48, 0.5, rng);
    EXPECT_EQ(t.rgb.dim(1), 48u);
    EXPECT_EQ(t.thermal.dim(1), 48u);
    // every kept annotation still sits on a thermal blob peak
    for (const Point& p : t.points) {
      const auto y = static_cast<std::size_t>(std::lround(p.y));
      const auto x = static_cast<std::size_t>(std::lround(p.x));
      EXPECT_GT(t.thermal(0, std::min<std::size_t>(y, 47), std::min<std::size_t>(x, 47)), 0.5);
    }
  }
}
