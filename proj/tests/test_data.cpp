#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "core/data.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

using laif::Dataset;
using laif::ErrorKind;
using laif::Normalize;
using laif::Shape;
using laif::Tensor;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const laif::Error& e) {
    return e.kind();
  }
  return static_cast<ErrorKind>(-1);
}

/// Fresh scratch directory under the build tree.
fs::path scratch(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("laif_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("glyph class names are the 30 letters in byte order") {
  const auto names = laif::glyph_class_names();
  REQUIRE(names.size() == 30);
  CHECK(names[0] == "a");
  CHECK(names[25] == "z");
  CHECK(names[26] == "\xc3\x9f");
  CHECK(names[27] == "\xc3\xa4");
  CHECK(names[28] == "\xc3\xb6");
  CHECK(names[29] == "\xc3\xbc");
  for (std::size_t i = 1; i < names.size(); ++i) CHECK(names[i - 1] < names[i]);
}

TEST_CASE("pgm read maps bytes through u8/255") {
  const fs::path dir = scratch("pgm_read");
  const std::string bytes = std::string("P5\n2 2\n255\n") + '\x00' + '\x80' + '\xff' + '\x40';
  spit(dir / "t.pgm", bytes);
  const Tensor img = laif::read_pgm((dir / "t.pgm").string());
  CHECK(img.shape() == Shape{1, 2, 2});
  CHECK(img[0] == 0.0f);
  CHECK(img[1] == doctest::Approx(128.0 / 255.0));
  CHECK(img[2] == 1.0f);
  CHECK(img[3] == doctest::Approx(64.0 / 255.0));
}

TEST_CASE("pgm write then read round-trips bytes exactly") {
  const fs::path dir = scratch("pgm_rt");
  std::string bytes = "P5\n3 2\n255\n";
  for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<char>(i * 40));
  spit(dir / "a.pgm", bytes);
  const Tensor img = laif::read_pgm((dir / "a.pgm").string());
  laif::write_pgm(img, (dir / "b.pgm").string());
  CHECK(slurp(dir / "b.pgm") == bytes);
}

TEST_CASE("pgm quantizes floats to the nearest 1/255 step") {
  const fs::path dir = scratch("pgm_q");
  const Tensor img(Shape{1, 1, 4}, std::vector<float>{0.5f, 0.001f, 0.999f, 1.7f});
  laif::write_pgm(img, (dir / "q.pgm").string());
  const Tensor back = laif::read_pgm((dir / "q.pgm").string());
  CHECK(back[0] == doctest::Approx(128.0 / 255.0));  // round(127.5) to even = 128
  CHECK(back[1] == 0.0f);
  CHECK(back[2] == 1.0f);  // round(254.745) = 255
  CHECK(back[3] == 1.0f);  // clamped
}

TEST_CASE("pgm rejects bad headers and short rasters") {
  const fs::path dir = scratch("pgm_bad");
  spit(dir / "p4.pgm", "P4\n2 2\n255\n\x01\x02\x03\x04");
  CHECK(kind_of([&] { (void)laif::read_pgm((dir / "p4.pgm").string()); }) == ErrorKind::kMalformedHeader);
  spit(dir / "max.pgm", "P5\n2 2\n254\n\x01\x02\x03\x04");
  CHECK(kind_of([&] { (void)laif::read_pgm((dir / "max.pgm").string()); }) == ErrorKind::kMalformedHeader);
  spit(dir / "short.pgm", "P5\n2 2\n255\n\x01\x02");
  CHECK(kind_of([&] { (void)laif::read_pgm((dir / "short.pgm").string()); }) == ErrorKind::kTruncatedData);
  CHECK(kind_of([&] { (void)laif::read_pgm((dir / "absent.pgm").string()); }) == ErrorKind::kIo);
}

TEST_CASE("synth glyphs are deterministic in the seed") {
  const Dataset a = laif::synth_glyphs(7, 2);
  const Dataset b = laif::synth_glyphs(7, 2);
  REQUIRE(a.samples.size() == 60);
  REQUIRE(b.samples.size() == 60);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].image.same_bits(b.samples[i].image));
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(a.samples[i].id == b.samples[i].id);
  }
  const Dataset c = laif::synth_glyphs(8, 2);
  CHECK(!a.samples[0].image.same_bits(c.samples[0].image));
}

TEST_CASE("synth glyph labels are uniform and bounded") {
  const Dataset ds = laif::synth_glyphs(3, 4);
  std::vector<int> counts(30, 0);
  for (const auto& s : ds.samples) {
    REQUIRE(s.label >= 0);
    REQUIRE(s.label < 30);
    ++counts[static_cast<std::size_t>(s.label)];
    CHECK(s.image.shape() == Shape{1, 32, 32});
    for (auto v : s.image.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  for (int c : counts) CHECK(c == 4);

  const Dataset one = laif::synth_glyphs(3, 1);
  REQUIRE(one.samples.size() == 30);
  for (int i = 0; i < 30; ++i) CHECK(one.samples[static_cast<std::size_t>(i)].label == i);
}

TEST_CASE("class templates are pairwise distinct") {
  const int per_class = 6;
  const Dataset ds = laif::synth_glyphs(5, per_class);
  // Mean image per class.
  std::vector<std::vector<double>> means(30, std::vector<double>(32 * 32, 0.0));
  for (const auto& s : ds.samples)
    for (int i = 0; i < 32 * 32; ++i)
      means[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(i)] += s.image[static_cast<std::size_t>(i)] / per_class;
  double min_l2 = 1e30;
  for (int a = 0; a < 30; ++a)
    for (int b = a + 1; b < 30; ++b) {
      double l2 = 0.0;
      for (int i = 0; i < 32 * 32; ++i) {
        const double d = means[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] -
                         means[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        l2 += d * d;
      }
      min_l2 = std::min(min_l2, std::sqrt(l2));
    }
  CHECK(min_l2 > 0.5);  // far above jitter noise
}

TEST_CASE("dataset round-trips through the directory layout") {
  const fs::path dir = scratch("ds_rt");
  const Dataset ds = laif::synth_glyphs(11, 2);
  laif::write_dataset(ds, dir.string());
  CHECK(fs::exists(dir / "manifest.csv"));

  const Dataset back = laif::load_dataset(dir.string());
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.class_names == ds.class_names);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(back.samples[i].id == ds.samples[i].id);
    // Loaded pixels are the quantized originals.
    laif::write_pgm(ds.samples[i].image, (dir / "probe.pgm").string());
    const Tensor q = laif::read_pgm((dir / "probe.pgm").string());
    CHECK(back.samples[i].image.same_bits(q));
  }
  const std::string manifest = slurp(dir / "manifest.csv");
  CHECK(manifest.substr(0, 15) == "id,class,label\n");
  CHECK(manifest.find("a/0000,a,0\n") != std::string::npos);
  CHECK(manifest.find("\xc3\xbc/0001,\xc3\xbc,29\n") != std::string::npos);
}

TEST_CASE("load_dataset orders classes byte-wise and files by name") {
  const fs::path dir = scratch("ds_order");
  // Create dirs in reverse order; the loader must sort them.
  const Tensor px(Shape{1, 2, 2}, 0.5f);
  for (const std::string cls : {"zeta", "beta", "alpha"}) {
    fs::create_directories(dir / cls);
    laif::write_pgm(px, (dir / cls / "b.pgm").string());
    laif::write_pgm(px, (dir / cls / "a.pgm").string());
  }
  const Dataset ds = laif::load_dataset(dir.string());
  REQUIRE(ds.class_names.size() == 3);
  CHECK(ds.class_names == std::vector<std::string>{"alpha", "beta", "zeta"});
  REQUIRE(ds.samples.size() == 6);
  CHECK(ds.samples[0].id == "alpha/a");
  CHECK(ds.samples[1].id == "alpha/b");
  CHECK(ds.samples[0].label == 0);
  CHECK(ds.samples[4].label == 2);
}

TEST_CASE("load_dataset error surfaces") {
  SUBCASE("empty class directory") {
    const fs::path dir = scratch("ds_empty");
    fs::create_directories(dir / "a");
    fs::create_directories(dir / "b");
    laif::write_pgm(Tensor(Shape{1, 2, 2}, 0.1f), (dir / "a" / "x.pgm").string());
    CHECK(kind_of([&] { (void)laif::load_dataset(dir.string()); }) == ErrorKind::kEmptyClass);
  }
  SUBCASE("no class directories at all") {
    const fs::path dir = scratch("ds_none");
    CHECK(kind_of([&] { (void)laif::load_dataset(dir.string()); }) == ErrorKind::kEmptyClass);
  }
  SUBCASE("stray file extension") {
    const fs::path dir = scratch("ds_ext");
    fs::create_directories(dir / "a");
    laif::write_pgm(Tensor(Shape{1, 2, 2}, 0.1f), (dir / "a" / "x.pgm").string());
    spit(dir / "a" / "notes.txt", "hello");
    CHECK(kind_of([&] { (void)laif::load_dataset(dir.string()); }) == ErrorKind::kUnknownExtension);
  }
  SUBCASE("expected class missing") {
    const fs::path dir = scratch("ds_expect");
    fs::create_directories(dir / "a");
    laif::write_pgm(Tensor(Shape{1, 2, 2}, 0.1f), (dir / "a" / "x.pgm").string());
    const ErrorKind kind = kind_of([&] { (void)laif::load_dataset(dir.string(), {"a", "b"}); });
    CHECK(kind == ErrorKind::kEmptyClass);
  }
}

TEST_CASE("split_dataset keeps per-class proportions") {
  const Dataset ds = laif::synth_glyphs(1, 50);
  const auto [train, val] = laif::split_dataset(ds, 0.2);
  CHECK(train.samples.size() == 40 * 30);
  CHECK(val.samples.size() == 10 * 30);
  CHECK(train.split == "train");
  CHECK(val.split == "val");
  std::vector<int> train_counts(30, 0), val_counts(30, 0);
  for (const auto& s : train.samples) ++train_counts[static_cast<std::size_t>(s.label)];
  for (const auto& s : val.samples) ++val_counts[static_cast<std::size_t>(s.label)];
  for (int c : train_counts) CHECK(c == 40);
  for (int c : val_counts) CHECK(c == 10);
}

TEST_CASE("batches shuffle deterministically and keep the partial batch") {
  const Dataset ds = laif::synth_glyphs(2, 2);  // 60 samples
  const auto a = laif::make_batches(ds, 32, 99, Normalize::kUnit);
  REQUIRE(a.size() == 2);
  CHECK(a[0].x.shape() == Shape{32, 1, 32, 32});
  CHECK(a[1].x.shape() == Shape{28, 1, 32, 32});
  const auto b = laif::make_batches(ds, 32, 99, Normalize::kUnit);
  CHECK(a[0].x.same_bits(b[0].x));
  CHECK(a[1].x.same_bits(b[1].x));
  CHECK(a[0].labels == b[0].labels);
  const auto c = laif::make_batches(ds, 32, 100, Normalize::kUnit);
  CHECK(!a[0].x.same_bits(c[0].x));

  // A shuffle is a permutation: label histogram is preserved.
  std::vector<int> counts(30, 0);
  for (const auto& batch : a)
    for (int label : batch.labels) ++counts[static_cast<std::size_t>(label)];
  for (int n : counts) CHECK(n == 2);
}

TEST_CASE("symmetric normalization maps 0.5 to 0") {
  Dataset ds;
  ds.class_names = {"a"};
  laif::GlyphSample s;
  s.image = Tensor(Shape{1, 2, 2}, 0.5f);
  s.label = 0;
  s.id = "a/0";
  ds.samples.push_back(s);
  const auto unit = laif::make_batches(ds, 1, 0, Normalize::kUnit);
  const auto sym = laif::make_batches(ds, 1, 0, Normalize::kSymmetric);
  CHECK(unit[0].x[0] == 0.5f);
  CHECK(sym[0].x[0] == 0.0f);
}

TEST_CASE("save_grid tiles with interior 2px white separators") {
  const fs::path dir = scratch("grid");
  SUBCASE("2x2 grid of 32px tiles is 66x66") {
    Tensor imgs(Shape{4, 1, 32, 32});
    for (int i = 0; i < 4; ++i)
      for (int p = 0; p < 32 * 32; ++p)
        imgs[static_cast<std::size_t>(i * 32 * 32 + p)] = static_cast<float>(i) / 4.0f;
    laif::save_grid(imgs, 2, (dir / "g.pgm").string(), false);
    const Tensor grid = laif::read_pgm((dir / "g.pgm").string());
    CHECK(grid.shape() == Shape{1, 66, 66});
    // Tile interiors come through exactly (after quantization).
    CHECK(grid[0] == 0.0f);                                      // tile (0,0)
    CHECK(grid[34] == doctest::Approx(64.0 / 255.0));            // tile (0,1) first pixel
    CHECK(grid[static_cast<std::size_t>(34 * 66)] == doctest::Approx(128.0 / 255.0));  // tile (1,0)
    CHECK(grid[32] == 1.0f);                                     // separator is white
  }
  SUBCASE("single image grid is exactly that image") {
    Tensor img(Shape{1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) img[static_cast<std::size_t>(i)] = static_cast<float>(i) / 16.0f;
    laif::save_grid(img, 1, (dir / "one.pgm").string(), false);
    laif::write_pgm(Tensor(Shape{4, 4}, img.values()), (dir / "ref.pgm").string());
    CHECK(slurp(dir / "one.pgm") == slurp(dir / "ref.pgm"));
  }
  SUBCASE("partial final row is padded white") {
    Tensor imgs(Shape{3, 1, 4, 4});  // 2 cols -> second row has one tile
    laif::save_grid(imgs, 2, (dir / "p.pgm").string(), false);
    const Tensor grid = laif::read_pgm((dir / "p.pgm").string());
    CHECK(grid.shape() == Shape{1, 10, 10});
    // Bottom-right tile area is white padding.
    CHECK(grid[static_cast<std::size_t>(6 * 10 + 6)] == 1.0f);
    // Bottom-left tile is the (black) third image.
    CHECK(grid[static_cast<std::size_t>(6 * 10 + 0)] == 0.0f);
  }
  SUBCASE("symmetric inputs are remapped to [0,1]") {
    Tensor imgs(Shape{1, 1, 2, 2}, std::vector<float>{-1.0f, 0.0f, 1.0f, -1.0f});
    laif::save_grid(imgs, 1, (dir / "s.pgm").string(), true);
    const Tensor grid = laif::read_pgm((dir / "s.pgm").string());
    CHECK(grid[0] == 0.0f);
    CHECK(grid[1] == doctest::Approx(128.0 / 255.0));
    CHECK(grid[2] == 1.0f);
  }
}
