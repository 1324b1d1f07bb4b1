#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace laif {

/// The 30 glyph class names: a..z plus the umlauts and eszett, sorted by
/// byte value (UTF-8), which puts the non-ASCII names last.
std::vector<std::string> glyph_class_names();

struct GlyphSample {
  Tensor image;  // [1,H,W], values in [0,1]
  int label = 0;
  std::string id;
};

struct Dataset {
  std::vector<GlyphSample> samples;
  std::vector<std::string> class_names;
  std::string split = "train";
};

/// Binary PGM (P5, maxval 255). Pixels map u8/255 on read and
/// clamp(round(v*255)) on write. Header written as "P5\n<W> <H>\n255\n".
Tensor read_pgm(const std::string& path);
void write_pgm(const Tensor& img, const std::string& path);

/// Loads root/<class>/<id>.pgm. Classes are the subdirectory names sorted
/// byte-wise; files sort by name within a class. If `expected` is non-empty,
/// exactly those classes must be present.
Dataset load_dataset(const std::string& root, const std::vector<std::string>& expected = {});

/// Writes the directory layout above plus a manifest.csv (id,class,label).
void write_dataset(const Dataset& ds, const std::string& root);

/// Deterministic 32x32 glyph dataset: per class a fixed procedural stroke
/// template (lines and arcs keyed on the class index), rendered per sample
/// with seeded jitter (translation within 2px, rotation within 10 degrees,
/// stroke thickness 1..2px, pixel noise sigma 0.02).
Dataset synth_glyphs(std::uint64_t seed, int per_class, int class_count = 30);

/// Per-class split; the last round(n*val_fraction) samples of each class go
/// to the validation set.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction);

enum class Normalize {
  kUnit,       // [0,1] as stored
  kSymmetric,  // 2x-1, in [-1,1]
};

struct Batch {
  Tensor x;  // [B,1,H,W]
  std::vector<int> labels;
};

/// One epoch worth of batches after a seeded shuffle; the trailing partial
/// batch is kept. Pass a per-epoch seed (e.g. Rng::mix(seed, epoch)).
std::vector<Batch> make_batches(const Dataset& ds, int batch_size, std::uint64_t seed, Normalize mode);

/// Tiles images [K,1,H,W] into a single PGM, `cols` per row, with 2px white
/// separators between tiles (none at the outer edge); short final rows are
/// padded white. symmetric_range remaps [-1,1] to [0,1] first.
void save_grid(const Tensor& images, int cols, const std::string& path, bool symmetric_range);

}  // namespace laif
