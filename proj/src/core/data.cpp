#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace laif {

std::vector<std::string> glyph_class_names() {
  std::vector<std::string> names;
  for (char c = 'a'; c <= 'z'; ++c) names.emplace_back(1, c);
  names.push_back("\xc3\x9f");  // eszett
  names.push_back("\xc3\xa4");  // a-umlaut
  names.push_back("\xc3\xb6");  // o-umlaut
  names.push_back("\xc3\xbc");  // u-umlaut
  return names;
}

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") fail(ErrorKind::kMalformedHeader, "not a P5 file: " + path);
  long w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w < 1 || h < 1) fail(ErrorKind::kMalformedHeader, "bad dimensions in " + path);
  if (maxval != 255) fail(ErrorKind::kMalformedHeader, "maxval must be 255 in " + path);
  in.get();  // single whitespace byte before the raster
  std::vector<char> raw(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    fail(ErrorKind::kTruncatedData, "raster shorter than header promises in " + path);
  Tensor img(Shape{1, static_cast<int>(h), static_cast<int>(w)});
  for (std::size_t i = 0; i < raw.size(); ++i)
    img[i] = static_cast<float>(static_cast<unsigned char>(raw[i])) / 255.0f;
  return img;
}

namespace {

unsigned char quantize(float v) {
  const float scaled = std::nearbyint(v * 255.0f);
  return static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, scaled)));
}

void write_pgm_raster(const float* data, int h, int w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<char> raw(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<char>(quantize(data[i]));
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path);
}

}  // namespace

void write_pgm(const Tensor& img, const std::string& path) {
  const Shape& s = img.shape();
  if (s.rank() == 3 && s.dim(0) == 1) {
    write_pgm_raster(img.data(), s.dim(1), s.dim(2), path);
  } else if (s.rank() == 2) {
    write_pgm_raster(img.data(), s.dim(0), s.dim(1), path);
  } else {
    fail(ErrorKind::kShapeMismatch, "expected [1,H,W] or [H,W], got " + s.str());
  }
}

Dataset load_dataset(const std::string& root, const std::vector<std::string>& expected) {
  if (!fs::is_directory(root)) fail(ErrorKind::kIo, "not a directory: " + root);
  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (!expected.empty()) {
    for (const std::string& want : expected)
      if (std::find(classes.begin(), classes.end(), want) == classes.end())
        fail(ErrorKind::kEmptyClass, "class directory missing: " + want);
    classes = expected;
    std::sort(classes.begin(), classes.end());
  }
  if (classes.empty()) fail(ErrorKind::kEmptyClass, "no class directories under " + root);

  Dataset ds;
  ds.class_names = classes;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    const fs::path dir = fs::path(root) / classes[label];
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (!entry.is_regular_file() || entry.path().extension() != ".pgm")
        fail(ErrorKind::kUnknownExtension, "unexpected entry in class dir: " + name);
      files.push_back(name);
    }
    if (files.empty()) fail(ErrorKind::kEmptyClass, "no images for class: " + classes[label]);
    std::sort(files.begin(), files.end());
    for (const std::string& name : files) {
      GlyphSample sample;
      sample.image = read_pgm((dir / name).string());
      sample.label = static_cast<int>(label);
      sample.id = classes[label] + "/" + fs::path(name).stem().string();
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& root) {
  fs::create_directories(root);
  std::ofstream manifest(fs::path(root) / "manifest.csv");
  if (!manifest) fail(ErrorKind::kIo, "cannot write manifest under " + root);
  manifest << "id,class,label\n";
  for (const GlyphSample& s : ds.samples) {
    const std::string& cls = ds.class_names[static_cast<std::size_t>(s.label)];
    fs::create_directories(fs::path(root) / cls);
    const std::string stem = s.id.substr(s.id.find('/') + 1);
    write_pgm(s.image, (fs::path(root) / cls / (stem + ".pgm")).string());
    manifest << s.id << "," << cls << "," << s.label << "\n";
  }
}

namespace {

constexpr int kGlyphSize = 32;

struct Stroke {
  bool is_arc;
  // line: (x0,y0)-(x1,y1); arc: center (x0,y0), radius x1, angles y1..t1
  double x0, y0, x1, y1, t1;
};

/// Fixed per-class stroke template in image coordinates, independent of the
/// dataset seed so every dataset shares the same 30 shapes.
std::vector<Stroke> class_template(int class_index) {
  Rng rng(Rng::mix(0x515, static_cast<std::uint64_t>(class_index)));
  const int strokes = 2 + static_cast<int>(rng.below(3));
  std::vector<Stroke> out;
  for (int i = 0; i < strokes; ++i) {
    Stroke s{};
    s.is_arc = rng.below(2) == 1;
    if (s.is_arc) {
      s.x0 = rng.uniform_in(10.0, 22.0);
      s.y0 = rng.uniform_in(10.0, 22.0);
      s.x1 = rng.uniform_in(4.0, 9.0);                    // radius
      s.y1 = rng.uniform_in(0.0, 2.0 * 3.14159265358979);  // start angle
      s.t1 = s.y1 + rng.uniform_in(1.5707963, 4.7123889);  // sweep 90..270 deg
    } else {
      s.x0 = rng.uniform_in(7.0, 25.0);
      s.y0 = rng.uniform_in(7.0, 25.0);
      s.x1 = rng.uniform_in(7.0, 25.0);
      s.y1 = rng.uniform_in(7.0, 25.0);
    }
    out.push_back(s);
  }
  return out;
}

double dist_to_line(double px, double py, double x0, double y0, double x1, double y1) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = x0 + t * dx, cy = y0 + t * dy;
  return std::hypot(px - cx, py - cy);
}

double dist_to_arc(double px, double py, const Stroke& s) {
  const double a0 = s.y1, a1 = s.t1;
  const double vx = px - s.x0, vy = py - s.y0;
  double ang = std::atan2(vy, vx);
  const double sweep = a1 - a0;
  double rel = std::fmod(ang - a0, 2.0 * 3.14159265358979);
  if (rel < 0) rel += 2.0 * 3.14159265358979;
  if (rel <= sweep) return std::abs(std::hypot(vx, vy) - s.x1);
  const double e0x = s.x0 + s.x1 * std::cos(a0), e0y = s.y0 + s.x1 * std::sin(a0);
  const double e1x = s.x0 + s.x1 * std::cos(a1), e1y = s.y0 + s.x1 * std::sin(a1);
  return std::min(std::hypot(px - e0x, py - e0y), std::hypot(px - e1x, py - e1y));
}

/// White-on-black rendering with a ~0.6px soft edge.
Tensor render_glyph(const std::vector<Stroke>& strokes, double dx, double dy, double rot, double thickness,
                    Rng& noise_rng) {
  Tensor img(Shape{1, kGlyphSize, kGlyphSize});
  const double cx = kGlyphSize / 2.0, cy = kGlyphSize / 2.0;
  const double cosr = std::cos(-rot), sinr = std::sin(-rot);
  const double aa = 0.6, radius = thickness / 2.0;
  for (int y = 0; y < kGlyphSize; ++y) {
    for (int x = 0; x < kGlyphSize; ++x) {
      // Inverse-transform the pixel into template space (rotate about center).
      const double ux = x + 0.5 - cx - dx, uy = y + 0.5 - cy - dy;
      const double px = cx + ux * cosr - uy * sinr;
      const double py = cy + ux * sinr + uy * cosr;
      double best = 1e9;
      for (const Stroke& s : strokes) {
        const double d = s.is_arc ? dist_to_arc(px, py, s) : dist_to_line(px, py, s.x0, s.y0, s.x1, s.y1);
        best = std::min(best, d);
      }
      const double cov = std::clamp((radius + aa / 2.0 - best) / aa, 0.0, 1.0);
      const double v = cov + 0.02 * noise_rng.normal();
      img[static_cast<std::size_t>(y) * kGlyphSize + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

}  // namespace

Dataset synth_glyphs(std::uint64_t seed, int per_class, int class_count) {
  if (per_class < 1) fail(ErrorKind::kInvalidArgument, "per_class must be >= 1");
  if (class_count < 1 || class_count > 30) fail(ErrorKind::kInvalidArgument, "class_count must be 1..30");
  const std::vector<std::string> all_names = glyph_class_names();
  Dataset ds;
  ds.class_names.assign(all_names.begin(), all_names.begin() + class_count);
  Rng rng(seed);
  for (int c = 0; c < class_count; ++c) {
    const std::vector<Stroke> strokes = class_template(c);
    for (int i = 0; i < per_class; ++i) {
      const double dx = rng.uniform_in(-2.0, 2.0);
      const double dy = rng.uniform_in(-2.0, 2.0);
      const double rot = rng.uniform_in(-10.0, 10.0) * 3.14159265358979 / 180.0;
      const double thickness = rng.uniform_in(1.0, 2.0);
      GlyphSample sample;
      sample.image = render_glyph(strokes, dx, dy, rot, thickness, rng);
      sample.label = c;
      char stem[16];
      std::snprintf(stem, sizeof stem, "%04d", i);
      sample.id = ds.class_names[static_cast<std::size_t>(c)] + "/" + stem;
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail(ErrorKind::kInvalidArgument, "val_fraction must be in [0,1)");
  // Bucket sample indices per class, preserving dataset order.
  std::vector<std::vector<std::size_t>> per_class(ds.class_names.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    per_class[static_cast<std::size_t>(ds.samples[i].label)].push_back(i);
  Dataset train, val;
  train.class_names = val.class_names = ds.class_names;
  train.split = "train";
  val.split = "val";
  for (const auto& bucket : per_class) {
    const std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(bucket.size()) * val_fraction));
    const std::size_t n_train = bucket.size() - n_val;
    for (std::size_t j = 0; j < bucket.size(); ++j)
      (j < n_train ? train : val).samples.push_back(ds.samples[bucket[j]]);
  }
  return {std::move(train), std::move(val)};
}

std::vector<Batch> make_batches(const Dataset& ds, int batch_size, std::uint64_t seed, Normalize mode) {
  if (batch_size < 1) fail(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  if (ds.samples.empty()) fail(ErrorKind::kEmptyClass, "dataset has no samples");
  const Shape& img = ds.samples.front().image.shape();
  const int h = img.dim(1), w = img.dim(2);
  std::vector<std::size_t> order(ds.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(i + 1)]);

  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const int b = static_cast<int>(std::min<std::size_t>(batch_size, order.size() - start));
    Batch batch;
    batch.x = Tensor(Shape{b, 1, h, w});
    for (int i = 0; i < b; ++i) {
      const GlyphSample& s = ds.samples[order[start + static_cast<std::size_t>(i)]];
      if (!(s.image.shape() == img)) fail(ErrorKind::kShapeMismatch, "mixed image sizes in dataset");
      float* dst = batch.x.data() + static_cast<std::size_t>(i) * h * w;
      const float* src = s.image.data();
      for (int j = 0; j < h * w; ++j) dst[j] = mode == Normalize::kUnit ? src[j] : 2.0f * src[j] - 1.0f;
      batch.labels.push_back(s.label);
    }
    out.push_back(std::move(batch));
  }
  return out;
}

void save_grid(const Tensor& images, int cols, const std::string& path, bool symmetric_range) {
  const Shape& s = images.shape();
  if (s.rank() != 4 || s.dim(1) != 1) fail(ErrorKind::kShapeMismatch, "expected [K,1,H,W], got " + s.str());
  if (cols < 1) fail(ErrorKind::kInvalidArgument, "cols must be >= 1");
  const int k = s.dim(0), h = s.dim(2), w = s.dim(3);
  const int rows = (k + cols - 1) / cols;
  const int gh = rows * h + 2 * (rows - 1);
  const int gw = cols * w + 2 * (cols - 1);
  Tensor grid(Shape{gh, gw}, 1.0f);  // separators and padding are white
  for (int i = 0; i < k; ++i) {
    const int r = i / cols, c = i % cols;
    for (int y = 0; y < h; ++y) {
      float* dst = grid.data() + static_cast<std::size_t>(r * (h + 2) + y) * gw + c * (w + 2);
      const float* src = images.data() + (static_cast<std::size_t>(i) * h + y) * w;
      for (int x = 0; x < w; ++x) dst[x] = symmetric_range ? (src[x] + 1.0f) / 2.0f : src[x];
    }
  }
  write_pgm(grid, path);
}

}  // namespace laif
