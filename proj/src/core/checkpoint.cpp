#include "core/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace laif {

namespace {

constexpr std::uint16_t kVersion = 1;
constexpr char kMagic[4] = {'L', 'A', 'I', 'F'};

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& buf, const std::string& s) {
  if (s.size() > 0xffff) fail(ErrorKind::kInvalidArgument, "string too long for checkpoint");
  put_u16(buf, static_cast<std::uint16_t>(s.size()));
  buf.append(s);
}

std::uint32_t compute_crc(const std::string& payload) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

/// Bounds-checked little-endian reader over the payload bytes.
class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  std::uint16_t u16() {
    need(2);
    const auto* p = reinterpret_cast<const unsigned char*>(buf_.data() + pos_);
    pos_ += 2;
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }

  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(buf_.data() + pos_);
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }

  std::string str() {
    const std::uint16_t len = u16();
    need(len);
    std::string out = buf_.substr(pos_, len);
    pos_ += len;
    return out;
  }

  void floats(float* dst, std::size_t count) {
    need(count * 4);
    std::memcpy(dst, buf_.data() + pos_, count * 4);  // host is little-endian
    pos_ += count * 4;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) fail(ErrorKind::kMalformedHeader, "checkpoint payload ends early");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

int sqrt_exact(std::int64_t v) {
  const int r = static_cast<int>(std::llround(std::sqrt(static_cast<double>(v))));
  if (static_cast<std::int64_t>(r) * r != v) fail(ErrorKind::kArchMismatch, "tensor shape implies no valid geometry");
  return r;
}

struct StoredTensor {
  Shape shape;
  std::size_t offset;  // into a flat float pool
};

}  // namespace

void save_checkpoint(Model& model, const std::string& path) {
  std::string payload;
  put_string(payload, model.arch);
  if (model.class_names.size() > 0xffff) fail(ErrorKind::kInvalidArgument, "too many classes");
  put_u16(payload, static_cast<std::uint16_t>(model.class_names.size()));
  for (const std::string& name : model.class_names) put_string(payload, name);

  std::uint32_t count = 0;
  model.net.visit_named([&](const std::string&, Tensor&) { ++count; });
  put_u32(payload, count);
  model.net.visit_named([&](const std::string& name, Tensor& tensor) {
    put_string(payload, name);
    payload.push_back(static_cast<char>(tensor.shape().rank()));
    for (int d : tensor.shape().dims()) put_u32(payload, static_cast<std::uint32_t>(d));
    const std::size_t bytes = static_cast<std::size_t>(tensor.numel()) * 4;
    payload.append(reinterpret_cast<const char*>(tensor.data()), bytes);  // host is little-endian
  });

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out.write(kMagic, 4);
  const std::uint16_t version = kVersion;
  char vbuf[2] = {static_cast<char>(version & 0xff), static_cast<char>(version >> 8)};
  out.write(vbuf, 2);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::string crc;
  put_u32(crc, compute_crc(payload));
  out.write(crc.data(), 4);
  if (!out) fail(ErrorKind::kIo, "short write to " + path);
}

Model load_checkpoint(const std::string& path, const std::string& require_prefix) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (file.size() < 10 || std::memcmp(file.data(), kMagic, 4) != 0)
    fail(ErrorKind::kBadMagic, "not a checkpoint: " + path);
  const std::uint16_t version = static_cast<std::uint16_t>(static_cast<unsigned char>(file[4]) |
                                                           (static_cast<unsigned char>(file[5]) << 8));
  if (version != kVersion) fail(ErrorKind::kVersionUnsupported, "checkpoint version " + std::to_string(version));
  const std::string payload = file.substr(6, file.size() - 10);
  const auto* tail = reinterpret_cast<const unsigned char*>(file.data() + file.size() - 4);
  const std::uint32_t stored_crc = static_cast<std::uint32_t>(tail[0]) | (static_cast<std::uint32_t>(tail[1]) << 8) |
                                   (static_cast<std::uint32_t>(tail[2]) << 16) |
                                   (static_cast<std::uint32_t>(tail[3]) << 24);
  if (compute_crc(payload) != stored_crc) fail(ErrorKind::kCrcMismatch, "checksum failed for " + path);

  Reader r(payload);
  const std::string arch = r.str();
  if (!require_prefix.empty() && arch.rfind(require_prefix, 0) != 0)
    fail(ErrorKind::kArchMismatch, "checkpoint holds " + arch + ", expected " + require_prefix + "*");
  std::vector<std::string> class_names;
  const std::uint16_t n_classes = r.u16();
  for (std::uint16_t i = 0; i < n_classes; ++i) class_names.push_back(r.str());

  const std::uint32_t n_tensors = r.u32();
  std::map<std::string, StoredTensor> index;
  std::vector<float> pool;
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.str();
    const int rank = r.u8();
    if (rank > 4) fail(ErrorKind::kMalformedHeader, "tensor rank > 4 in " + path);
    std::vector<int> dims;
    for (int d = 0; d < rank; ++d) dims.push_back(static_cast<int>(r.u32()));
    Shape shape(dims);
    StoredTensor entry{shape, pool.size()};
    pool.resize(pool.size() + static_cast<std::size_t>(shape.numel()));
    r.floats(pool.data() + entry.offset, static_cast<std::size_t>(shape.numel()));
    if (!index.emplace(name, entry).second) fail(ErrorKind::kMalformedHeader, "duplicate tensor " + name);
    order.push_back(name);
  }
  if (!r.done()) fail(ErrorKind::kMalformedHeader, "trailing bytes in checkpoint payload");

  // Rebuild the architecture; geometry comes from the stored tensor shapes.
  auto shape_of = [&](const std::string& name) -> const Shape& {
    auto it = index.find(name);
    if (it == index.end()) fail(ErrorKind::kArchMismatch, "checkpoint lacks tensor " + name);
    return it->second.shape;
  };
  auto first_dense_weight = [&]() -> const Shape& {
    for (const std::string& name : order) {
      const Shape& s = index.at(name).shape;
      if (s.rank() == 2 && name.size() > 7 && name.substr(name.size() - 7) == ".weight") return s;
    }
    fail(ErrorKind::kArchMismatch, "checkpoint holds no dense weight");
  };

  Model model;
  if (arch == "rec-desk" || arch == "rec-vgg19") {
    RecognizerSpec spec;
    spec.scale = arch == "rec-desk" ? "desk" : "vgg19";
    spec.head_classes = static_cast<int>(class_names.size());
    const Shape& dense0 = first_dense_weight();
    if (arch == "rec-desk") {
      spec.img_size = 8 * sqrt_exact(dense0.dim(1) / 64);
      spec.channels = shape_of("layer0.weight").dim(1);
    } else {
      spec.img_size = 32 * sqrt_exact(dense0.dim(1) / 512);
      spec.channels = shape_of("layer0.weight").dim(1);
    }
    model = build_recognizer(spec);
    model.class_names = class_names;
  } else if (arch == "dcgan-g") {
    const Shape& dense0 = first_dense_weight();
    GanSpec spec;
    spec.latent_dim = dense0.dim(1);
    spec.img_size = 4 * sqrt_exact(dense0.dim(0) / 128);
    // The output conv is the highest-numbered rank-4 weight.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Shape& s = index.at(*it).shape;
      if (s.rank() == 4 && it->size() > 7 && it->substr(it->size() - 7) == ".weight") {
        spec.channels = s.dim(0);
        break;
      }
    }
    model = build_generator(spec);
  } else if (arch == "dcgan-d") {
    GanSpec spec;
    spec.channels = shape_of("layer0.weight").dim(1);
    const Shape& head = first_dense_weight();
    spec.img_size = 16 * sqrt_exact(head.dim(1) / 128);
    model = build_discriminator(spec);
  } else {
    fail(ErrorKind::kArchMismatch, "unknown architecture tag: " + arch);
  }

  std::size_t restored = 0;
  model.net.visit_named([&](const std::string& name, Tensor& tensor) {
    auto it = index.find(name);
    if (it == index.end()) fail(ErrorKind::kArchMismatch, "checkpoint lacks tensor " + name);
    if (!(it->second.shape == tensor.shape()))
      fail(ErrorKind::kArchMismatch, "shape mismatch for " + name + ": " + it->second.shape.str() + " vs " +
                                         tensor.shape().str());
    std::memcpy(tensor.data(), pool.data() + it->second.offset, static_cast<std::size_t>(tensor.numel()) * 4);
    ++restored;
  });
  if (restored != index.size()) fail(ErrorKind::kArchMismatch, "checkpoint holds extra tensors");
  return model;
}

}  // namespace laif
