#include "fused/serialize.hpp"

#include <cstring>
#include <fstream>

#include "fused/errors.hpp"

namespace fused {

namespace {

constexpr std::uint32_t kModelMagic = 0x444D5546;    // "FUMD"
constexpr std::uint32_t kAdapterMagic = 0x44415546;  // "FUAD"
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u64(bits);
  }
  void finish_with_checksum() { u64(fnv1a(bytes_.data(), bytes_.size())); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  void verify_checksum() {
    if (bytes_.size() < pos_ + 8) throw IntegrityError("checkpoint: truncated checksum");
    std::uint64_t expected = fnv1a(bytes_.data(), bytes_.size() - 8);
    std::size_t save = pos_;
    pos_ = bytes_.size() - 8;
    std::uint64_t stored = u64();
    pos_ = save;
    if (stored != expected) throw IntegrityError("checkpoint: checksum mismatch");
  }
  void expect_consumed_to_checksum() const {
    if (pos_ != bytes_.size() - 8) throw IntegrityError("checkpoint: trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IntegrityError("checkpoint: truncated data");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t len) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::vector<std::uint8_t> encode_model(const LayeredModel& model) {
  Writer w;
  w.u32(kModelMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(model.layer_count()));
  for (const DenseLayer& l : model.layers()) {
    w.u32(static_cast<std::uint32_t>(l.in_size()));
    w.u32(static_cast<std::uint32_t>(l.out_size()));
  }
  for (const DenseLayer& l : model.layers()) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) w.f64(l.weights.data()[i]);
    for (Eigen::Index i = 0; i < l.biases.size(); ++i) w.f64(l.biases.data()[i]);
  }
  w.finish_with_checksum();
  return w.take();
}

LayeredModel decode_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.verify_checksum();
  if (r.u32() != kModelMagic) throw IntegrityError("model checkpoint: bad magic");
  if (r.u32() != kVersion) throw IntegrityError("model checkpoint: unsupported version");
  const std::uint32_t count = r.u32();
  if (count == 0) throw IntegrityError("model checkpoint: zero layers");

  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t in = r.u32();
    std::uint32_t out = r.u32();
    if (in == 0 || out == 0) throw IntegrityError("model checkpoint: zero-sized layer");
    shapes.emplace_back(in, out);
  }

  std::vector<DenseLayer> layers;
  for (auto [in, out] : shapes) {
    DenseLayer l;
    l.weights.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
    l.biases.resize(1, static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = r.f64();
    for (Eigen::Index i = 0; i < l.biases.size(); ++i) l.biases.data()[i] = r.f64();
    layers.push_back(std::move(l));
  }
  r.expect_consumed_to_checksum();
  return LayeredModel(std::move(layers));
}

std::vector<std::uint8_t> encode_adapters(const AdapterSet& adapters) {
  Writer w;
  w.u32(kAdapterMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(adapters.size()));
  for (const auto& [l, a] : adapters) {
    w.u32(static_cast<std::uint32_t>(l));
    w.u32(static_cast<std::uint32_t>(a.rows));
    w.u32(static_cast<std::uint32_t>(a.cols));
    w.f64(a.keep_rate);
    w.u32(static_cast<std::uint32_t>(a.kept.size()));
    for (std::uint32_t idx : a.kept) w.u32(idx);
    for (double v : a.values) w.f64(v);
  }
  w.finish_with_checksum();
  return w.take();
}

AdapterSet decode_adapters(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.verify_checksum();
  if (r.u32() != kAdapterMagic) throw IntegrityError("adapter checkpoint: bad magic");
  if (r.u32() != kVersion) throw IntegrityError("adapter checkpoint: unsupported version");
  const std::uint32_t count = r.u32();

  AdapterSet set;
  for (std::uint32_t i = 0; i < count; ++i) {
    SparseAdapter a;
    a.layer_index = static_cast<int>(r.u32());
    a.rows = static_cast<Eigen::Index>(r.u32());
    a.cols = static_cast<Eigen::Index>(r.u32());
    a.keep_rate = r.f64();
    const std::uint32_t kept = r.u32();
    a.kept.resize(kept);
    for (std::uint32_t k = 0; k < kept; ++k) a.kept[k] = r.u32();
    a.values.resize(kept);
    for (std::uint32_t k = 0; k < kept; ++k) a.values[k] = r.f64();
    for (std::uint32_t k = 0; k + 1 < kept; ++k) {
      if (a.kept[k] >= a.kept[k + 1]) {
        throw IntegrityError("adapter checkpoint: kept indices not ascending");
      }
    }
    if (a.layer_index <= 0) throw IntegrityError("adapter checkpoint: bad layer index");
    if (set.count(a.layer_index)) throw IntegrityError("adapter checkpoint: duplicate layer");
    set.emplace(a.layer_index, std::move(a));
  }
  r.expect_consumed_to_checksum();
  return set;
}

std::uint64_t model_checkpoint_bytes(const LayeredModel& model) {
  std::uint64_t n = 12;  // magic, version, layer count
  n += static_cast<std::uint64_t>(model.layer_count()) * 8;
  n += static_cast<std::uint64_t>(model.param_count()) * sizeof(double);
  return n + 8;  // checksum
}

std::uint64_t adapter_checkpoint_bytes(const AdapterSet& adapters) {
  std::uint64_t n = 12;
  for (const auto& [l, a] : adapters) {
    n += 4 + 4 + 4 + 8 + 4;
    n += a.kept.size() * 4 + a.values.size() * 8;
  }
  return n + 8;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path);
  std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("read failed: " + path);
  return bytes;
}

void save_model(const LayeredModel& model, const std::string& path) {
  write_file(path, encode_model(model));
}

LayeredModel load_model(const std::string& path) { return decode_model(read_file(path)); }

void save_adapters(const AdapterSet& adapters, const std::string& path) {
  write_file(path, encode_adapters(adapters));
}

AdapterSet load_adapters(const std::string& path) { return decode_adapters(read_file(path)); }

}  // namespace fused
