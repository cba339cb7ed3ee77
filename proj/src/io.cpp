#include "bfq/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "bfq/error.hpp"

namespace bfq {

namespace {

using nlohmann::json;

constexpr char kCalMagic[8] = {'B', 'F', 'Q', 'C', 'A', 'L', '1', '\0'};
constexpr char kMatMagic[8] = {'B', 'F', 'Q', 'M', 'A', 'T', '1', '\0'};

class ByteWriter {
 public:
  void raw(const char* p, std::size_t len) { out_.append(p, len); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t len, const char* what) const {
    if (bytes_.size() - pos_ < len) {
      throw Error("format", std::string("truncated ") + what + " at offset " +
                                std::to_string(pos_));
    }
  }
  std::string raw(std::size_t len, const char* what) {
    need(len, what);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::size_t offset() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw Error("format", std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

void expect_magic(ByteReader& r, const char (&magic)[8]) {
  const std::string m = r.raw(8, "magic");
  if (std::memcmp(m.data(), magic, 8) != 0) {
    throw Error("format", "bad magic at offset 0, expected " + std::string(magic));
  }
}

void write_matrix_body(ByteWriter& w, const DenseMatrix& m) {
  for (double v : m.span()) w.f64(v);
}

json butterfly_fields(const ButterflyParams& b) {
  json j;
  j["n"] = b.n;
  j["pairing_convention"] = b.pairing_convention;
  j["angles"] = b.angles;
  std::vector<int> signs(b.signs.begin(), b.signs.end());
  j["signs"] = signs;
  return j;
}

const json& field(const json& j, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end()) throw Error("format", "missing key '" + key + "'");
  return *it;
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return field(j, key).get<T>();
  } catch (const json::exception& e) {
    throw Error("format", "key '" + key + "': " + e.what());
  }
}

ButterflyParams read_butterfly(const json& j, std::size_t n, const std::string& prefix) {
  ButterflyParams b;
  b.n = n;
  b.pairing_convention = get_as<std::string>(j, "pairing_convention");
  b.angles = get_as<std::vector<double>>(j, "angles");
  const auto signs = get_as<std::vector<int>>(j, "signs");
  b.signs.reserve(signs.size());
  for (int s : signs) {
    if (s != 1 && s != -1) throw Error("format", "key '" + prefix + "signs': entry is not +-1");
    b.signs.push_back(static_cast<std::int8_t>(s));
  }
  const std::size_t units = n < 2 ? 0 : (n / 2) * log2_floor(n);
  if (b.angles.size() != units) {
    throw Error("format", "key '" + prefix + "angles': expected " + std::to_string(units) +
                              " values, found " + std::to_string(b.angles.size()));
  }
  if (b.signs.size() != 2 * units) {
    throw Error("format", "key '" + prefix + "signs': expected " + std::to_string(2 * units) +
                              " values, found " + std::to_string(b.signs.size()));
  }
  try {
    b.validate();
  } catch (const Error& e) {
    throw Error("format", e.what());
  }
  return b;
}

}  // namespace

std::string save_transform(const TransformFile& file) {
  json j;
  j["version"] = kTransformVersion;
  j["metadata"] = file.metadata;
  const Transform& t = file.transform;
  if (const auto* b = t.butterfly()) {
    j.update(butterfly_fields(*b));
    j["kind"] = "butterfly";
  } else if (const auto* c = t.composite()) {
    j.update(butterfly_fields(c->b2));
    j["kind"] = "composite";
    j["n"] = c->dim();
    j["d1"] = c->d1;
    j["d2"] = c->d2;
    j["cayley_skew"] = c->q1.skew;
  } else {
    throw Error("config", "dense transforms cannot be saved; export them instead");
  }
  return j.dump(2) + "\n";
}

TransformFile load_transform(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("format", "parse error at offset " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_object()) throw Error("format", "top level is not an object");
  const auto version = field(j, "version");
  if (!version.is_string() || version.get<std::string>() != kTransformVersion) {
    throw Error("version", "unsupported transform version " + version.dump());
  }
  static const std::vector<std::string> known = {
      "angles", "cayley_skew", "d1", "d2", "kind", "metadata", "n", "pairing_convention",
      "signs", "version"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error("format", "unknown key '" + key + "'");
    }
  }

  TransformFile out{Transform(init_identity(2)), {}};
  if (j.contains("metadata")) {
    out.metadata = get_as<std::map<std::string, std::string>>(j, "metadata");
  }
  const auto kind = get_as<std::string>(j, "kind");
  const auto n = get_as<std::size_t>(j, "n");
  if (kind == "butterfly") {
    out.transform = Transform(read_butterfly(j, n, ""));
  } else if (kind == "composite") {
    CompositeParams c;
    c.d1 = get_as<std::size_t>(j, "d1");
    c.d2 = get_as<std::size_t>(j, "d2");
    if (c.d1 * c.d2 != n) throw Error("format", "key 'n': d1 * d2 != n");
    c.b2 = read_butterfly(j, c.d2, "");
    c.q1.d = c.d1;
    c.q1.skew = get_as<std::vector<double>>(j, "cayley_skew");
    if (c.q1.skew.size() != CayleyParams::count(c.d1)) {
      throw Error("format", "key 'cayley_skew': expected " +
                                std::to_string(CayleyParams::count(c.d1)) + " values, found " +
                                std::to_string(c.q1.skew.size()));
    }
    try {
      c.validate();
    } catch (const Error& e) {
      throw Error("format", e.what());
    }
    out.transform = Transform(std::move(c));
  } else {
    throw Error("format", "key 'kind': unknown transform kind '" + kind + "'");
  }
  return out;
}

void write_transform(const std::filesystem::path& path, const TransformFile& file) {
  write_file(path, save_transform(file));
}

TransformFile read_transform(const std::filesystem::path& path) {
  return load_transform(read_file(path));
}

std::string encode_calibration(const CalibrationSet& cal) {
  cal.validate();
  ByteWriter w;
  w.raw(kCalMagic, 8);
  w.u32(to_u32(cal.w.rows(), "rows"));
  w.u32(to_u32(cal.w.cols(), "cols"));
  w.u32(to_u32(cal.x.size(), "samples"));
  w.u32(to_u32(cal.archetype.size(), "tag"));
  w.raw(cal.archetype.data(), cal.archetype.size());
  write_matrix_body(w, cal.w);
  for (const auto& x : cal.x) {
    for (double v : x.span()) w.f64(v);
  }
  return w.take();
}

CalibrationSet decode_calibration(const std::string& bytes) {
  ByteReader r(bytes);
  expect_magic(r, kCalMagic);
  const std::size_t rows = r.u32("rows");
  const std::size_t cols = r.u32("cols");
  const std::size_t samples = r.u32("samples");
  const std::size_t tag = r.u32("tag length");
  CalibrationSet cal;
  cal.archetype = r.raw(tag, "tag");
  const std::size_t body = (rows * cols + samples * cols) * 8;
  r.need(body, "payload");
  std::vector<double> w(rows * cols);
  for (double& v : w) v = r.f64("W");
  try {
    cal.w = DenseMatrix(rows, cols, std::move(w));
    cal.x.reserve(samples);
    for (std::size_t s = 0; s < samples; ++s) {
      std::vector<double> x(cols);
      for (double& v : x) v = r.f64("X");
      cal.x.emplace_back(std::move(x));
    }
  } catch (const Error& e) {
    if (e.code() == "format") throw;
    throw Error("format", std::string("payload: ") + e.what());
  }
  if (!r.done()) {
    throw Error("format", "trailing bytes at offset " + std::to_string(r.offset()));
  }
  return cal;
}

void write_calibration(const std::filesystem::path& path, const CalibrationSet& cal) {
  write_file(path, encode_calibration(cal));
}

CalibrationSet read_calibration(const std::filesystem::path& path) {
  return decode_calibration(read_file(path));
}

std::string encode_matrix(const DenseMatrix& m) {
  ByteWriter w;
  w.raw(kMatMagic, 8);
  w.u32(to_u32(m.rows(), "rows"));
  w.u32(to_u32(m.cols(), "cols"));
  write_matrix_body(w, m);
  return w.take();
}

DenseMatrix decode_matrix(const std::string& bytes) {
  ByteReader r(bytes);
  expect_magic(r, kMatMagic);
  const std::size_t rows = r.u32("rows");
  const std::size_t cols = r.u32("cols");
  r.need(rows * cols * 8, "payload");
  std::vector<double> v(rows * cols);
  for (double& e : v) e = r.f64("entry");
  if (!r.done()) {
    throw Error("format", "trailing bytes at offset " + std::to_string(r.offset()));
  }
  return DenseMatrix(rows, cols, std::move(v));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error("io", "failed reading " + path.string());
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", "failed writing " + path.string());
}

}  // namespace bfq
