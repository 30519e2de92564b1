#include "sfw/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace sfw {

namespace {

constexpr std::array<char, 8> kDataMagic{'S', 'F', 'W', 'D', 'A', 'T', 'A', '\0'};
constexpr std::array<char, 8> kCkptMagic{'S', 'F', 'W', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint8_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(open_for_writing(path, true)), path_(path) {}
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u64(std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    bytes(buf, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void finish() {
    out_.flush();
    if (!out_) throw FormatError("write failed: " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw FormatError("cannot open " + path);
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw FormatError("truncated file: " + path_);
  }
  std::uint8_t u8() {
    char c;
    bytes(&c, 1);
    return static_cast<std::uint8_t>(c);
  }
  std::uint64_t u64() {
    unsigned char buf[8];
    bytes(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void expect_magic(const std::array<char, 8>& magic) {
    std::array<char, 8> got{};
    bytes(got.data(), 8);
    if (got != magic) throw FormatError("bad magic header: " + path_);
    const std::uint8_t v = u8();
    if (v != kVersion) throw FormatError("unsupported version " + std::to_string(v) + ": " + path_);
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes: " + path_);
  }

 private:
  std::ifstream in_;
  std::string path_;
};

// Caps sizes read from headers so a corrupt header cannot request huge allocations.
Index checked_size(std::uint64_t v, const char* what) {
  if (v > (std::uint64_t{1} << 40)) throw FormatError(std::string("implausible ") + what);
  return static_cast<Index>(v);
}

double parse_double(std::string_view s, const std::string& path, std::size_t line) {
  double v = 0.0;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw FormatError(path + ":" + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::ofstream open_for_writing(const std::string& path, bool binary) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, binary ? std::ios::binary | std::ios::out : std::ios::out);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  return out;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out = open_for_writing(path, false);
  const Index d = data.features.rows();
  const Index l = data.targets.rows();
  for (Index j = 0; j < d; ++j) out << (j ? "," : "") << 'x' << j;
  for (Index j = 0; j < l; ++j) out << (d + j ? "," : "") << 'y' << j;
  out << '\n';
  out.precision(17);
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < d; ++j) out << (j ? "," : "") << data.features(j, i);
    for (Index j = 0; j < l; ++j) out << (d + j ? "," : "") << data.targets(j, i);
    out << '\n';
  }
  if (!out) throw FormatError("write failed: " + path);
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file");
  Index d = 0, l = 0;
  for (std::string_view name : split_commas(line)) {
    while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.remove_suffix(1);
    if (!name.empty() && name.front() == 'x' && l == 0)
      ++d;
    else if (!name.empty() && name.front() == 'y')
      ++l;
    else
      throw FormatError(path + ": header must be x0..x{d-1} followed by y0..y{l-1}");
  }
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_commas(line);
    if (static_cast<Index>(cells.size()) != d + l)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(d + l) + " columns");
    for (std::string_view c : cells) values.push_back(parse_double(c, path, lineno));
  }
  const Index n = static_cast<Index>(values.size()) / std::max<Index>(d + l, 1);
  Dataset ds;
  ds.features.resize(d, n);
  ds.targets.resize(l, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) ds.features(j, i) = values[static_cast<std::size_t>(i * (d + l) + j)];
    for (Index j = 0; j < l; ++j) ds.targets(j, i) = values[static_cast<std::size_t>(i * (d + l) + d + j)];
  }
  return ds;
}

void write_dataset_binary(const std::string& path, const Dataset& data) {
  Writer w(path);
  w.bytes(kDataMagic.data(), kDataMagic.size());
  w.u8(kVersion);
  w.u64(static_cast<std::uint64_t>(data.size()));
  w.u64(static_cast<std::uint64_t>(data.features.rows()));
  w.u64(static_cast<std::uint64_t>(data.targets.rows()));
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.features.rows(); ++j) w.f64(data.features(j, i));
    for (Index j = 0; j < data.targets.rows(); ++j) w.f64(data.targets(j, i));
  }
  w.finish();
}

Dataset read_dataset_binary(const std::string& path) {
  Reader r(path);
  r.expect_magic(kDataMagic);
  const Index n = checked_size(r.u64(), "sample count");
  const Index d = checked_size(r.u64(), "feature count");
  const Index l = checked_size(r.u64(), "target count");
  Dataset ds;
  ds.features.resize(d, n);
  ds.targets.resize(l, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) ds.features(j, i) = r.f64();
    for (Index j = 0; j < l; ++j) ds.targets(j, i) = r.f64();
  }
  r.expect_end();
  return ds;
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::array<char, 8> head{};
  in.read(head.data(), 8);
  if (in.gcount() == 8 && head == kDataMagic) return read_dataset_binary(path);
  return read_dataset_csv(path);
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const MLPSpec& s = ckpt.spec;
  s.validate();
  Writer w(path);
  w.bytes(kCkptMagic.data(), kCkptMagic.size());
  w.u8(kVersion);
  w.u8(s.activation == Activation::Sigmoid ? 0 : 1);
  w.u8(s.loss == Loss::MSE ? 0 : 1);
  w.u8(s.bias ? 1 : 0);
  w.u64(s.layer_sizes.size());
  for (Index v : s.layer_sizes) w.u64(static_cast<std::uint64_t>(v));
  w.u64(s.fw_layers.size());
  for (Index v : s.fw_layers) w.u64(static_cast<std::uint64_t>(v));
  for (double dlt : s.delta_per_layer) w.f64(dlt);
  for (const MatrixXd& m : ckpt.params.weights)
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
  for (const VectorXd& b : ckpt.params.biases)
    for (Index r = 0; r < b.size(); ++r) w.f64(b[r]);
  w.finish();
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(path);
  r.expect_magic(kCkptMagic);
  Checkpoint ck;
  MLPSpec& s = ck.spec;
  const std::uint8_t act = r.u8(), loss = r.u8(), bias = r.u8();
  if (act > 1 || loss > 1 || bias > 1) throw FormatError("bad checkpoint enums: " + path);
  s.activation = act == 0 ? Activation::Sigmoid : Activation::ReLU;
  s.loss = loss == 0 ? Loss::MSE : Loss::SoftmaxCrossEntropy;
  s.bias = bias == 1;
  const Index n_sizes = checked_size(r.u64(), "layer count");
  if (n_sizes > 1024) throw FormatError("implausible layer count: " + path);
  for (Index i = 0; i < n_sizes; ++i) s.layer_sizes.push_back(checked_size(r.u64(), "layer size"));
  const Index n_fw = checked_size(r.u64(), "fw layer count");
  if (n_fw > n_sizes) throw FormatError("implausible fw layer count: " + path);
  for (Index i = 0; i < n_fw; ++i) s.fw_layers.push_back(checked_size(r.u64(), "fw layer"));
  for (Index i = 0; i < n_fw; ++i) s.delta_per_layer.push_back(r.f64());
  try {
    s.validate();
  } catch (const InputError& e) {
    throw FormatError(path + ": " + e.what());
  }
  ck.params = MLPParams::zeros(s);
  for (MatrixXd& m : ck.params.weights)
    for (Index rr = 0; rr < m.rows(); ++rr)
      for (Index c = 0; c < m.cols(); ++c) m(rr, c) = r.f64();
  for (VectorXd& b : ck.params.biases)
    for (Index rr = 0; rr < b.size(); ++rr) b[rr] = r.f64();
  r.expect_end();
  return ck;
}

}  // namespace sfw
