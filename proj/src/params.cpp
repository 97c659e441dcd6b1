#include "params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "errors.hpp"

namespace bpg {

Parameter& ParamStore::add(std::string name, std::string block, Matrix value) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(block), std::move(value)});
  return params_.back();
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second];
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

ParamStore::ParamStore(const ParamStore& other) : params_(other.params_), index_(other.index_) {}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  params_ = other.params_;
  index_ = other.index_;
  return *this;
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  }
  return m;
}

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

namespace {

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw std::runtime_error("checkpoint: truncated tensor data");
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string read_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated header");
  return line;
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  std::size_t config_lines = 0;
  for (char c : ckpt.config_echo) config_lines += c == '\n';
  out << "BPGCKPT\n";
  out << "version " << ckpt.version << '\n';
  out << "step " << ckpt.step << '\n';
  out << "config " << config_lines << '\n' << ckpt.config_echo;
  out << "tensors " << ckpt.tensors.size() << '\n';
  for (const auto& [name, m] : ckpt.tensors) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  }
  out << "end\n";
  for (const auto& [name, m] : ckpt.tensors) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  }
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  if (read_line(in) != "BPGCKPT") throw std::runtime_error("not a checkpoint file: " + path);
  Checkpoint ck;
  auto keyed = [&](const char* key) {
    std::istringstream ls(read_line(in));
    std::string k;
    long long v = 0;
    if (!(ls >> k >> v) || k != key) {
      throw std::runtime_error(std::string("checkpoint: expected '") + key + "' line");
    }
    return v;
  };
  ck.version = static_cast<int>(keyed("version"));
  if (ck.version != Checkpoint::kVersion) {
    throw VersionError("checkpoint version " + std::to_string(ck.version) +
                             " is not supported (expected " +
                             std::to_string(Checkpoint::kVersion) + ")");
  }
  ck.step = keyed("step");
  const long long n_config = keyed("config");
  for (long long i = 0; i < n_config; ++i) ck.config_echo += read_line(in) + '\n';
  const long long n_tensors = keyed("tensors");
  if (n_tensors < 0) throw std::runtime_error("checkpoint: bad tensor count");
  for (long long i = 0; i < n_tensors; ++i) {
    std::istringstream ls(read_line(in));
    std::string name;
    long long r = 0;
    long long c = 0;
    if (!(ls >> name >> r >> c) || r < 0 || c < 0) {
      throw std::runtime_error("checkpoint: bad tensor header");
    }
    ck.tensors.emplace_back(name, Matrix(r, c));
  }
  if (read_line(in) != "end") throw std::runtime_error("checkpoint: missing 'end' marker");
  for (auto& [name, m] : ck.tensors) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint: trailing bytes after tensor data");
  }
  return ck;
}

}  // namespace bpg
