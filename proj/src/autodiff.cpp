#include "autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "rotmath.hpp"

namespace bpg::ad {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape(a.value()) +
                                " vs " + shape(b.value()));
  }
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::external(const Matrix& storage) {
  if (auto it = externals_.find(&storage); it != externals_.end()) return Var(this, it->second);
  Node n;
  n.ref = &storage;
  n.requires_grad = track_externals_;
  Var v = push(std::move(n));
  externals_.emplace(&storage, v.id());
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("ad: operand belongs to another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("ad: operand belongs to another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

void Tape::backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("ad: backward needs a 1x1 root, got " + shape(root.value()));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) {
    const Matrix& val = value(v.id());
    return Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

const Matrix* Tape::external_grad(const Matrix& storage) const {
  auto it = externals_.find(&storage);
  if (it == externals_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.grad.size() == 0 ? nullptr : &n.grad;
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                            if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                          });
}

Var scale(const Var& a, double s) {
  return a.tape()->record(a.value() * s, {a},
                          [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  return a.tape()->record(a.value().array() + s, {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw std::invalid_argument("add_row: bias " + shape(b.value()) + " does not fit " +
                                shape(a.value()));
  }
  Matrix out = a.value().rowwise() + b.value().row(0);
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, g.colwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: " + shape(a.value()) + " * " + shape(b.value()));
  }
  return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(const Var& a) {
  return a.tape()->record(a.value().transpose(), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  Matrix saved = out;
  return a.tape()->record(std::move(out), {a}, [a, saved](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(saved));
  });
}

Var clamp(const Var& a, double lo, double hi) {
  const Matrix& x = a.value();
  Matrix out = x.cwiseMax(lo).cwiseMin(hi);
  Matrix mask = ((x.array() >= lo) && (x.array() <= hi)).cast<double>();
  return a.tape()->record(std::move(out), {a}, [a, mask](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(mask));
  });
}

Var relu(const Var& a) {
  Matrix mask = (a.value().array() > 0.0).cast<double>();
  Matrix out = a.value().cwiseProduct(mask);
  return a.tape()->record(std::move(out), {a}, [a, mask](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(mask));
  });
}

Var leaky_relu(const Var& a, double slope) {
  Matrix factor = (a.value().array() > 0.0).select(Matrix::Ones(a.rows(), a.cols()), slope);
  Matrix out = a.value().cwiseProduct(factor);
  return a.tape()->record(std::move(out), {a}, [a, factor](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(factor));
  });
}

Var abs(const Var& a) {
  Matrix sign = a.value().array().sign();
  return a.tape()->record(a.value().cwiseAbs(), {a}, [a, sign](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(sign));
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const auto r = a.rows();
  const auto c = a.cols();
  return a.tape()->record(std::move(out), {a}, [a, r, c](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& a) {
  Matrix out(1, 1);
  const double n = static_cast<double>(a.value().size());
  out(0, 0) = a.value().sum() / n;
  const auto r = a.rows();
  const auto c = a.cols();
  return a.tape()->record(std::move(out), {a}, [a, r, c, n](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(r, c, g(0, 0) / n));
  });
}

Var norm(const Var& a) {
  Matrix out(1, 1);
  const double nrm = a.value().norm();
  out(0, 0) = nrm;
  return a.tape()->record(std::move(out), {a}, [a, nrm](Tape& t, const Matrix& g) {
    if (nrm > 0.0) t.accumulate(a, a.value() * (g(0, 0) / nrm));
  });
}

Var gather_rows(const Var& a, const std::vector<int>& index) {
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const int src = index[i];
    if (src >= x.rows()) throw std::invalid_argument("gather_rows: index out of range");
    if (src >= 0) out.row(i) = x.row(src);
  }
  const auto rows = x.rows();
  return a.tape()->record(std::move(out), {a}, [a, index, rows](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(rows, g.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= 0) ga.row(index[i]) += g.row(i);
    }
    t.accumulate(a, ga);
  });
}

Var gather_cols(const Var& a, const std::vector<int>& index) {
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    const int src = index[i];
    if (src >= x.cols()) throw std::invalid_argument("gather_cols: index out of range");
    if (src >= 0) out.col(i) = x.col(src);
  }
  const auto cols = x.cols();
  return a.tape()->record(std::move(out), {a}, [a, index, cols](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(g.rows(), cols);
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= 0) ga.col(index[i]) += g.col(i);
    }
    t.accumulate(a, ga);
  });
}

Var block(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
          Eigen::Index cols) {
  if (row < 0 || col < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw std::invalid_argument("block: out of range for " + shape(a.value()));
  }
  Matrix out = a.value().block(row, col, rows, cols);
  const auto r0 = a.rows();
  const auto c0 = a.cols();
  return a.tape()->record(std::move(out), {a},
                          [a, row, col, rows, cols, r0, c0](Tape& t, const Matrix& g) {
                            Matrix ga = Matrix::Zero(r0, c0);
                            ga.block(row, col, rows, cols) = g;
                            t.accumulate(a, ga);
                          });
}

Var hstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hstack: no inputs");
  const auto rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("hstack: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts[0].tape()->record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
    Eigen::Index c = 0;
    for (const auto& p : parts) {
      t.accumulate(p, g.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vstack: no inputs");
  const auto cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("vstack: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts[0].tape()->record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
    Eigen::Index r = 0;
    for (const auto& p : parts) {
      t.accumulate(p, g.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw std::invalid_argument("reshape: size mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor src = a.value();
  Matrix out = Eigen::Map<const RowMajor>(src.data(), rows, cols);
  const auto r0 = a.rows();
  const auto c0 = a.cols();
  return a.tape()->record(std::move(out), {a}, [a, r0, c0](Tape& t, const Matrix& g) {
    RowMajor gr = g;
    t.accumulate(a, Matrix(Eigen::Map<const RowMajor>(gr.data(), r0, c0)));
  });
}

Var scatter(const Var& a, Eigen::Index rows, Eigen::Index cols,
            const std::vector<std::vector<std::pair<int, int>>>& slots) {
  if (a.rows() != 1 || a.cols() != static_cast<Eigen::Index>(slots.size())) {
    throw std::invalid_argument("scatter: expected 1x" + std::to_string(slots.size()) +
                                " input, got " + shape(a.value()));
  }
  Matrix out = Matrix::Zero(rows, cols);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    for (const auto& [i, j] : slots[k]) out(i, j) += a.value()(0, k);
  }
  return a.tape()->record(std::move(out), {a}, [a, slots](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(1, static_cast<Eigen::Index>(slots.size()));
    for (std::size_t k = 0; k < slots.size(); ++k) {
      for (const auto& [i, j] : slots[k]) ga(0, k) += g(i, j);
    }
    t.accumulate(a, ga);
  });
}

Var im2col(const Var& a, int kernel, Padding padding, int segments) {
  const Matrix& x = a.value();
  if (kernel < 1 || segments < 1 || x.rows() % segments != 0) {
    throw std::invalid_argument("im2col: bad kernel/segment layout for " + shape(x));
  }
  const Eigen::Index len = x.rows() / segments;
  const Eigen::Index ch = x.cols();
  const int first = padding == Padding::kSame ? -(kernel / 2) : -(kernel - 1);
  Matrix out = Matrix::Zero(x.rows(), ch * kernel);
  for (int s = 0; s < segments; ++s) {
    const Eigen::Index base = s * len;
    for (Eigen::Index t = 0; t < len; ++t) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = t + first + k;
        if (src < 0 || src >= len) continue;
        out.block(base + t, k * ch, 1, ch) = x.row(base + src);
      }
    }
  }
  return a.tape()->record(std::move(out), {a},
                          [a, kernel, first, segments, len, ch](Tape& t, const Matrix& g) {
                            Matrix ga = Matrix::Zero(len * segments, ch);
                            for (int s = 0; s < segments; ++s) {
                              const Eigen::Index base = s * len;
                              for (Eigen::Index r = 0; r < len; ++r) {
                                for (int k = 0; k < kernel; ++k) {
                                  const Eigen::Index src = r + first + k;
                                  if (src < 0 || src >= len) continue;
                                  ga.row(base + src) += g.block(base + r, k * ch, 1, ch);
                                }
                              }
                            }
                            t.accumulate(a, ga);
                          });
}

Var rodrigues(const Var& a) {
  if (a.value().size() != 3) throw std::invalid_argument("rodrigues: expected 3 values");
  const rotmath::Vec3 v(a.value()(0), a.value()(1), a.value()(2));
  Matrix out = rotmath::axis_angle_to_matrix(v);
  return a.tape()->record(std::move(out), {a}, [a, v](Tape& t, const Matrix& g) {
    const auto jac = rotmath::axis_angle_jacobian(v);
    Matrix ga(a.rows(), a.cols());
    for (int i = 0; i < 3; ++i) ga(i) = g.cwiseProduct(jac[i]).sum();
    t.accumulate(a, ga);
  });
}

Var scale_gradient(const Var& a, double factor) {
  return a.tape()->record(a.value(), {a},
                          [a, factor](Tape& t, const Matrix& g) { t.accumulate(a, g * factor); });
}

}  // namespace bpg::ad
