#pragma once

// Finite-difference verification of analytic gradients, per learned block.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "params.hpp"

namespace bpg::gradcheck {

struct Options {
  double tol = 1e-4;
  double step = 1e-6;
  std::uint64_t seed = 7;
};

/// Worst entry of one checked tensor.
struct TensorResult {
  std::string name;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  std::size_t entries = 0;
};

struct BlockReport {
  std::string block;
  bool pass = true;
  double tol = 0.0;
  std::vector<TensorResult> tensors;
  /// Name of the tensor with the largest error (the failing one on failure).
  std::string worst;
  double max_rel_err = 0.0;

  std::string to_text() const;
};

/// |a - n| / max(|a|, |n|, 1e-3)
double relative_error(double analytic, double numeric);

/// A function of tensors held in `store`. `checked` lists the tensors whose
/// gradients are compared; `sample` > 0 restricts the comparison to that many
/// seeded random entries across them. `loss` marks a scalar objective; other
/// outputs are reduced with a fixed random projection.
struct Problem {
  std::shared_ptr<void> owner;
  ParamStore* store = nullptr;
  std::vector<std::string> checked;
  std::function<ad::Var(ad::Tape&)> forward;
  std::size_t sample = 0;
  bool loss = false;
};

BlockReport run(const std::string& block, const Problem& problem, const Options& opt);

/// Blocks covered by "all", in report order.
const std::vector<std::string>& block_names();
/// Also accepts the test-only "corrupted" block, whose gradient is off by 1%.
bool is_block(const std::string& name);
Problem make_problem(const std::string& block, std::uint64_t seed);

/// Throws std::invalid_argument for an unknown block name.
BlockReport check_block(const std::string& block, const Options& opt = {});
std::vector<BlockReport> check_all(const Options& opt = {});

}  // namespace bpg::gradcheck
