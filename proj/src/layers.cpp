#include "layers.hpp"

namespace bpg {

Conv1d Conv1d::create(ParamStore& store, std::string name, const char* block, int in, int out,
                      int kernel, ad::Padding padding, Init init, std::mt19937_64& rng) {
  Conv1d c{std::move(name), in, out, kernel, padding};
  const int fan_in = in * kernel;
  if (init == Init::kZero) {
    store.add(c.weight_name(), block, Matrix::Zero(fan_in, out));
    store.add(c.bias_name(), block, Matrix::Zero(1, out));
  } else {
    store.add(c.weight_name(), block, uniform_init(fan_in, out, fan_in, rng));
    store.add(c.bias_name(), block, uniform_init(1, out, fan_in, rng));
  }
  return c;
}

ad::Var Conv1d::operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& x,
                           int segments) const {
  if (x.cols() != in) {
    throw std::invalid_argument(name + ": expected " + std::to_string(in) + " channels, got " +
                                std::to_string(x.cols()));
  }
  const ad::Var w = tape.external(store.at(weight_name()).value);
  const ad::Var b = tape.external(store.at(bias_name()).value);
  const ad::Var cols = kernel == 1 ? x : ad::im2col(x, kernel, padding, segments);
  return ad::add_row(ad::matmul(cols, w), b);
}

ad::Var gated_exp(const ad::Var& x, double clamp) { return ad::exp(ad::clamp(x, -clamp, clamp)); }

}  // namespace bpg
