#pragma once

#include "lfsr/ops.hpp"
#include "lfsr/tensor.hpp"

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lfsr {

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

template <typename Scalar>
using ParameterList = std::vector<NamedTensor<Scalar>>;

using Rng = std::mt19937_64;

/// Uniform in [-s, s] with s = sqrt(1 / fan_in).
template <typename Scalar>
Tensor<Scalar> uniform_init(Shape shape, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) t.values()[i] = static_cast<Scalar>(dist(rng));
  return t;
}

template <typename Scalar>
struct Conv2d {
  Tensor<Scalar> weight;  // [out, in, k, k]
  Tensor<Scalar> bias;    // [out]

  static Conv2d make(Index in, Index out, Index kernel, Rng& rng) {
    Conv2d conv;
    conv.weight = uniform_init<Scalar>({out, in, kernel, kernel}, in * kernel * kernel, rng);
    conv.bias = Tensor<Scalar>(Shape{out});
    return conv;
  }

  static Conv2d zeros(Index in, Index out, Index kernel) {
    return Conv2d{Tensor<Scalar>(Shape{out, in, kernel, kernel}), Tensor<Scalar>(Shape{out})};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return conv2d(x, weight, bias); }

  void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

/// Pre-activation residual block with a single convolution: y = x + conv(relu(x)).
template <typename Scalar>
struct ResidualBlock {
  Conv2d<Scalar> conv;

  static ResidualBlock make(Index channels, Rng& rng) {
    return ResidualBlock{Conv2d<Scalar>::make(channels, channels, 3, rng)};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return add(x, conv(relu(x))); }

  void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
    conv.collect(prefix + ".conv", out);
  }
};

template <typename Scalar>
std::vector<ResidualBlock<Scalar>> make_blocks(int count, Index channels, Rng& rng) {
  std::vector<ResidualBlock<Scalar>> blocks;
  blocks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) blocks.push_back(ResidualBlock<Scalar>::make(channels, rng));
  return blocks;
}

template <typename Scalar>
Tensor<Scalar> run_blocks(const std::vector<ResidualBlock<Scalar>>& blocks, Tensor<Scalar> x) {
  for (const auto& block : blocks) x = block(x);
  return x;
}

template <typename Scalar>
void collect_blocks(const std::vector<ResidualBlock<Scalar>>& blocks, const std::string& prefix,
                    ParameterList<Scalar>& out) {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + "." + std::to_string(i), out);
}

template <typename Scalar>
void set_requires_grad(const ParameterList<Scalar>& params, bool on) {
  for (const auto& p : params) {
    Tensor<Scalar> t = p.tensor;
    t.set_requires_grad(on);
  }
}

template <typename Scalar>
void zero_grad(const ParameterList<Scalar>& params) {
  for (const auto& p : params) {
    Tensor<Scalar> t = p.tensor;
    t.zero_grad();
  }
}

template <typename Scalar>
void fill_zero(const ParameterList<Scalar>& params) {
  for (const auto& p : params) {
    Tensor<Scalar> t = p.tensor;
    t.values().setZero();
  }
}

}  // namespace lfsr
