#pragma once

// Tiny networks and light fields shared by the model tests.

#include "lfsr/coarse_sr.hpp"
#include "lfsr/refinement.hpp"
#include "support/oracles.hpp"

namespace fixture {

inline lfsr::CoarseConfig tiny_coarse(int p = 2, int channels = 2) {
  lfsr::CoarseConfig cfg;
  cfg.channels = channels;
  cfg.selector_channels = channels;
  cfg.n1 = cfg.n2 = cfg.n3 = cfg.n4 = 1;
  cfg.p = p;
  cfg.scale = 2;
  return cfg;
}

inline lfsr::RefineConfig tiny_refine(int channels = 2, int layers = 2) {
  lfsr::RefineConfig cfg;
  cfg.channels = channels;
  cfg.n5 = layers;
  return cfg;
}

/// Coarse model with every parameter (including the zero-initialized tail) random.
template <typename Scalar>
lfsr::CoarseModel<Scalar> random_coarse(const lfsr::CoarseConfig& cfg, std::uint64_t seed, double scale = 0.5) {
  lfsr::Rng rng(seed);
  lfsr::CoarseModel<Scalar> model(cfg, rng);
  oracle::randomize(model.parameters(), rng, scale);
  return model;
}

template <typename Scalar>
lfsr::Refiner<Scalar> random_refiner(const lfsr::RefineConfig& cfg, std::uint64_t seed, double scale = 0.5) {
  lfsr::Rng rng(seed);
  lfsr::Refiner<Scalar> refiner(cfg, rng);
  oracle::randomize(refiner.parameters(), rng, scale);
  return refiner;
}

template <typename Scalar>
std::vector<lfsr::Tensor<double>> leaves(const lfsr::ParameterList<Scalar>& params) {
  std::vector<lfsr::Tensor<double>> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

/// Smooth loss with a dense, non-degenerate gradient: sum(x * weights).
inline lfsr::Tensor<double> probe(const lfsr::Tensor<double>& x, const lfsr::Tensor<double>& weights) {
  return lfsr::sum(lfsr::mul(x, weights));
}

template <typename Scalar>
lfsr::LightField<Scalar> textured_lf(int m, int n, int h, int w, double d, std::uint64_t seed, double frequency = 0.3) {
  const int margin = static_cast<int>(std::ceil(std::abs(d) * std::max(m, n))) + 2;
  const Eigen::MatrixXd base = oracle::texture(h + 2 * margin, w + 2 * margin, seed, frequency);
  return lfsr::synthesize_lightfield(oracle::to_image<Scalar>(base), d, m, n, h, w);
}

}  // namespace fixture
