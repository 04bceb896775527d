#pragma once

#include "lfsr/checkpoint.hpp"
#include "lfsr/coarse_sr.hpp"
#include "lfsr/refinement.hpp"
#include "lfsr/selectors.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfsr {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { Coarse, Refine };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

struct ModelConfig {
  CoarseConfig coarse;
  RefineConfig refine;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TrainConfig {
  Stage stage = Stage::Coarse;
  double lr0 = 1e-4;
  double decay = 0.5;
  int decay_every = 250;  // epochs
  int batch = 1;
  int patch = 64;         // LR patch side; the HR crop is patch * scale
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 1;
  int k_min = 0;          // 0: p
  int k_max = 0;          // 0: every view
  bool patch_selector = false;
  double lambda_epi = 1.0;
  std::uint64_t seed = 1;

  void validate(int scale) const;
};

nlohmann::json to_json(const TrainConfig& cfg);

/// lr0 * decay^floor(epoch / decay_every)
double learning_rate(const TrainConfig& cfg, int epoch);

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  std::vector<Array<Scalar>> m;
  std::vector<Array<Scalar>> v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam update of every array in `params`.
template <typename Scalar>
void adam_step(const std::vector<Array<Scalar>*>& params, const std::vector<Array<Scalar>>& grads,
               AdamState<Scalar>& state, double lr, const AdamOptions& o = {}) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Array<Scalar>::Zero(p->size()));
      state.v.push_back(Array<Scalar>::Zero(p->size()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match the parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->size() != grads[i].size() || state.m[i].size() != grads[i].size())
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
  ++state.t;
  const auto b1 = static_cast<Scalar>(o.beta1), b2 = static_cast<Scalar>(o.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(o.beta1, static_cast<double>(state.t)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(o.beta2, static_cast<double>(state.t)));
  const auto step = static_cast<Scalar>(lr), eps = static_cast<Scalar>(o.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Array<Scalar>& g = grads[i];
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.square();
    *params[i] -= step * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
  }
}

/// Adam over a parameter list, reading each tensor's accumulated gradient.
template <typename Scalar>
void adam_step(const ParameterList<Scalar>& params, AdamState<Scalar>& state, double lr, const AdamOptions& o = {}) {
  std::vector<Array<Scalar>*> values;
  std::vector<Array<Scalar>> grads;
  for (const auto& p : params) {
    Tensor<Scalar> t = p.tensor;
    values.push_back(&t.impl()->value);
    grads.push_back(t.grad());
  }
  adam_step(values, grads, state, lr, o);
}

// ---------------------------------------------------------------------------
// Samples

/// One training light field (single channel), optionally with a disparity map
/// at its own resolution for the patch selector.
struct TrainingLightField {
  LightField<float> hr;
  std::optional<DisparityMap<float>> disparity;
};

struct TrainingSample {
  LightField<float> lr;
  LightField<float> hr;
  AngularPosition target;
  int k = 0;
  std::vector<PixelPosition> origins;  // HR crop origin per view
};

/// Random HR crop of (patch * scale)^2 pixels (disparity-aligned across views
/// when the patch selector is on), its bicubic LR counterpart, a uniformly
/// random target view and k uniform in the configured range.
TrainingSample make_sample(const TrainingLightField& data, const TrainConfig& cfg, const CoarseConfig& model, Rng& rng);

/// [k_min, k_max] after defaults are applied.
std::pair<int, int> k_range(const TrainConfig& cfg, const CoarseConfig& model, int views);

// ---------------------------------------------------------------------------
// Training stages

struct TrainLogRow {
  std::int64_t step = 0;
  Stage stage = Stage::Coarse;
  double loss_l1 = 0.0;
  double loss_epi = 0.0;
  double lr = 0.0;
};

using TrainCallback = std::function<void(const TrainLogRow&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
};

/// Trains the coarse network (and selector, when configured) from scratch.
/// Refinement needs `coarse`, whose parameters stay frozen while the
/// refinement network learns from their outputs.
TrainResult train_stage(const std::vector<TrainingLightField>& data, const ModelConfig& model, const TrainConfig& cfg,
                        const Checkpoint* coarse = nullptr, const TrainCallback& on_step = {});

std::string loss_log_csv(const std::vector<TrainLogRow>& rows);

// ---------------------------------------------------------------------------
// Model bundles

struct Model {
  ModelConfig config;
  CoarseModel<float> coarse;
  std::optional<Refiner<float>> refiner;
};

/// Freshly initialized model; the refiner exists only when asked for.
Model make_model(const ModelConfig& cfg, std::uint64_t seed, bool with_refiner);

/// Rebuilds a model from a checkpoint's config echo and parameters. A refiner
/// is attached when the checkpoint carries refinement weights.
Model load_model(const Checkpoint& ckpt);

Checkpoint make_checkpoint(const Model& model, std::int64_t step = 0, const nlohmann::json& extra = {});

/// Coarse outputs for every view of a regular light field, stacked [M*N,1,aH,aW].
Tensor<float> coarse_all_views(const LightField<float>& lr, const CoarseModel<float>& coarse, std::optional<int> k = {});

}  // namespace lfsr
