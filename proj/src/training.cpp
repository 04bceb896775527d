#include "lfsr/training.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

namespace lfsr {

std::string to_string(Stage stage) { return stage == Stage::Coarse ? "coarse" : "refine"; }

Stage parse_stage(const std::string& text) {
  if (text == "coarse") return Stage::Coarse;
  if (text == "refine") return Stage::Refine;
  throw std::invalid_argument("unknown stage '" + text + "' (expected coarse or refine)");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  const CoarseConfig& c = cfg.coarse;
  return {{"coarse",
           {{"channels", c.channels},
            {"n1", c.n1},
            {"n2", c.n2},
            {"n3", c.n3},
            {"n4", c.n4},
            {"p", c.p},
            {"scale", c.scale},
            {"use_selector", c.use_selector},
            {"selector_channels", c.selector_channels}}},
          {"refine", {{"channels", cfg.refine.channels}, {"n5", cfg.refine.n5}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("coarse")) {
    const auto& c = j["coarse"];
    cfg.coarse.channels = c.value("channels", cfg.coarse.channels);
    cfg.coarse.n1 = c.value("n1", cfg.coarse.n1);
    cfg.coarse.n2 = c.value("n2", cfg.coarse.n2);
    cfg.coarse.n3 = c.value("n3", cfg.coarse.n3);
    cfg.coarse.n4 = c.value("n4", cfg.coarse.n4);
    cfg.coarse.p = c.value("p", cfg.coarse.p);
    cfg.coarse.scale = c.value("scale", cfg.coarse.scale);
    cfg.coarse.use_selector = c.value("use_selector", cfg.coarse.use_selector);
    cfg.coarse.selector_channels = c.value("selector_channels", cfg.coarse.selector_channels);
  }
  if (j.contains("refine")) {
    cfg.refine.channels = j["refine"].value("channels", cfg.refine.channels);
    cfg.refine.n5 = j["refine"].value("n5", cfg.refine.n5);
  }
  return cfg;
}

void TrainConfig::validate(int scale) const {
  if (!(lr0 > 0)) throw std::invalid_argument("train: lr0 must be positive");
  if (batch != 1) throw std::invalid_argument("train: only batch size 1 is supported");
  if (patch < 1) throw std::invalid_argument("train: patch must be positive");
  if ((patch * scale) % scale != 0) throw std::invalid_argument("train: patch not divisible by the scale");
  if (decay_every < 1) throw std::invalid_argument("train: decay_every must be positive");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"stage", to_string(cfg.stage)}, {"lr0", cfg.lr0},         {"decay", cfg.decay},
          {"decay_every", cfg.decay_every}, {"batch", cfg.batch},    {"patch", cfg.patch},
          {"beta1", cfg.beta1},           {"beta2", cfg.beta2},      {"epsilon", cfg.epsilon},
          {"epochs", cfg.epochs},         {"k_min", cfg.k_min},      {"k_max", cfg.k_max},
          {"patch_selector", cfg.patch_selector}, {"lambda_epi", cfg.lambda_epi}, {"seed", cfg.seed}};
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::pow(cfg.decay, std::floor(static_cast<double>(epoch) / cfg.decay_every));
}

std::pair<int, int> k_range(const TrainConfig& cfg, const CoarseConfig& model, int views) {
  const int lo = std::max(model.p, cfg.k_min > 0 ? cfg.k_min : model.p);
  const int hi = std::min(views, cfg.k_max > 0 ? cfg.k_max : views);
  if (lo > hi)
    throw DataError("k range [" + std::to_string(lo) + "," + std::to_string(hi) + "] is empty for " +
                    std::to_string(views) + " views");
  return {lo, hi};
}

TrainingSample make_sample(const TrainingLightField& data, const TrainConfig& cfg, const CoarseConfig& model,
                           Rng& rng) {
  const LightField<float>& hr = data.hr;
  const int scale = model.scale, size = cfg.patch * scale;
  if (hr.height() < size || hr.width() < size)
    throw DataError("make_sample: light field " + std::to_string(hr.height()) + "x" + std::to_string(hr.width()) +
                    " is smaller than the " + std::to_string(size) + "x" + std::to_string(size) + " crop");
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int y0 = uniform(0, hr.height() - size);
  const int x0 = uniform(0, hr.width() - size);

  TrainingSample s;
  if (cfg.patch_selector) {
    DisparityMap<float> map = data.disparity ? *data.disparity : estimate_disparity_epi(hr).map;
    const PatchWindow window{{y0 + size / 2, x0 + size / 2}, size};
    AlignedPatches<float> aligned = crop_aligned_patches(hr, map, window);
    s.hr = std::move(aligned.patches);
    s.origins = std::move(aligned.origins);
  } else {
    s.hr = LightField<float>(hr.angular_rows(), hr.angular_cols(), size, size, 1);
    for (const auto& p : hr.positions()) {
      s.hr.set_sai(p, hr.sai(p).block(y0, x0, size, size));
      s.origins.push_back({y0, x0});
    }
  }
  s.lr = degrade(s.hr, scale);
  s.target = hr.position(uniform(0, hr.view_count() - 1));
  const auto [lo, hi] = k_range(cfg, model, hr.view_count());
  s.k = uniform(lo, hi);
  return s;
}

std::string loss_log_csv(const std::vector<TrainLogRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "step,stage,loss_l1,loss_epi,lr\n";
  for (const auto& r : rows) os << r.step << ',' << to_string(r.stage) << ',' << r.loss_l1 << ',' << r.loss_epi << ',' << r.lr << '\n';
  return os.str();
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed, bool with_refiner) {
  Rng rng(seed);
  Model m{cfg, CoarseModel<float>(cfg.coarse, rng), std::nullopt};
  if (with_refiner) m.refiner.emplace(cfg.refine, rng);
  return m;
}

Model load_model(const Checkpoint& ckpt) {
  if (!ckpt.config.contains("model")) throw CheckpointError("checkpoint: missing model config");
  const ModelConfig cfg = model_config_from_json(ckpt.config["model"]);
  Model m = make_model(cfg, 0, ckpt.has_prefix("refine."));
  restore_parameters(ckpt, m.coarse.parameters());
  if (m.refiner) restore_parameters(ckpt, m.refiner->parameters());
  return m;
}

Checkpoint make_checkpoint(const Model& model, std::int64_t step, const nlohmann::json& extra) {
  Checkpoint ckpt;
  ckpt.step = step;
  ckpt.config = {{"model", to_json(model.config)}};
  if (extra.is_object())
    for (const auto& [key, value] : extra.items()) ckpt.config[key] = value;
  store_parameters(ckpt, model.coarse.parameters());
  if (model.refiner) store_parameters(ckpt, model.refiner->parameters());
  return ckpt;
}

Tensor<float> coarse_all_views(const LightField<float>& lr, const CoarseModel<float>& coarse, std::optional<int> k) {
  const ViewSet<float> views = view_set(lr);
  const int scale = coarse.config().scale;
  const Index h = static_cast<Index>(lr.height()) * scale, w = static_cast<Index>(lr.width()) * scale;
  Tensor<float> out(Shape{lr.view_count(), 1, h, w});
  CoarseOptions options;
  options.k = k;
  for (int t = 0; t < views.size(); ++t) {
    const CoarseResult<float> r = coarse_super_resolve(views, t, coarse, options);
    std::copy_n(r.sr.data(), h * w, out.data() + t * h * w);
  }
  return out;
}

namespace {

void check_finite(double loss, std::int64_t step) {
  if (!std::isfinite(loss)) throw NumericError("training diverged: non-finite loss at step " + std::to_string(step));
}

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

TrainResult train_stage(const std::vector<TrainingLightField>& data, const ModelConfig& model_cfg,
                        const TrainConfig& cfg, const Checkpoint* coarse, const TrainCallback& on_step) {
  cfg.validate(model_cfg.coarse.scale);
  if (data.empty()) throw DataError("train: empty dataset");
  for (const auto& d : data)
    if (d.hr.channels() != 1) throw DataError("train: expected single-channel (Y) light fields");

  Model model = make_model(model_cfg, cfg.seed, cfg.stage == Stage::Refine);
  ParameterList<float> trainable;
  if (cfg.stage == Stage::Refine) {
    if (coarse == nullptr || !coarse->has_prefix("coarse."))
      throw TrainingError("train: the refine stage needs a trained coarse checkpoint");
    restore_parameters(*coarse, model.coarse.parameters());
    set_requires_grad(model.coarse.parameters(), false);
    trainable = model.refiner->parameters();
  } else {
    trainable = model.coarse.parameters();
  }
  set_requires_grad(trainable, true);

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState<float> adam;
  const AdamOptions adam_options{cfg.beta1, cfg.beta2, cfg.epsilon};
  TrainResult result;
  std::map<std::size_t, std::pair<Tensor<float>, Tensor<float>>> coarse_cache;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    for (std::size_t index : epoch_order(data.size(), rng)) {
      const TrainingSample sample = make_sample(data[index], cfg, model_cfg.coarse, rng);
      zero_grad(trainable);
      Tape<float> tape;
      TrainLogRow row{step, cfg.stage, 0.0, 0.0, lr};

      if (cfg.stage == Stage::Coarse) {
        const ViewSet<float> views = view_set(sample.lr);
        const int target = sample.lr.view_index(sample.target);
        Tensor<float> loss;
        {
          Tape<float>::Scope scope(tape);
          CoarseOptions options;
          options.k = sample.k;
          const CoarseResult<float> r = coarse_super_resolve(views, target, model.coarse, options);
          loss = coarse_loss(r.sr, image_tensor(sample.hr.sai(sample.target)));
        }
        row.loss_l1 = loss.item();
        check_finite(row.loss_l1, step);
        tape.backward(loss);
      } else {
        // A crop covering the whole frame is the same every time; its coarse pass is reused.
        const bool full_frame = sample.hr.height() == data[index].hr.height() &&
                                sample.hr.width() == data[index].hr.width() && !cfg.patch_selector;
        Tensor<float> coarse_views, hr_views;
        if (auto it = coarse_cache.find(index); full_frame && it != coarse_cache.end()) {
          std::tie(coarse_views, hr_views) = it->second;
        } else {
          coarse_views = coarse_all_views(sample.lr, model.coarse);
          hr_views = lightfield_tensor(sample.hr);
          if (full_frame) coarse_cache[index] = {coarse_views, hr_views};
        }
        const Index rows = sample.hr.angular_rows(), cols = sample.hr.angular_cols();
        RefineLoss<float> loss;
        {
          Tape<float>::Scope scope(tape);
          Tensor<float> refined = model.refiner->forward(coarse_views, rows, cols);
          loss = refine_loss(refined, hr_views, rows, cols, static_cast<float>(cfg.lambda_epi));
        }
        row.loss_l1 = loss.l1.item();
        row.loss_epi = loss.epi.item();
        check_finite(loss.total.item(), step);
        tape.backward(loss.total);
      }

      adam_step(trainable, adam, lr, adam_options);
      result.log.push_back(row);
      if (on_step) on_step(row);
      ++step;
    }
  }

  result.checkpoint =
      make_checkpoint(model, step, {{"stage", to_string(cfg.stage)}, {"train", to_json(cfg)}});
  return result;
}

}  // namespace lfsr
