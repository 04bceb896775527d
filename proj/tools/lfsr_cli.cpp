#include "lfsr/io.hpp"
#include "lfsr/pipeline.hpp"
#include "lfsr/training.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <regex>

using namespace lfsr;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kDataError = 3;
constexpr int kNumericError = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_finite(const LightField<float>& lf) {
  if (!lf.data().isFinite().all()) throw NumericError("output contains non-finite values");
}

void require_finite(const IrregularLightField<float>& lf) {
  for (int i = 0; i < lf.size(); ++i)
    for (int c = 0; c < lf.channels(); ++c)
      if (!lf.view(i, c).isFinite().all()) throw NumericError("output contains non-finite values");
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::vector<DisparityMap<float>> read_disparity_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("disparity directory " + dir.string() + " not found");
  const std::regex name(R"(disp_(\d+)_(\d+)\.lfd)");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<DisparityMap<float>> maps;
  for (const auto& f : files) {
    std::smatch m;
    const std::string base = f.filename().string();
    if (std::regex_match(base, m, name)) maps.push_back(read_disparity(f, {std::stoi(m[1]), std::stoi(m[2])}));
  }
  if (maps.empty()) throw DataError("no disp_UU_VV.lfd files in " + dir.string());
  return maps;
}

// ---------------------------------------------------------------------------

struct DegradeArgs {
  std::string in, out;
  int scale = 2;
  int bit_depth = 16;
};

int run_degrade(const DegradeArgs& a) {
  AnyLightField any = read_lightfield(a.in);
  if (auto* lf = std::get_if<LightField<float>>(&any)) {
    if (lf->height() % a.scale || lf->width() % a.scale)
      throw DataError("extents " + std::to_string(lf->height()) + "x" + std::to_string(lf->width()) +
                      " are not divisible by " + std::to_string(a.scale));
    LightField<float> lr(lf->angular_rows(), lf->angular_cols(), lf->height() / a.scale, lf->width() / a.scale,
                         lf->channels());
    for (const auto& p : lf->positions())
      for (int c = 0; c < lf->channels(); ++c) lr.set_sai(p, bicubic_downscale(lf->sai(p, c), a.scale), c);
    write_lightfield(a.out, lr, a.bit_depth);
  } else {
    const auto& irr = std::get<IrregularLightField<float>>(any);
    if (irr.height() % a.scale || irr.width() % a.scale) throw DataError("extents not divisible by the scale");
    IrregularLightField<float> lr(irr.positions(), irr.height() / a.scale, irr.width() / a.scale, irr.channels());
    for (int i = 0; i < irr.size(); ++i)
      for (int c = 0; c < irr.channels(); ++c) lr.view(i, c) = bicubic_downscale(irr.view(i, c), a.scale);
    write_lightfield(a.out, lr, a.bit_depth);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> data;
  std::string stage = "coarse";
  std::string coarse_ckpt;
  std::string out;
  std::string log;
  TrainConfig train;
  ModelConfig model;
  bool no_selector = false;
  bool quiet = false;
};

int run_train(TrainArgs a) {
  a.train.stage = parse_stage(a.stage);
  std::optional<Checkpoint> coarse;
  if (a.train.stage == Stage::Refine) {
    if (a.coarse_ckpt.empty()) throw UsageError("--stage refine requires --coarse-ckpt");
    coarse = load_checkpoint(a.coarse_ckpt);
    const ModelConfig from_ckpt = model_config_from_json(coarse->config.at("model"));
    a.model.coarse = from_ckpt.coarse;
  } else {
    a.model.coarse.use_selector = !a.no_selector;
  }
  std::vector<TrainingLightField> data;
  for (const auto& dir : a.data) {
    TrainingLightField entry{luma(read_regular_lightfield(dir)), std::nullopt};
    const fs::path disp = fs::path(dir) / disparity_filename(entry.hr.center());
    if (fs::exists(disp)) entry.disparity = read_disparity(disp, entry.hr.center());
    data.push_back(std::move(entry));
  }
  const TrainResult result = train_stage(data, a.model, a.train, coarse ? &*coarse : nullptr,
                                         [&](const TrainLogRow& r) {
                                           if (!a.quiet && (r.step % 50 == 0))
                                             std::fprintf(stderr, "step %lld %s l1=%.6f epi=%.6f lr=%.3g\n",
                                                          static_cast<long long>(r.step), to_string(r.stage).c_str(),
                                                          r.loss_l1, r.loss_epi, r.lr);
                                         });
  save_checkpoint(a.out, result.checkpoint);
  if (!a.log.empty()) write_file_atomic(a.log, loss_log_csv(result.log));
  return kOk;
}

// ---------------------------------------------------------------------------

struct SuperResolveArgs {
  std::string in, ckpt, out, disparity;
  int scale = 2;
  std::optional<int> k;
  bool patch_selector = false;
  bool coarse_only = false;
  int tile = 48;
  int margin = 8;
  int bit_depth = 16;
};

int run_super_resolve(const SuperResolveArgs& a) {
  const Model model = load_model(load_checkpoint(a.ckpt));
  if (model.config.coarse.scale != a.scale)
    throw DataError("checkpoint was trained for scale " + std::to_string(model.config.coarse.scale) +
                    ", not " + std::to_string(a.scale));
  SuperResolveOptions options;
  options.k = a.k;
  options.patch_selector = a.patch_selector;
  options.coarse_only = a.coarse_only;
  options.tile = a.tile;
  options.margin = a.margin;
  if (!a.disparity.empty()) options.disparity = read_disparity_dir(a.disparity);

  AnyLightField any = read_lightfield(a.in);
  if (auto* lf = std::get_if<LightField<float>>(&any)) {
    const LightField<float> sr = super_resolve(*lf, model, options);
    require_finite(sr);
    write_lightfield(a.out, sr, a.bit_depth);
  } else {
    if (!a.coarse_only)
      throw DataError("irregular light field: refinement needs a full grid; pass --coarse-only");
    const IrregularLightField<float> sr = super_resolve(std::get<IrregularLightField<float>>(any), model, options);
    require_finite(sr);
    write_lightfield(a.out, sr, a.bit_depth);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string ref, test, out;
};

int run_evaluate(const EvaluateArgs& a) {
  const LightField<float> ref = luma(read_regular_lightfield(a.ref));
  const LightField<float> test = luma(read_regular_lightfield(a.test));
  if (!ref.same_extents(test)) throw DataError("reference and test light fields differ in shape");
  const MetricReport report = evaluate(ref, test);
  write_json(a.out, to_json(report));
  std::printf("mean PSNR %.4f dB  mean SSIM %.6f  EPI PSNR %.4f dB  EPI SSIM %.6f\n", report.mean_psnr,
              report.mean_ssim, report.epi_psnr, report.epi_ssim);
  return kOk;
}

// ---------------------------------------------------------------------------

struct EpiArgs {
  std::string in, out, orientation = "h";
  std::vector<int> fixed;
};

int run_epi(const EpiArgs& a) {
  const LightField<float> lf = read_regular_lightfield(a.in);
  const EpiOrientation o = a.orientation == "h" ? EpiOrientation::Horizontal : EpiOrientation::Vertical;
  std::vector<Image<float>> planes;
  for (int c = 0; c < lf.channels(); ++c) planes.push_back(extract_epi(lf, o, a.fixed[0], a.fixed[1], c).samples);
  write_png(a.out + ".tmp.png", planes, 16);
  fs::rename(a.out + ".tmp.png", a.out);
  return kOk;
}

// ---------------------------------------------------------------------------

LightField<float> luma_of(const LightField<float>& lf) { return luma(lf); }
IrregularLightField<float> luma_of(const IrregularLightField<float>& lf) {
  if (lf.channels() == 1) return lf;
  IrregularLightField<float> out(lf.positions(), lf.height(), lf.width(), 1);
  for (int i = 0; i < lf.size(); ++i)
    out.view(i) = (65.481f * lf.view(i, 0) + 128.553f * lf.view(i, 1) + 24.966f * lf.view(i, 2) + 16.0f) / 255.0f;
  return out;
}
struct SelectArgs {
  std::string in, ckpt, out;
  std::vector<int> target;
  int k = 0;
};

int run_select_views(const SelectArgs& a) {
  const Model model = load_model(load_checkpoint(a.ckpt));
  if (!model.coarse.selector) throw DataError("checkpoint has no SAI selector");
  AnyLightField any = read_lightfield(a.in);
  ViewSet<float> views = std::visit([](const auto& lf) { return view_set(luma_of(lf)); }, any);
  const AngularPosition tp{a.target[0], a.target[1]};
  const int target = views.index_of(tp);
  if (a.k < 1 || a.k > views.size())
    throw DataError("k=" + std::to_string(a.k) + " outside [1," + std::to_string(views.size()) + "]");
  std::vector<int> all(static_cast<std::size_t>(views.size()));
  std::iota(all.begin(), all.end(), 0);
  const std::vector<double> scores =
      to_doubles(model.coarse.selector->score(views_tensor(views, {target}), views_tensor(views, all)));
  const std::vector<int> chosen = select_with_target(scores, target, a.k);

  int rows = 0, cols = 0;
  for (const auto& p : views.positions) {
    rows = std::max(rows, p.u + 1);
    cols = std::max(cols, p.v + 1);
  }
  nlohmann::json mask = nlohmann::json::array(), grid = nlohmann::json::array();
  for (int u = 0; u < rows; ++u) {
    nlohmann::json mrow = nlohmann::json::array(), srow = nlohmann::json::array();
    for (int v = 0; v < cols; ++v) {
      auto it = std::find(views.positions.begin(), views.positions.end(), AngularPosition{u, v});
      if (it == views.positions.end()) {
        mrow.push_back(false);
        srow.push_back(nullptr);
        continue;
      }
      const int i = static_cast<int>(it - views.positions.begin());
      mrow.push_back(std::find(chosen.begin(), chosen.end(), i) != chosen.end());
      srow.push_back(scores[static_cast<std::size_t>(i)]);
    }
    mask.push_back(mrow);
    grid.push_back(srow);
  }
  nlohmann::json selected = nlohmann::json::array();
  for (int i : chosen) selected.push_back({views.positions[static_cast<std::size_t>(i)].u, views.positions[static_cast<std::size_t>(i)].v});
  write_json(a.out, {{"target", {tp.u, tp.v}}, {"k", a.k}, {"selected", selected}, {"mask", mask}, {"scores", grid}});
  return kOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string base, out;
  double disparity = 0.0;
  std::vector<int> views;
  int height = 0, width = 0;
  int bit_depth = 16;
};

int run_synth(const SynthArgs& a) {
  const PngImage base = read_png(a.base);
  std::vector<LightField<float>> planes;
  for (const auto& plane : base.planes)
    planes.push_back(synthesize_lightfield(plane, a.disparity, a.views[0], a.views[1], a.height, a.width));
  const LightField<float>& first = planes.front();
  LightField<float> lf(first.angular_rows(), first.angular_cols(), first.height(), first.width(),
                       static_cast<int>(planes.size()));
  for (std::size_t c = 0; c < planes.size(); ++c)
    for (const auto& p : first.positions()) lf.set_sai(p, planes[c].sai(p), static_cast<int>(c));
  write_lightfield(a.out, lf, a.bit_depth);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light-field super-resolution toolkit"};
  app.require_subcommand(1);

  DegradeArgs degrade_args;
  auto* degrade = app.add_subcommand("degrade", "Bicubic-downscale every view of a light field");
  degrade->add_option("--in", degrade_args.in, "Input light-field directory")->required()->check(CLI::ExistingDirectory);
  degrade->add_option("--scale", degrade_args.scale, "Downscale factor")->required()->check(CLI::Range(2, 8));
  degrade->add_option("--out", degrade_args.out, "Output directory")->required();
  degrade->add_option("--bit-depth", degrade_args.bit_depth, "PNG bit depth (8 or 16)")->check(CLI::IsMember({8, 16}));

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train the coarse or refinement stage");
  train->add_option("--data", train_args.data, "HR light-field directories")->required()->check(CLI::ExistingDirectory);
  train->add_option("--stage", train_args.stage, "coarse | refine")->check(CLI::IsMember({"coarse", "refine"}));
  train->add_option("--coarse-ckpt", train_args.coarse_ckpt, "Trained coarse checkpoint (refine stage)");
  train->add_option("--out", train_args.out, "Output checkpoint")->required();
  train->add_option("--log", train_args.log, "Loss log CSV");
  train->add_option("--epochs", train_args.train.epochs, "Passes over the dataset");
  train->add_option("--lr", train_args.train.lr0, "Initial learning rate");
  train->add_option("--patch", train_args.train.patch, "LR patch side");
  train->add_option("--scale", train_args.model.coarse.scale, "Upscale factor")->check(CLI::Range(2, 8));
  train->add_option("--k-min", train_args.train.k_min, "Smallest sampled k (default p)");
  train->add_option("--k-max", train_args.train.k_max, "Largest sampled k (default all views)");
  train->add_flag("--patch-selector", train_args.train.patch_selector, "Disparity-aligned crops");
  train->add_option("--lambda-epi", train_args.train.lambda_epi, "Weight of the EPI-gradient loss");
  train->add_option("--seed", train_args.train.seed, "Random seed");
  train->add_option("--channels", train_args.model.coarse.channels, "Coarse feature channels");
  train->add_option("--selector-channels", train_args.model.coarse.selector_channels, "Selector feature channels");
  train->add_option("--refine-channels", train_args.model.refine.channels, "Refinement feature channels");
  train->add_option("--n1", train_args.model.coarse.n1);
  train->add_option("--n2", train_args.model.coarse.n2);
  train->add_option("--n3", train_args.model.coarse.n3);
  train->add_option("--n4", train_args.model.coarse.n4);
  train->add_option("--n5", train_args.model.refine.n5);
  train->add_option("-p,--pool", train_args.model.coarse.p, "Pooled slices in the fusion stage");
  train->add_flag("--no-selector", train_args.no_selector, "Use nearest views instead of the learned selector");
  train->add_flag("--quiet", train_args.quiet);

  SuperResolveArgs sr_args;
  auto* sr = app.add_subcommand("super-resolve", "Super-resolve a light field");
  sr->add_option("--in", sr_args.in, "LR light-field directory")->required()->check(CLI::ExistingDirectory);
  sr->add_option("--ckpt", sr_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sr->add_option("--scale", sr_args.scale, "Upscale factor")->required();
  sr->add_option("--k", sr_args.k, "Auxiliary views per target, the target included");
  sr->add_flag("--patch-selector", sr_args.patch_selector, "Disparity-aligned tiles");
  sr->add_option("--disparity", sr_args.disparity, "Directory of disp_UU_VV.lfd maps at input resolution");
  sr->add_flag("--coarse-only", sr_args.coarse_only, "Skip refinement (required for irregular input)");
  sr->add_option("--tile", sr_args.tile, "LR tile side")->check(CLI::PositiveNumber);
  sr->add_option("--margin", sr_args.margin, "LR tile context")->check(CLI::NonNegativeNumber);
  sr->add_option("--out", sr_args.out, "Output directory")->required();
  sr->add_option("--bit-depth", sr_args.bit_depth, "PNG bit depth (8 or 16)")->check(CLI::IsMember({8, 16}));

  EvaluateArgs eval_args;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "PSNR/SSIM report of a test light field against a reference");
  evaluate_cmd->add_option("--ref", eval_args.ref)->required()->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--test", eval_args.test)->required()->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--out", eval_args.out, "Report JSON")->required();

  EpiArgs epi_args;
  auto* epi = app.add_subcommand("epi", "Write one epipolar-plane image");
  epi->add_option("--in", epi_args.in)->required()->check(CLI::ExistingDirectory);
  epi->add_option("--orientation", epi_args.orientation, "h: fixed (y,v); v: fixed (x,u)")
      ->check(CLI::IsMember({"h", "v"}));
  epi->add_option("--fixed", epi_args.fixed, "Spatial then angular coordinate")->required()->expected(2);
  epi->add_option("--out", epi_args.out, "PNG file")->required();

  SelectArgs select_args;
  auto* select = app.add_subcommand("select-views", "Score auxiliary views for one target");
  select->add_option("--in", select_args.in)->required()->check(CLI::ExistingDirectory);
  select->add_option("--ckpt", select_args.ckpt)->required()->check(CLI::ExistingFile);
  select->add_option("--target", select_args.target, "u v")->required()->expected(2);
  select->add_option("--k", select_args.k, "Views to select, the target included")->required();
  select->add_option("--out", select_args.out, "JSON file")->required();

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Render a constant-disparity light field from one image");
  synth->add_option("--base", synth_args.base, "PNG image")->required()->check(CLI::ExistingFile);
  synth->add_option("--disparity", synth_args.disparity, "Pixels per angular step")->required();
  synth->add_option("--views", synth_args.views, "M N")->required()->expected(2);
  synth->add_option("--height", synth_args.height, "Output height (default: largest that fits)");
  synth->add_option("--width", synth_args.width, "Output width (default: largest that fits)");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--bit-depth", synth_args.bit_depth, "PNG bit depth (8 or 16)")->check(CLI::IsMember({8, 16}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*degrade) return run_degrade(degrade_args);
    if (*train) return run_train(train_args);
    if (*sr) return run_super_resolve(sr_args);
    if (*evaluate_cmd) return run_evaluate(eval_args);
    if (*epi) return run_epi(epi_args);
    if (*select) return run_select_views(select_args);
    if (*synth) return run_synth(synth_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
