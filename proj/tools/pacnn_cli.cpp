// Command-line front end: dataset synthesis, GT generation, perspective
// fitting, two-phase training, evaluation, single-image prediction,
// heatmap export and the gradient-check suites.
//
// Exit codes: 0 success, 1 structured failure (I/O, bad data, failed
// check), 2 usage error.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pacnn/config.hpp"
#include "pacnn/diagnostics.hpp"
#include "pacnn/errors.hpp"
#include "pacnn/gt_maps.hpp"
#include "pacnn/io.hpp"
#include "pacnn/metrics.hpp"
#include "pacnn/model.hpp"
#include "pacnn/pipeline.hpp"
#include "pacnn/scene.hpp"
#include "pacnn/threads.hpp"
#include "pacnn/training.hpp"

namespace {

using nlohmann::json;
using namespace pacnn;

KeyValueConfig load_config(const std::string& path) {
  if (path.empty()) return KeyValueConfig();
  return KeyValueConfig::parse_file(path);
}

CombineMode parse_mode(const std::string& mode) {
  if (mode == "pa") return CombineMode::kPerspective;
  if (mode == "average") return CombineMode::kAverage;
  throw ConfigError("mode must be 'pa' or 'average', got '" + mode + "'");
}

int cmd_gen_data(const std::string& out, int count, std::uint64_t seed,
                 const std::string& config, const std::string& prefix) {
  SceneConfig sc = SceneConfig::from_config(load_config(config));
  generate_dataset(out, sc, count, seed, prefix);
  std::cout << "wrote " << count << " scenes to " << out << "\n";
  return 0;
}

int cmd_gen_gt(const std::string& data, const std::string& config) {
  GtGenConfig gc = GtGenConfig::from_config(load_config(config));
  GtGenResult r = generate_gt(data, gc);
  std::cout << "scenes: " << r.scenes << "\n";
  std::cout << "p_max: " << r.p_max << "\n";
  return 0;
}

int cmd_fit_perspective(const std::string& annotations, const std::string& id,
                        const std::string& out, const std::string& config) {
  const std::vector<AnnotatedScene> scenes = read_annotations(annotations);
  if (scenes.empty()) throw InsufficientDataError("no scenes in " + annotations);
  const AnnotatedScene* scene = &scenes.front();
  if (!id.empty()) {
    scene = nullptr;
    for (const AnnotatedScene& s : scenes) {
      if (s.id == id) {
        scene = &s;
        break;
      }
    }
    if (scene == nullptr) throw IoError("scene id '" + id + "' not found");
  }
  GtGenConfig gc = GtGenConfig::from_config(load_config(config));
  const TanhFitParams fit = fit_scene_profile(*scene, gc);
  if (!out.empty()) {
    write_map(out, render_perspective_map(fit, scene->width, scene->height));
  }
  std::cout << "a=" << fit.a << " b=" << fit.b << " c=" << fit.c
            << " residual_rms=" << fit.residual_rms << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& out,
              const std::string& mode, const std::string& config,
              std::int64_t seed, bool quiet) {
  const KeyValueConfig cfg = load_config(config);
  ModelConfig mc = ModelConfig::from_config(cfg);
  TrainConfig tc = TrainConfig::from_config(cfg);
  if (seed >= 0) tc.seed = static_cast<std::uint64_t>(seed);
  GtGenConfig gc = GtGenConfig::from_config(cfg);
  const bool pa = parse_mode(mode) == CombineMode::kPerspective;
  PipelineResult r = train_pipeline(data, mc, tc, gc.kernel, out, pa,
                                    quiet ? nullptr : &std::cout);
  json rec = {{"command", "train"},
              {"mode", mode},
              {"seed", tc.seed},
              {"phase1_final_loss", r.phase1.final_loss},
              {"phase2_final_loss", r.phase2.final_loss},
              {"phase1_checkpoint", r.phase1_checkpoint},
              {"final_checkpoint", r.final_checkpoint}};
  std::cout << rec.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& data, const std::string& checkpoint,
             const std::string& mode, const std::string& config,
             bool per_scene) {
  ModelConfig mc = ModelConfig::from_config(load_config(config));
  std::vector<SceneCount> counts;
  CountMetrics m = evaluate_dataset(data, mc, checkpoint, parse_mode(mode),
                                    &counts);
  if (per_scene) {
    for (const SceneCount& c : counts) {
      std::cout << c.id << " predicted=" << c.predicted
                << " actual=" << c.actual << "\n";
    }
  }
  std::cout << "MAE: " << m.mae << "\n";
  std::cout << "MSE: " << m.mse << "\n";
  json rec = {{"command", "eval"}, {"mae", m.mae},        {"mse", m.mse},
              {"n", m.n},          {"checkpoint", checkpoint}, {"mode", mode}};
  std::cout << rec.dump() << "\n";
  return 0;
}

int cmd_predict(const std::string& image, const std::string& checkpoint,
                const std::string& mode, const std::string& out,
                const std::string& config) {
  ModelConfig mc = ModelConfig::from_config(load_config(config));
  const ParamStore stored = read_checkpoint(checkpoint);
  Model model(mc);
  apply_checkpoint(model, stored);
  const NormScales scales = norm_scales_from(stored);
  const ValueMap img = read_map(image);
  MultiScaleOutputs o = model.forward(img, parse_mode(mode));
  const double count = count_from_density(o.d_e, scales.density_scale);
  if (!out.empty()) {
    ValueMap density = o.d_e;
    for (double& v : density.values) v /= scales.density_scale;
    write_map(out, density);
  }
  std::cout << "count: " << count << "\n";
  json rec = {{"command", "predict"}, {"image", image}, {"count", count}};
  std::cout << rec.dump() << "\n";
  return 0;
}

int cmd_export_heatmap(const std::string& in, const std::string& out) {
  write_pgm(out, read_map(in));
  std::cout << "wrote " << out << "\n";
  return 0;
}

void print_suite(const GradSuiteResult& r) {
  for (const GradSuiteCase& c : r.cases) {
    std::cout << "  " << (c.passed ? "ok  " : "FAIL") << " " << c.name
              << " max_rel_err=" << c.max_rel_err << "\n";
  }
  std::cout << r.suite << ": " << (r.passed ? "pass" : "FAIL")
            << " (tolerance " << r.tolerance << ")\n";
}

int cmd_grad_check(const std::string& suite, std::uint64_t seed,
                   int instances) {
  bool all = true;
  if (suite == "all" || suite == "pa") {
    GradSuiteResult r = run_pa_grad_suite(instances, seed);
    print_suite(r);
    all = all && r.passed;
  }
  if (suite == "all" || suite == "loss") {
    GradSuiteResult r = run_loss_grad_suite(instances, seed);
    print_suite(r);
    all = all && r.passed;
  }
  if (suite == "all" || suite == "model") {
    std::size_t params = 0;
    GradSuiteResult r = run_model_grad_suite(seed, 1e-3, &params);
    print_suite(r);
    std::cout << "  model parameters: " << params << "\n";
    all = all && r.passed;
  }
  std::cout << (all ? "all gradient checks passed"
                    : "gradient checks FAILED")
            << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  init_threads_from_env();

  CLI::App app{"Perspective-aware crowd density estimation toolkit"};
  app.require_subcommand(1);

  // Shared option storage; each subcommand binds the subset it uses.
  std::string out, data, config, prefix = "scene", annotations, id, mode = "pa";
  std::string checkpoint, image, in_path, suite = "all";
  int count = 100, instances = 12;
  std::int64_t seed_override = -1;
  std::uint64_t seed = 1;
  bool per_scene = false, quiet = false;

  CLI::App* gen_data = app.add_subcommand(
      "gen-data", "Generate a synthetic annotated dataset");
  gen_data->add_option("--out", out, "Dataset directory")->required();
  gen_data->add_option("--count", count, "Number of scenes");
  gen_data->add_option("--seed", seed, "Random seed");
  gen_data->add_option("--config", config, "Scene config file (scene.* keys)");
  gen_data->add_option("--prefix", prefix, "Scene id prefix");

  CLI::App* gen_gt = app.add_subcommand(
      "gen-gt", "Render density and perspective ground truth for a dataset");
  gen_gt->add_option("--data", data, "Dataset directory")->required();
  gen_gt->add_option("--config", config, "GT config file (gt.*, fit.*, kernel.* keys)");
  gen_gt->add_option("--seed", seed, "Accepted for uniformity; unused");

  CLI::App* fitp = app.add_subcommand(
      "fit-perspective", "Fit a tanh perspective profile to one scene");
  fitp->add_option("--annotations", annotations, "Annotation jsonl file")
      ->required();
  fitp->add_option("--id", id, "Scene id (default: first scene)");
  fitp->add_option("--out", out, "Write the rendered perspective map here");
  fitp->add_option("--config", config, "GT config file (gt.*, fit.*, kernel.* keys)");
  fitp->add_option("--seed", seed, "Accepted for uniformity; unused");

  CLI::App* train = app.add_subcommand(
      "train", "Two-phase training over a prepared dataset");
  train->add_option("--data", data, "Dataset directory (with gt/)")
      ->required();
  train->add_option("--out", out, "Run directory for checkpoints and log")
      ->required();
  train->add_option("--mode", mode,
                    "Final combination: 'pa' (perspective-weighted) or "
                    "'average'")
      ->check(CLI::IsMember({"pa", "average"}));
  train->add_option("--config", config,
                    "Config file (model.*, train.*, loss.*, gt.* keys)");
  train->add_option("--seed", seed_override,
                    "Random seed (overrides train.seed from the config)");
  train->add_flag("--quiet", quiet, "Suppress per-epoch progress lines");

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Whole-image MAE / MSE of a checkpoint over a dataset");
  eval_cmd->add_option("--data", data, "Dataset directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--mode", mode, "Combination mode")
      ->check(CLI::IsMember({"pa", "average"}));
  eval_cmd->add_option("--config", config, "Config file (model.* keys)");
  eval_cmd->add_flag("--per-scene", per_scene, "Print per-scene counts");
  eval_cmd->add_option("--seed", seed, "Accepted for uniformity; unused");

  CLI::App* predict = app.add_subcommand(
      "predict", "Predicted count (and optional density map) for one image");
  predict->add_option("--image", image, "Input image map file")->required();
  predict->add_option("--checkpoint", checkpoint, "Checkpoint file")
      ->required();
  predict->add_option("--mode", mode, "Combination mode")
      ->check(CLI::IsMember({"pa", "average"}));
  predict->add_option("--out", out,
                      "Write the count-calibrated density map here");
  predict->add_option("--config", config, "Config file (model.* keys)");
  predict->add_option("--seed", seed, "Accepted for uniformity; unused");

  CLI::App* heatmap = app.add_subcommand(
      "export-heatmap", "Convert a map file to a normalized 8-bit PGM");
  heatmap->add_option("--in", in_path, "Input map file")->required();
  heatmap->add_option("--out", out, "Output PGM path")->required();
  heatmap->add_option("--seed", seed, "Accepted for uniformity; unused");

  CLI::App* gradcheck = app.add_subcommand(
      "grad-check", "Finite-difference gradient check suites");
  gradcheck->add_option("--suite", suite, "all, pa, loss or model")
      ->check(CLI::IsMember({"all", "pa", "loss", "model"}));
  gradcheck->add_option("--seed", seed, "Random seed");
  gradcheck->add_option("--instances", instances,
                        "Instances per randomized suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen_data->parsed())
      return cmd_gen_data(out, count, seed, config, prefix);
    if (gen_gt->parsed()) return cmd_gen_gt(data, config);
    if (fitp->parsed()) return cmd_fit_perspective(annotations, id, out, config);
    if (train->parsed())
      return cmd_train(data, out, mode, config, seed_override, quiet);
    if (eval_cmd->parsed())
      return cmd_eval(data, checkpoint, mode, config, per_scene);
    if (predict->parsed())
      return cmd_predict(image, checkpoint, mode, out, config);
    if (heatmap->parsed()) return cmd_export_heatmap(in_path, out);
    if (gradcheck->parsed()) return cmd_grad_check(suite, seed, instances);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
