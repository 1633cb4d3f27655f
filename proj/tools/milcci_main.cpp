#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "milcci/error.hpp"
#include "milcci/eval.hpp"
#include "milcci/fit.hpp"
#include "milcci/graph.hpp"
#include "milcci/io.hpp"
#include "milcci/render.hpp"
#include "milcci/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace milcci;

namespace {

using Clock = std::chrono::steady_clock;

struct RunContext {
  std::vector<std::string> arguments;
  std::uint64_t seed = 0;
  Clock::time_point start = Clock::now();
};

double elapsed_seconds(const RunContext& run) {
  return std::chrono::duration<double>(Clock::now() - run.start).count();
}

// Reproducibility sidecar, one per invocation, in the run's output directory.
void write_run_json(const std::string& dir, const RunContext& run) {
  json j;
  j["arguments"] = run.arguments;
  j["seed"] = run.seed;
  j["versions"] = {{"milcci", kVersion}, {"format_version", kFormatVersion}};
  j["wall_time_seconds"] = elapsed_seconds(run);
  write_text_atomic((fs::path(dir) / "run.json").string(), j.dump(2) + "\n");
}

std::string parent_dir(const std::string& file) {
  const std::string p = fs::path(file).parent_path().string();
  return p.empty() ? std::string(".") : p;
}

json metrics_or_empty(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (...) {
    return json::object();
  }
}

int cmd_generate(const std::string& preset, std::uint64_t seed, const std::string& out,
                 RunContext& run) {
  SynthParams params = preset == "desk" ? desk_params() : full_params();
  params.seed = seed;
  auto [data, truth] = generate(params);
  save_dataset(out, data);

  ModelState truth_state;
  truth_state.components = truth.components;
  truth_state.groups = truth.groups;
  truth_state.traces = truth.traces;
  truth_state.converged = true;
  save_model((fs::path(out) / "truth").string(), truth_state, data);

  write_run_json(out, run);
  std::printf("wrote %s: %zu trials, %zu channels, %zu time points (+ truth archive)\n",
              out.c_str(), data.trials.size(), data.n_channels, params.n_timepoints);
  return 0;
}

int cmd_graph(const std::string& data_dir, const std::string& out, RunContext& run) {
  const TrialSet data = load_dataset(data_dir);
  if (!out.empty()) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw_io("cannot create directory '" + out + "': " + ec.message());
  }
  for (const CategorySpec& cat : data.categories) {
    const SimilarityGraph g = build_graph(cat);
    if (!out.empty()) {
      write_matrix_csv((fs::path(out) / ("lambda_" + sanitize_token(cat.name) + ".csv")).string(),
                       g.weights);
      continue;
    }
    std::printf("# %s\n", cat.name.c_str());
    for (std::size_t i = 0; i < g.weights.rows(); ++i) {
      for (std::size_t j = 0; j < g.weights.cols(); ++j)
        std::printf(j ? ",%.17g" : "%.17g", g.weights(i, j));
      std::printf("\n");
    }
  }
  write_run_json(out.empty() ? "." : out, run);
  return 0;
}

int cmd_fit(const std::string& data_dir, const std::string& out, const std::string& config_path,
            RunContext& run) {
  const std::string config_text = read_text_file(config_path);
  const Hyperparams hyper = parse_fit_config_text(config_text, config_path);
  run.seed = hyper.seed;
  const TrialSet data = load_dataset(data_dir);

  FitReport report = fit(data, hyper, [](std::size_t it, double obj, double secs) {
    std::fprintf(stderr, "  iter %3zu  objective %.6e  (%.2fs)\n", it, obj, secs);
  });

  save_model(out, report.state, data);
  write_text_atomic((fs::path(out) / "config.json").string(), config_text);

  const ReconstructionMetrics recon = reconstruction_metrics(report.state, data);
  json metrics;
  metrics["converged"] = report.state.converged;
  metrics["aborted"] = report.aborted;
  metrics["iterations"] = report.iters;
  metrics["final_objective"] = report.final_objective;
  metrics["noise_variance"] = report.state.noise_variance;
  metrics["pooled_mse"] = recon.pooled_mse;
  metrics["pooled_relative"] = recon.pooled_relative;
  std::vector<std::string> warnings = report.warnings;
  warnings.insert(warnings.end(), report.state.warnings.begin(), report.state.warnings.end());
  metrics["warnings"] = warnings;
  write_text_atomic((fs::path(out) / "metrics.json").string(), metrics.dump(2) + "\n");
  write_run_json(out, run);

  if (report.aborted) {
    std::fprintf(stderr, "error[numeric]: fit aborted after %zu iterations; last stable state "
                         "saved to %s\n",
                 report.iters, out.c_str());
    return 3;
  }
  std::printf("%s after %zu iterations, objective %.6e, noise variance %.6e\n",
              report.state.converged ? "converged" : "stopped", report.iters,
              report.final_objective, report.state.noise_variance);
  return 0;
}

int cmd_eval(const std::string& model_dir, const std::string& truth_dir,
             const std::string& data_dir, const std::string& df_mode, RunContext& run) {
  const LoadedModel model = load_model(model_dir);

  // Accept either a truth archive directly or a generate output directory
  // that carries one under truth/.
  std::string resolved = truth_dir;
  if (!fs::exists(fs::path(resolved) / "model.json") &&
      fs::exists(fs::path(resolved) / "truth" / "model.json"))
    resolved = (fs::path(resolved) / "truth").string();
  const LoadedModel truth_model = load_model(resolved);

  GroundTruth truth;
  truth.components = truth_model.state.components;
  truth.groups = truth_model.state.groups;
  truth.traces = truth_model.state.traces;

  const MatchResult match = match_and_score(model.state, truth);

  const std::string metrics_path = (fs::path(model_dir) / "metrics.json").string();
  json metrics = metrics_or_empty(metrics_path);
  metrics["mean_component_correlation"] = match.mean_component_correlation;
  metrics["mean_trace_correlation"] = match.mean_trace_correlation;
  metrics["component_correlations"] = match.component_correlations;
  metrics["trace_correlations"] = match.trace_correlations;
  metrics["permutation"] = match.permutation;
  if (!match.warnings.empty()) metrics["match_warnings"] = match.warnings;

  if (!data_dir.empty()) {
    const TrialSet data = load_dataset(data_dir);
    const ReconstructionMetrics recon = reconstruction_metrics(model.state, data);
    metrics["pooled_mse"] = recon.pooled_mse;
    metrics["pooled_relative"] = recon.pooled_relative;
    const DfMode mode =
        df_mode == "plus-traces" ? DfMode::components_plus_traces : DfMode::components_nnz;
    const InfoCriteria ic = information_criteria(model.state, data, mode);
    metrics["information_criteria"] = {{"loglik", ic.loglik}, {"aic", ic.aic}, {"bic", ic.bic},
                                       {"hqc", ic.hqc},       {"k", ic.k},     {"n", ic.n}};
  }

  write_text_atomic(metrics_path, metrics.dump(2) + "\n");
  write_run_json(model_dir, run);
  std::printf("%s\n", metrics.dump(2).c_str());
  return 0;
}

int cmd_validate(const std::string& model_dir, const std::string& data_dir, std::size_t n_perm,
                 std::size_t n_coalitions, std::uint64_t seed, std::string out,
                 RunContext& run) {
  const LoadedModel model = load_model(model_dir);
  const TrialSet data = load_dataset(data_dir);
  const ValidationReport report = validate_model(model.state, data, n_perm, n_coalitions, seed);

  json j;
  j["loo"] = {{"baseline_mse", report.loo.baseline_mse},
              {"channel_mse", report.loo.channel_mse},
              {"contribution_pct", report.loo.contribution_pct}};
  j["shapley"] = {{"values", report.shapley.values}, {"exhaustive", report.shapley.exhaustive}};
  j["permutation"] = {{"original_mse", report.permutation.original_mse},
                      {"p_shuffle_rows", report.permutation.p_shuffle_rows},
                      {"p_random_control", report.permutation.p_random_control},
                      {"p_shuffle_each_component", report.permutation.p_shuffle_each_component},
                      {"p_per_component", report.permutation.p_per_component}};

  if (out.empty()) out = (fs::path(model_dir) / "validation.json").string();
  write_text_atomic(out, j.dump(2) + "\n");
  write_run_json(parent_dir(out), run);
  std::printf("p_shuffle_rows %.4g  p_random_control %.4g  p_shuffle_each_component %.4g\n",
              report.permutation.p_shuffle_rows, report.permutation.p_random_control,
              report.permutation.p_shuffle_each_component);
  return 0;
}

int cmd_render(const std::string& model_dir, std::string out, RunContext& run) {
  const LoadedModel model = load_model(model_dir);
  const Matrix* example = nullptr;
  std::string title;
  if (!model.state.traces.phi.empty()) {
    example = &model.state.traces.phi.front();
    title = "traces, trial " +
            (model.trial_ids.empty() ? std::string("0") : model.trial_ids.front());
  }
  const std::string svg = render_model_svg(model.state, model.categories, example, title);
  if (out.empty()) out = (fs::path(model_dir) / "render.svg").string();
  write_text_atomic(out, svg);
  write_run_json(parent_dir(out), run);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunContext run;
  for (int i = 0; i < argc; ++i) run.arguments.emplace_back(argv[i]);

  CLI::App app{"sparse multi-label component inference"};
  app.require_subcommand(1);

  std::string preset = "full", out, data_dir, config_path, model_dir, truth_dir;
  std::string df_mode = "nnz";
  std::uint64_t seed = 0;
  std::size_t n_perm = 200, n_coalitions = 256;

  CLI::App* gen = app.add_subcommand("generate", "synthesize a benchmark dataset");
  gen->add_option("--preset", preset, "full or desk scale")
      ->check(CLI::IsMember({"full", "desk"}));
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out, "output directory")->required();

  CLI::App* gr = app.add_subcommand("graph", "dump label-similarity matrices");
  gr->add_option("--data", data_dir, "dataset directory")->required();
  gr->add_option("--out", out, "output directory (default: stdout)");

  CLI::App* ft = app.add_subcommand("fit", "fit the model to a dataset");
  ft->add_option("--data", data_dir, "dataset directory")->required();
  ft->add_option("--out", out, "model output directory")->required();
  ft->add_option("--config", config_path, "hyperparameter JSON")->required();

  CLI::App* ev = app.add_subcommand("eval", "score a model against ground truth");
  ev->add_option("--model", model_dir, "fitted model directory")->required();
  ev->add_option("--truth", truth_dir, "truth archive or generate output directory")->required();
  ev->add_option("--data", data_dir, "dataset directory (adds reconstruction metrics)");
  ev->add_option("--df-mode", df_mode, "degrees of freedom: nnz or plus-traces")
      ->check(CLI::IsMember({"nnz", "plus-traces"}));

  CLI::App* va = app.add_subcommand("validate", "importance and permutation battery");
  va->add_option("--model", model_dir, "fitted model directory")->required();
  va->add_option("--data", data_dir, "dataset directory")->required();
  va->add_option("--n-perm", n_perm, "permutations per null")
      ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));
  va->add_option("--n-coalitions", n_coalitions, "coalition budget for importance sampling");
  va->add_option("--seed", seed, "resampling seed");
  va->add_option("--out", out, "report path (default: <model>/validation.json)");

  CLI::App* re = app.add_subcommand("render", "static SVG report of a model");
  re->add_option("--model", model_dir, "fitted model directory")->required();
  re->add_option("--out", out, "output path (default: <model>/render.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::fprintf(stderr, "error[param]: %s\n", e.what());
    return 2;
  }

  try {
    run.seed = seed;
    if (gen->parsed()) return cmd_generate(preset, seed, out, run);
    if (gr->parsed()) return cmd_graph(data_dir, out, run);
    if (ft->parsed()) return cmd_fit(data_dir, out, config_path, run);
    if (ev->parsed()) return cmd_eval(model_dir, truth_dir, data_dir, df_mode, run);
    if (va->parsed()) return cmd_validate(model_dir, data_dir, n_perm, n_coalitions, seed, out, run);
    if (re->parsed()) return cmd_render(model_dir, out, run);
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", e.kind_name(), e.what());
    switch (e.kind()) {
      case ErrorKind::schema:
      case ErrorKind::param: return 2;
      case ErrorKind::numeric: return 3;
      case ErrorKind::io: return 4;
    }
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[io]: %s\n", e.what());
    return 4;
  }
  return 0;
}
