// Command-line entry point: one static binary with subcommands for dataset
// curation, confidence scoring, synthetic data, training, evaluation, and
// gradient checking. Every run is a pure function of (config, input files,
// seed); a resolved config snapshot lands in each output directory.
//
// Exit codes: 0 success, 1 usage, 2 bad configuration, 3 missing or
// unreadable files, 4 broken data contract, 5 numeric failure. Errors emit a
// single machine-readable JSON line on stderr.

#include <cinttypes>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lim/commands.hpp"
#include "lim/error.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::string out;
  std::string data;
  std::string sources;
  std::string model;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
};

// Shared flags; `need_out` marks subcommands that create a run directory.
void add_common_options(CLI::App* cmd, CliArgs* args, bool need_out) {
  cmd->add_option("--config", args->config_path, "JSON config file (defaults apply otherwise)");
  CLI::Option* out = cmd->add_option("--out", args->out, "Output directory for this run");
  if (need_out) out->required();
  cmd->add_option("--seed", args->seed, "Override the config seed");
  cmd->add_option("--data", args->data, "Dataset directory (sets paths.data_dir)");
  cmd->add_option("--sources", args->sources, "Raw source directory (sets paths.sources_dir)");
  cmd->add_option("--model", args->model, "Checkpoint prefix (sets paths.model_prefix)");
  cmd->add_option("--set", args->overrides,
                  "Override one config key, e.g. --set optim.base_lr=1e-3 (repeatable; "
                  "flags win over the config file)");
}

lim::RunConfig resolve_config(const CLI::App& cmd, const CliArgs& args) {
  lim::RunConfig config;
  if (!args.config_path.empty()) config = lim::read_config_file(args.config_path);
  for (const std::string& assignment : args.overrides) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw lim::ConfigError("override must look like key=value, got \"" + assignment + "\"");
    }
    lim::apply_override(config, assignment.substr(0, eq), assignment.substr(eq + 1));
  }
  if (cmd.count("--seed") > 0) config.seed = args.seed;
  if (!args.data.empty()) config.paths.data_dir = args.data;
  if (!args.sources.empty()) config.paths.sources_dir = args.sources;
  if (!args.model.empty()) config.paths.model_prefix = args.model;
  lim::validate_config(config);
  return config;
}

const char* error_kind(const std::exception& error) {
  if (dynamic_cast<const lim::ConfigError*>(&error)) return "config";
  if (dynamic_cast<const lim::IoError*>(&error)) return "io";
  if (dynamic_cast<const lim::NumericError*>(&error)) return "numeric";
  if (dynamic_cast<const lim::ShapeError*>(&error)) return "shape";
  if (dynamic_cast<const lim::DomainError*>(&error)) return "domain";
  if (dynamic_cast<const lim::DegenerateInputError*>(&error)) return "degenerate_input";
  if (dynamic_cast<const lim::VocabularyError*>(&error)) return "vocabulary";
  if (dynamic_cast<const lim::ContractError*>(&error)) return "contract";
  if (dynamic_cast<const lim::StandardizationError*>(&error)) return "standardization";
  if (dynamic_cast<const lim::Error*>(&error)) return "error";
  return "internal";
}

int report_error(const std::exception& error) {
  const int code = lim::error_exit_code(error);
  nlohmann::json line;
  line["error"] = {{"code", code}, {"kind", error_kind(error)}, {"message", error.what()}};
  std::fprintf(stderr, "%s\n", line.dump().c_str());
  return code;
}

void print_report(const char* name, const lim::EvalReport& report, const std::string& out,
                  const char* file) {
  std::printf("%s: accuracy %.4f, macro F1 %.4f -> %s/%s\n", name, report.scores.accuracy,
              report.scores.macro_f1, out.c_str(), file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive video-text alignment toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lim 0.1.0");

  CliArgs args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  add_common_options(synth, &args, /*need_out=*/true);
  CLI::App* prep = app.add_subcommand("prep", "Curate raw sources into a clip manifest");
  add_common_options(prep, &args, /*need_out=*/true);
  CLI::App* confidence =
      app.add_subcommand("confidence", "Score caption reliability into the manifest");
  add_common_options(confidence, &args, /*need_out=*/false);
  CLI::App* train = app.add_subcommand("train", "Train the dual encoder on a dataset");
  add_common_options(train, &args, /*need_out=*/true);
  CLI::App* eval_zeroshot =
      app.add_subcommand("eval-zeroshot", "Prompt-based zero-shot classification");
  add_common_options(eval_zeroshot, &args, /*need_out=*/true);
  CLI::App* eval_linear =
      app.add_subcommand("eval-linear", "Linear probe on frozen pooled features");
  add_common_options(eval_linear, &args, /*need_out=*/true);
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Audit analytic gradients against central differences");
  add_common_options(gradcheck, &args, /*need_out=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      const lim::RunConfig config = resolve_config(*synth, args);
      const lim::SynthSummary s = lim::cmd_synth(config, args.out);
      std::printf("synth: %zu clips (%zu corrupted captions) -> %s\n", s.clips, s.corrupted,
                  s.data_dir.c_str());
    } else if (prep->parsed()) {
      const lim::RunConfig config = resolve_config(*prep, args);
      const lim::PrepSummary s = lim::cmd_prep(config, args.out);
      std::printf("prep: %zu records (%zu considered, %zu blurred, %zu caption failures) -> %s\n",
                  s.records, s.clips_considered, s.pruned_blurred, s.caption_failures,
                  s.manifest_path.c_str());
    } else if (confidence->parsed()) {
      const lim::RunConfig config = resolve_config(*confidence, args);
      if (config.paths.data_dir.empty()) {
        throw lim::ConfigError("confidence needs --data or paths.data_dir");
      }
      const lim::ConfidenceSummary s = lim::cmd_confidence(config, config.paths.data_dir);
      std::printf("confidence: scored %zu captions, mean %.6f -> %s/manifest.jsonl\n", s.scored,
                  s.mean_confidence, config.paths.data_dir.c_str());
    } else if (train->parsed()) {
      const lim::RunConfig config = resolve_config(*train, args);
      const lim::TrainSummary s = lim::cmd_train(config, args.out);
      const double final_loss = s.result.log.empty() ? 0.0 : s.result.log.back().loss;
      std::printf("train: %d steps, final loss %.6f, model -> %s\n", s.result.steps, final_loss,
                  s.model_prefix.c_str());
    } else if (eval_zeroshot->parsed()) {
      const lim::RunConfig config = resolve_config(*eval_zeroshot, args);
      print_report("eval-zeroshot", lim::cmd_eval_zeroshot(config, args.out), args.out,
                   "results_zeroshot.json");
    } else if (eval_linear->parsed()) {
      const lim::RunConfig config = resolve_config(*eval_linear, args);
      print_report("eval-linear", lim::cmd_eval_linear(config, args.out), args.out,
                   "results_linear.json");
    } else if (gradcheck->parsed()) {
      const lim::RunConfig config = resolve_config(*gradcheck, args);
      const lim::GradCheckSummary s = lim::cmd_gradcheck(config);
      std::printf("gradcheck: max relative error %.3e over %zu coordinates (threshold %.1e)\n",
                  s.report.max_rel_error, s.report.coords_checked, s.threshold);
      if (!s.passed) {
        throw lim::NumericError("gradient check failed: max relative error " +
                                std::to_string(s.report.max_rel_error) + " exceeds threshold");
      }
    }
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return 0;
}
