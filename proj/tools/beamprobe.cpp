// beamprobe: dataset generation, training, evaluation and reporting.

#include "beamprobe/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::string> preset;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON run config (keys override the preset)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed; overrides the config");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--preset", o.preset, "base preset: full or desk");
}

beamprobe::RunContext make_context(const CommonOptions& o) {
  beamprobe::Json j = o.config.empty() ? beamprobe::Json::object() : beamprobe::read_json_file(o.config);
  beamprobe::RunContext ctx;
  ctx.config = beamprobe::config_from_json(j, o.preset);
  if (o.seed) ctx.config.seed = *o.seed;
  ctx.out_dir = o.out;
  ctx.log = &std::cout;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned probing codebook beam alignment simulator"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, eval_o, base_o, report_o;
  auto* gen = app.add_subcommand("gen", "generate a channel dataset");
  auto* train = app.add_subcommand("train", "train one model per sweep.num_probing value");
  auto* eval = app.add_subcommand("eval", "evaluate all strategies on the test split");
  auto* base = app.add_subcommand("baseline", "evaluate the non-learned strategies on the test split");
  auto* report = app.add_subcommand("report", "merge results files into curve tables");
  add_common(gen, gen_o);
  add_common(train, train_o);
  add_common(eval, eval_o);
  add_common(base, base_o);
  add_common(report, report_o);
  std::vector<std::string> report_inputs;
  report->add_option("results", report_inputs, "results JSON files")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      beamprobe::cmd_gen(make_context(gen_o));
    } else if (train->parsed()) {
      beamprobe::cmd_train(make_context(train_o));
    } else if (eval->parsed()) {
      beamprobe::run_evaluation(make_context(eval_o), true);
    } else if (base->parsed()) {
      beamprobe::run_evaluation(make_context(base_o), false);
    } else if (report->parsed()) {
      auto ctx = make_context(report_o);
      std::vector<std::filesystem::path> inputs(report_inputs.begin(), report_inputs.end());
      for (const auto& p : ctx.config.inputs.results) inputs.emplace_back(p);
      beamprobe::cmd_report(ctx, inputs);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
