#include <iostream>

#include <CLI11.hpp>

#include "mousedyn/cli.hpp"

int main(int argc, char** argv) {
  using namespace mousedyn::cli;

  CLI::App app{"Mouse-dynamics continuous authentication toolkit"};
  app.require_subcommand(1);

  ParseArgs parse_args;
  auto* parse = app.add_subcommand("parse", "Validate and deduplicate session logs");
  parse->add_option("input_dir", parse_args.input_dir, "Directory with one session log per user")->required();
  parse->add_option("-o,--output", parse_args.output_dir, "Write cleaned logs here");
  parse->add_option("--max-coordinate", parse_args.max_coordinate, "Largest accepted x/y");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate synthetic session logs");
  synth->add_option("-u,--users", synth_args.users, "Number of users")->check(CLI::Range(1, 1000));
  synth->add_option("-d,--duration", synth_args.duration, "Seconds per session")->check(CLI::PositiveNumber);
  synth->add_option("-s,--seed", synth_args.seed, "Generator seed");
  synth->add_option("-o,--output", synth_args.output_dir, "Output directory")->required();

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the full pipeline and write reports");
  run->add_option("-c,--config", run_args.config_file, "key=value configuration file");
  run->add_option("--set", run_args.overrides, "Override a setting, e.g. --set n_trees=50");
  run->add_option("-o,--output", run_args.output_dir, "Output directory");

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Stream a session through a user's model");
  score->add_option("model", score_args.model_file, "Model file written by 'run'")->required();
  score->add_option("log", score_args.log_file, "Session log to score")->required();
  score->add_option("-t,--threshold", score_args.threshold, "Decision threshold in [0,1]");
  score->add_option("--sequence-length", score_args.sequence_length, "Events per action");
  score->add_option("--stride", score_args.stride, "Step between action starts");

  CLI11_PARSE(app, argc, argv);

  if (*parse) return cmd_parse(parse_args, std::cout, std::cerr);
  if (*synth) return cmd_synth(synth_args, std::cout, std::cerr);
  if (*run) return cmd_run(run_args, std::cout, std::cerr);
  if (*score) return cmd_score(score_args, std::cout, std::cerr);
  return 1;
}
