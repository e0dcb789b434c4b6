#include "protomatch/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
  protomatch::CliOptions opt;
  CLI::App app{"protomatch: semi-supervised multi-domain EEG training harness"};
  app.require_subcommand(1);

  std::string ablations;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "config file");
    sub->add_option("--seed", opt.seed, "seed override");
  };
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  common(synth);
  synth->add_option("--out", opt.out, "output CSV path");

  auto* train = app.add_subcommand("train", "run LOSO training");
  common(train);
  train->add_option("--out", opt.out, "output directory");
  train->add_option("--ablation", ablations, "comma-separated ablation flags");
  train->add_option("--folds-parallel", opt.folds_parallel, "concurrent folds");
  train->add_option("--target-subject", opt.target_subject, "train a single fold");
  train->add_option("--split-target-k", opt.split_target_k, "adapt on the first K target trials");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad->add_option("--seed", opt.seed, "first seed of five");
  grad->add_flag("--inject-fault", opt.inject_fault, "negate one analytic gradient");

  auto* report = app.add_subcommand("report", "summarize run directories");
  report->add_option("runs", opt.run_dirs, "run directories")->required();

  CLI11_PARSE(app, argc, argv);

  if (!ablations.empty()) {
    std::stringstream ss(ablations);
    std::string item;
    while (std::getline(ss, item, ',')) opt.ablations.push_back(item);
  }
  try {
    if (synth->parsed()) return protomatch::cmd_synth(opt, std::cout);
    if (train->parsed()) return protomatch::cmd_train(opt, std::cout);
    if (grad->parsed()) return protomatch::cmd_gradcheck(opt, std::cout);
    return protomatch::cmd_report(opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
