// Command-line front end: runs experiments from JSON configs, evaluates
// saved checkpoints, verifies the discrete-game theory on random instances
// and lists the built-in dataset kinds.
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "ganem/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"GAN-EM experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run an experiment described by a JSON config");
  run->add_option("config", config_path, "path to the config file")->required();

  std::string checkpoint_path;
  std::string dataset_spec;
  auto* eval = app.add_subcommand("evaluate", "score a saved checkpoint on a dataset");
  eval->add_option("checkpoint", checkpoint_path, "path to checkpoint.json")->required();
  eval->add_option("dataset", dataset_spec,
                   "dataset spec, e.g. kind=two-rings,k=2,n=2000,seed=42")
      ->required();

  int trials = 20;
  auto* verify = app.add_subcommand("verify-theory",
                                    "check closed-form game results on random instances");
  verify->add_option("--trials", trials, "number of random instances")->default_val(20);

  auto* list = app.add_subcommand("list-datasets", "list built-in dataset kinds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const ganem::ExperimentConfig cfg = ganem::load_experiment_config(config_path);
      return ganem::run_experiment(cfg, std::cout);
    }
    if (eval->parsed()) {
      return ganem::evaluate_checkpoint(checkpoint_path, dataset_spec, std::cout);
    }
    if (verify->parsed()) {
      return ganem::verify_theory(trials, std::cout);
    }
    if (list->parsed()) {
      std::cout << ganem::list_datasets();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
