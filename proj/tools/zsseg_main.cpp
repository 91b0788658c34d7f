// Command-line front end. All substance lives in zsseg/commands.hpp; this
// file only parses arguments and maps errors to exit codes:
//   0  success
//   1  user error (bad arguments, bad config, bad input files)
//   2  internal invariant violation (shape, contract, training failures)

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "zsseg/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"zero-shot segmentation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ZSSEG_VERSION);

  zsseg::TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model on one fold");
  train->add_option("--config", train_args.config_path, "config file (key=value lines)")
      ->required();
  train->add_option("--override", train_args.overrides, "config override key=value");

  zsseg::EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint episodically");
  eval->add_option("--config", eval_args.config_path, "config file")->required();
  eval->add_option("--checkpoint", eval_args.checkpoint_path, "checkpoint file")->required();
  eval->add_option("--override", eval_args.overrides, "config override key=value");
  eval->add_option("--split", eval_args.split, "class split to evaluate: test or train");

  zsseg::DomainEvalArgs domain_args;
  auto* domain = app.add_subcommand("domain-eval",
                                    "evaluate on the source and a mapped target dataset");
  domain->add_option("--config", domain_args.config_path, "config file")->required();
  domain->add_option("--checkpoint", domain_args.checkpoint_path, "checkpoint file")
      ->required();
  domain->add_option("--target-root", domain_args.target_root, "target dataset root")
      ->required();
  domain->add_option("--class-map", domain_args.class_map_path,
                     "JSON object mapping source test classes to target classes")
      ->required();
  domain->add_option("--override", domain_args.overrides, "config override key=value");

  zsseg::PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "segment one image with a checkpoint");
  predict->add_option("--image", predict_args.image_path, "input RGB image")->required();
  predict->add_option("--checkpoint", predict_args.checkpoint_path, "checkpoint file")
      ->required();
  predict->add_option("--out", predict_args.out_path, "output mask file (0/255)")->required();

  zsseg::SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic shape dataset");
  synth->add_option("--out", synth_args.out_root, "output dataset root")->required();
  synth->add_option("--n", synth_args.n_images, "number of images");
  synth->add_option("--size", synth_args.size, "image side length");
  synth->add_option("--classes", synth_args.n_classes, "number of classes");
  synth->add_option("--seed", synth_args.seed, "generation seed");
  synth->add_option("--style", synth_args.style, "rendering style: plain or textured");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // 0 for --help/--version; collapse CLI11's error-code zoo to 1.
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) zsseg::cmd_train(train_args, std::cout);
    if (*eval) zsseg::cmd_eval(eval_args, std::cout);
    if (*domain) zsseg::cmd_domain_eval(domain_args, std::cout);
    if (*predict) zsseg::cmd_predict(predict_args, std::cout);
    if (*synth) zsseg::cmd_synth(synth_args, std::cout);
  } catch (const zsseg::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const zsseg::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
