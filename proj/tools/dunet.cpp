#include <CLI11.hpp>

#include "dunet/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Time-domain music source separation with dilated (dense) U-Nets"};
  app.require_subcommand(1);

  dunet::TrainArgs train;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "train a model on a dataset");
  t->add_option("--data", train.data, "dataset root with train/validation/test splits");
  t->add_option("--config", train.config, "key = value run configuration file")->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "output checkpoint path");
  t->add_option("--resume", train.resume, "continue from this checkpoint")->check(CLI::ExistingFile);
  auto* seed_opt = t->add_option("--seed", train_seed, "training seed (overrides the config file)");
  t->add_option("--set", train.overrides, "key=value override, repeatable");

  dunet::SeparateArgs sep;
  auto* s = app.add_subcommand("separate", "split a mixture WAV into source WAVs");
  s->add_option("--ckpt", sep.checkpoint, "checkpoint")->required()->check(CLI::ExistingFile);
  s->add_option("--input", sep.input, "mixture WAV")->required();
  s->add_option("--outdir", sep.outdir, "directory for <source>.wav")->required();

  dunet::EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "windowed SDR over the test split");
  e->add_option("--ckpt", ev.checkpoint, "checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "dataset root")->required();
  e->add_option("--report", ev.report, "CSV report path")->required();

  dunet::InspectArgs ins;
  auto* i = app.add_subcommand("inspect", "print layers, dilations, parameters and receptive field");
  i->add_option("--config", ins.config, "key = value configuration file")->check(CLI::ExistingFile);
  i->add_option("--set", ins.overrides, "key=value override, repeatable");

  dunet::AblateArgs ab;
  std::uint64_t ablate_seed = 0;
  auto* a = app.add_subcommand("ablate", "train and score the dilation / depth / density grid");
  a->add_option("--data", ab.data, "dataset root (toy mode synthesizes one when absent)");
  a->add_option("--out", ab.out, "output directory")->required();
  a->add_option("--config", ab.config, "key = value configuration file")->check(CLI::ExistingFile);
  a->add_flag("--toy", ab.toy, "reduced model and synthetic two-tone data");
  auto* ab_seed_opt = a->add_option("--seed", ablate_seed, "seed for data, initialization and training");
  a->add_option("--set", ab.overrides, "key=value override, repeatable");
  a->add_option("--only", ab.only, "run only these grid labels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : dunet::kExitUsage;
  }

  if (*t) {
    if (*seed_opt) train.seed = train_seed;
    return dunet::cmd_train(train);
  }
  if (*s) return dunet::cmd_separate(sep);
  if (*e) return dunet::cmd_evaluate(ev);
  if (*i) return dunet::cmd_inspect(ins);
  if (*ab_seed_opt) ab.seed = ablate_seed;
  return dunet::cmd_ablate(ab);
}
