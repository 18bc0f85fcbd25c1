// Command-line front end: prepare / train / eval / grad-check.
//
// Every setting is a key=value pair; a config file (--config) is applied
// over the defaults and explicit flags are applied over the file, so the
// same key never has two spellings. Exit codes: 1 configuration or usage
// error, 2 data error, 3 numeric or internal error.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relex/cli.hpp"

namespace {

struct FlagBinding {
  CLI::App* cmd;
  std::string flag;
  std::string key;
  std::string value;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distant-supervision relation extraction"};
  app.require_subcommand(1);

  CLI::App* prepare = app.add_subcommand("prepare", "ingest mention files into a dataset cache");
  CLI::App* train = app.add_subcommand("train", "train a model from a dataset cache");
  CLI::App* eval = app.add_subcommand("eval", "score the test split and write PR outputs");
  CLI::App* gradcheck = app.add_subcommand("grad-check",
                                           "compare analytic gradients with finite differences");

  std::string config_path;
  for (CLI::App* cmd : {prepare, train, eval, gradcheck}) {
    cmd->add_option("--config", config_path, "key=value config file applied before flags");
  }

  // Each flag feeds the same key=value channel as the config file.
  std::vector<FlagBinding*> bindings;
  auto bind = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                  const std::string& help) {
    auto* b = new FlagBinding{cmd, flag, key, {}};
    bindings.push_back(b);
    cmd->add_option(flag, b->value, help);
  };

  bind(prepare, "--schema", "schema", "relation schema tsv (name<TAB>id)");
  bind(prepare, "--train", "train_mentions", "training mentions jsonl");
  bind(prepare, "--test", "test_mentions", "test mentions jsonl");
  bind(prepare, "--val", "val_mentions", "validation mentions jsonl");
  bind(prepare, "--cache", "cache", "dataset cache to write (default <out>/dataset.bin)");
  bind(prepare, "--out", "out", "output directory");
  bind(prepare, "--max-len", "max_len", "maximum sentence length");
  bind(prepare, "--pos-clip", "pos_clip", "relative position clip");
  bind(prepare, "--min-count", "min_count", "keep words with frequency strictly above this");

  bind(train, "--cache", "cache", "dataset cache from prepare");
  bind(train, "--embeddings", "embeddings", "pretrained word vectors (text format)");
  bind(train, "--out", "out", "output directory for checkpoints and epochs.csv");
  bind(train, "--epochs", "epochs", "number of epochs (required)");
  bind(train, "--batch", "batch", "bags per mini-batch");
  bind(train, "--lr", "lr", "learning rate");
  bind(train, "--seed", "seed", "run seed");
  bind(train, "--p-keep", "p_keep", "dropout keep probability");
  bind(train, "--shuffle", "shuffle", "shuffle bags each epoch (on|off)");
  bind(train, "--variant", "variant", "loss variant: ave, att or cost_att");
  bind(train, "--lambda", "lambda", "NR cost weight (cost_att only)");
  bind(train, "--gamma", "gamma", "class-tie weight (cost_att only)");
  bind(train, "--regularize", "regularize", "apply the weight regularizer (on|off)");
  bind(train, "--d2", "d2", "position embedding width");
  bind(train, "--ds", "ds", "convolution kernels");
  bind(train, "--dwin", "dwin", "convolution window");
  bind(train, "--rho", "rho", "ranking loss scale");
  bind(train, "--sigma-pos", "sigma_pos", "positive margin");
  bind(train, "--sigma-neg", "sigma_neg", "negative margin");
  bind(train, "--epsilon", "epsilon", "mean-weight regularizer factor");
  bind(train, "--eta", "eta", "per-class regularizer factor");

  bind(eval, "--cache", "cache", "dataset cache from prepare");
  bind(eval, "--checkpoint", "checkpoint", "checkpoint to score (default <out>/model.ckpt)");
  bind(eval, "--out", "out", "output directory for pr.csv and pn.txt");
  bind(eval, "--variant", "variant", "override the variant stored in the checkpoint");

  bind(gradcheck, "--trials", "trials", "instances per variant/regularizer combination");
  bind(gradcheck, "--seed", "seed", "instance generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    relex::RunConfig rc;
    if (!config_path.empty()) relex::load_config_file(rc, config_path);
    for (const FlagBinding* b : bindings) {
      if (b->cmd->count(b->flag) > 0) relex::apply_setting(rc, b->key, b->value);
    }

    if (prepare->parsed()) {
      relex::cmd_prepare(rc, std::cout);
    } else if (train->parsed()) {
      relex::cmd_train(rc, std::cout);
    } else if (eval->parsed()) {
      relex::cmd_eval(rc, std::cout);
    } else if (gradcheck->parsed()) {
      if (!relex::cmd_gradcheck(rc, std::cout)) return 3;
    }
    return 0;
  } catch (const relex::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const relex::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
