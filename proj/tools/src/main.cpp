#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "clue/cli/commands.hpp"
#include "clue/cli/run_config.hpp"

namespace {

struct Subcommand {
  const char* name;
  const char* help;
};

constexpr Subcommand kSubcommands[] = {
    {"prepare", "tokenize, build the vocabulary, split and featurize a raw dataset"},
    {"init-centroids", "cluster embedding rows into the initial centroids"},
    {"train", "train a model and write its checkpoint and metric log"},
    {"eval", "evaluate a checkpoint on a split"},
    {"export", "write embeddings, centroids, alignments or latents as TSV"},
    {"sweep", "train and test once per value of clusters or layers"},
};

}  // namespace

int main(int argc, char** argv) {
  using namespace clue::cli;
  CLI::App app{"clue: clustering-enhanced text classification"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::App*> subs;
  for (const auto& s : kSubcommands) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("-c,--config", config_path, "key = value config file");
    for (const KeySpec& k : known_keys()) {
      const std::string key(k.key);
      sub->add_option("--" + key, overrides[key], std::string(k.help));
    }
    subs[s.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  return run_guarded([&] {
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      for (const KeySpec& k : known_keys()) {
        const std::string key(k.key);
        if (sub->get_option("--" + key)->count() > 0) cfg.set(key, overrides[key]);
      }
      if (name == "prepare") cmd_prepare(cfg, std::cerr);
      else if (name == "init-centroids") cmd_init_centroids(cfg, std::cerr);
      else if (name == "train") cmd_train(cfg, std::cerr);
      else if (name == "eval") cmd_eval(cfg, std::cout, std::cerr);
      else if (name == "export") cmd_export(cfg, std::cerr);
      else if (name == "sweep") cmd_sweep(cfg, std::cerr);
    }
  }, std::cerr);
}
