#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "adscreen/config.hpp"
#include "adscreen/error.hpp"
#include "adscreen/pipeline.hpp"
#include "adscreen/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"speech + language screening pipeline: log-mel CNN over audio, "
               "segment-level text classifier, late fusion, cross-validated reports"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(adscreen::kVersion));

  std::string config_path, seed, jobs, segment, source, weights, out, manifest, subjects;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--jobs", jobs, "worker threads; 1 is fully serial");
  app.add_option("--segment", segment, "audio patch length: short | long");
  app.add_option("--source", source, "transcript column: manual | asr");
  app.add_option("--weights", weights, "fusion weight sweep, comma separated");
  app.add_option("--out", out, "artifact output directory");
  app.add_option("--manifest", manifest, "corpus manifest CSV");

  CLI::App* synth = app.add_subcommand("synth", "write a deterministic synthetic corpus");
  synth->add_option("-n,--subjects", subjects, "subject count");
  CLI::App* features = app.add_subcommand("features", "cache log-mel spectrograms");
  CLI::App* train_audio = app.add_subcommand("train-audio", "train the audio branch");
  CLI::App* train_text = app.add_subcommand("train-text", "train the text branch");
  CLI::App* predict = app.add_subcommand("predict", "per-subject branch probabilities CSV");
  CLI::App* fuse = app.add_subcommand("fuse", "weight sweep over a predictions file");
  CLI::App* evaluate = app.add_subcommand("evaluate", "cross-validated evaluation + reports");
  for (auto* sc : {synth, features, train_audio, train_text, predict, fuse, evaluate})
    sc->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    adscreen::RunConfig cfg;
    if (!config_path.empty()) adscreen::load_config_file(cfg, config_path);
    adscreen::apply_env_overrides(cfg);
    const struct {
      const char* key;
      const std::string& value;
    } flags[] = {{"seed", seed},       {"jobs", jobs}, {"segment", segment},
                 {"source", source},   {"weights", weights}, {"out", out},
                 {"manifest", manifest}, {"synth.n", subjects}};
    for (const auto& f : flags)
      if (!f.value.empty()) cfg.set(f.key, f.value);

    if (synth->parsed())
      adscreen::run_synth(cfg, std::cout);
    else if (features->parsed())
      adscreen::run_features(cfg, std::cout);
    else if (train_audio->parsed())
      adscreen::run_train_audio(cfg, std::cout);
    else if (train_text->parsed())
      adscreen::run_train_text(cfg, std::cout);
    else if (predict->parsed())
      adscreen::run_predict(cfg, std::cout);
    else if (fuse->parsed())
      adscreen::run_fuse(cfg, std::cout);
    else if (evaluate->parsed())
      adscreen::run_evaluate(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
