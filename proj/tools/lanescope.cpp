// lanescope: command-line driver for the lane-change interaction pipeline.
//
// Exit status: 0 success, 1 domain error (error name on stderr), 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lanescope/config.hpp"
#include "lanescope/io.hpp"
#include "lanescope/pipeline.hpp"

namespace {

using namespace lanescope;

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  int threads = -1;
  bool quiet = false;
};

using Stage = std::function<void(const PipelineConfig&, const Log&)>;

const std::vector<std::pair<std::string, std::pair<std::string, Stage>>>& stages() {
  static const std::vector<std::pair<std::string, std::pair<std::string, Stage>>> list{
      {"synth", {"Generate a synthetic lane-change recording (io.tracks)", run_synth}},
      {"ingest", {"Normalize tracks, extract lane-change scenes (io.tracks -> io.scenes)", run_ingest}},
      {"fields", {"Compute AS-GVF tensors per scene (io.scenes -> io.fields)", run_fields}},
      {"train-codec", {"Fit the field encoder, cae or linear (io.fields -> io.codec_model)", run_train_codec}},
      {"encode", {"Build 12-d feature sequences (io.scenes, io.fields, io.codec_model -> io.features)", run_encode}},
      {"segment", {"Fit the sticky HDP-HMM (io.features -> io.labels, io.chain)", run_segment}},
      {"analyze", {"Histogram, prototypes, lateral states, transitions (-> io.analysis/)", run_analyze}},
      {"pipeline", {"Run every stage in order; synth only when synth.enabled", run_pipeline}},
  };
  return list;
}

PipelineConfig resolve_config(const Options& opt) {
  nlohmann::json doc = nlohmann::json::object();
  if (!opt.config.empty()) doc = io::read_json(opt.config);
  return load_config(doc, opt.overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-change interaction patterns: velocity fields, field codec, sticky HDP-HMM segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(io::kVersion));
  app.footer(
      "Configuration: JSON with sections seed, io, synth, ingest, roi, field, codec, bnp, analysis.\n"
      "Override any key with --set section.key=value (value parsed as JSON, else string),\n"
      "e.g. --set bnp.L=30 --set codec.encoder=cae. Unknown keys are rejected.\n"
      "LANESCOPE_THREADS caps worker threads (0 = all cores).");

  Options opt;
  std::string chosen;
  for (const auto& [name, entry] : stages()) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("-c,--config", opt.config, "Pipeline configuration JSON (defaults when omitted)");
    sub->add_option("--set", opt.overrides, "Override a config key: section.key=value (repeatable)")->take_all();
    sub->add_option("--threads", opt.threads, "Worker threads; sets LANESCOPE_THREADS (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("-q,--quiet", opt.quiet, "Suppress progress messages");
    sub->callback([&chosen, name = name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (opt.threads >= 0) setenv("LANESCOPE_THREADS", std::to_string(opt.threads).c_str(), 1);
  const Log log = [&](const std::string& msg) {
    if (!opt.quiet) std::cerr << msg << '\n';
  };

  try {
    const auto cfg = resolve_config(opt);
    for (const auto& [name, entry] : stages())
      if (name == chosen) entry.second(cfg, log);
  } catch (const UsageError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "IoError: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "InternalError: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
