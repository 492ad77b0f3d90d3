#include <cstdio>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "sgw/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Weyl-law experiments for SG-classical operators"};
  app.require_subcommand(1);

  std::string config_path, model, output, cache;
  std::vector<int> dims;
  double tol = 0, lmin = 0, lmax = 0;
  int threads = 0;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--model", model, "A, B, H, a model id, or all");
  app.add_option("--basis-dim", dims, "basis dimensions (repeatable)");
  app.add_option("--tol", tol, "eigenvalue trust tolerance");
  app.add_option("--lambda-min", lmin, "smallest lambda of the oscillatory grid");
  app.add_option("--lambda-max", lmax, "largest lambda of the oscillatory grid");
  app.add_option("--output", output, "output directory");
  app.add_option("--cache-dir", cache, "spectrum cache directory");
  app.add_option("--threads", threads, "worker threads");
  for (const char* s : {"spectrum", "constants", "weyl-fit", "phase", "oscillatory", "tauber", "report"})
    app.add_subcommand(s)->fallthrough();
  CLI11_PARSE(app, argc, argv);

  try {
    sgw::ExperimentConfig cfg;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      std::stringstream ss;
      ss << f.rdbuf();
      cfg = sgw::ExperimentConfig::from_json(ss.str());
    }
    if (!model.empty()) cfg.model = model;
    if (!dims.empty()) cfg.basis_dims = dims;
    if (tol > 0) cfg.tol = tol;
    if (lmin > 0) cfg.lambda_min = lmin;
    if (lmax > 0) cfg.lambda_max = lmax;
    if (!output.empty()) cfg.output_dir = output;
    if (!cache.empty()) cfg.cache_dir = cache;
    if (threads > 0) cfg.threads = threads;
    cfg.validate();

    const sgw::StageResult r = sgw::run_stage(cfg, sgw::parse_stage(app.get_subcommands().front()->get_name()));
    bool ok = true;
    for (const auto& c : r.criteria) {
      std::printf("%s\n", sgw::criterion_line(c).c_str());
      ok = ok && c.pass;
    }
    for (const auto& f : r.files) std::printf("wrote %s/%s\n", cfg.output_dir.c_str(), f.c_str());
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
