#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sgw/harness.hpp"

using namespace sgw;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sgweyl-test-" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig smoke_config(const fs::path& root) {
  ExperimentConfig c;
  c.profile = Profile::smoke;
  c.output_dir = (root / "out").string();
  c.cache_dir = (root / "cache").string();
  return c;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no sgw::Error thrown");
  return Errc::InvalidArgument;
}

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig d;
  const ExperimentConfig r = ExperimentConfig::from_json(d.to_json());
  CHECK(r.to_json() == d.to_json());
  CHECK(r.hash() == d.hash());
  CHECK(d.hash().size() == 64);

  const ExperimentConfig c = ExperimentConfig::from_json(
      R"({"model": "B", "basis_dims": [300, 600], "lambda_max": 200, "cutoff": {"eps": 0.3, "A": null}})");
  CHECK(c.model == "B");
  CHECK(c.basis_dims == std::vector<int>{300, 600});
  CHECK(c.cutoff.eps == 0.3);
  CHECK_FALSE(c.cutoff.A.has_value());
  CHECK(c.hash() != d.hash());

  // the directories do not enter the hash
  ExperimentConfig moved = d;
  moved.output_dir = "elsewhere";
  CHECK(moved.hash() == d.hash());

  CHECK(code_of([] { ExperimentConfig::from_json(R"({"modle": "A"})"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"cutoff": {"k3": 1}})"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"threads": 1.5})"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"tol": "small"})"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json("[1, 2]"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json("{"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"model": "C"})"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"lambda_min": 5})"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"lambda_max": 1500})"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"basis_dims": [4000]})"); }) == Errc::ConfigInvalid);
  // cutoff inequalities: eps in (0, 1/2), and A may not undercut the measured constant
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"cutoff": {"eps": 0.6}})"); }) == Errc::ConfigInvalid);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"cutoff": {"A": 0.5}})"); }) == Errc::ConfigInvalid);

  CHECK(resolve_model("A") == "model-A");
  CHECK(resolve_model("oracle-H") == "oracle-H");
  CHECK(parse_stage("weyl-fit") == Stage::weyl_fit);
  CHECK(code_of([] { parse_stage("fit"); }) == Errc::ConfigInvalid);
}

TEST_CASE("SHA-256") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("spectrum cache") {
  const fs::path root = scratch("cache");
  const SpectrumCache cache(root);
  SpectrumDataset d;
  d.model_id = "model-A";
  d.etas = {1.0000000000000002, 3.5, 1e10 / 3};
  d.basis_dim = 3;
  d.trusted_count = 2;
  d.basis = "mapped-hermite";
  const std::string key = SpectrumCache::key("model-A", 3, 1e-6, "mapped-hermite");
  CHECK(key != SpectrumCache::key("model-A", 3, 1e-7, "mapped-hermite"));
  CHECK(key != SpectrumCache::key("model-B", 3, 1e-6, "mapped-hermite"));
  CHECK_FALSE(cache.contains(key));
  cache.store(key, d);
  CHECK(cache.contains(key));
  const SpectrumDataset l = cache.load(key);
  CHECK(l.etas == d.etas);  // bit-exact round trip
  CHECK(l.trusted_count == 2);
  CHECK(l.model_id == "model-A");
  CHECK(spectrum_csv(l) == spectrum_csv(d));
  CHECK(spectrum_csv(d).rfind("index,eta\n0,", 0) == 0);

  {
    std::ofstream f(cache.path(key), std::ios::app);
    f << "3,7\n";
  }
  CHECK(code_of([&] { cache.load(key); }) == Errc::CacheCorrupt);
  CHECK(code_of([] { parse_spectrum_csv("idx,eta\n"); }) == Errc::CacheCorrupt);
  CHECK(code_of([] { parse_spectrum_csv("index,eta\n1,2\n"); }) == Errc::CacheCorrupt);
  fs::remove_all(root);
}

TEST_CASE("stage dependencies") {
  const fs::path root = scratch("deps");
  const ExperimentConfig c = smoke_config(root);
  CHECK(code_of([&] { run_stage(c, Stage::weyl_fit); }) == Errc::StageDependencyMissing);
  CHECK(code_of([&] { run_stage(c, Stage::tauber); }) == Errc::StageDependencyMissing);
  CHECK(code_of([&] { run_stage(c, Stage::report); }) == Errc::StageDependencyMissing);
  fs::remove_all(root);
}

TEST_CASE("cheap stages are deterministic and cached") {
  const fs::path root = scratch("det");
  ExperimentConfig a = smoke_config(root);
  const StageResult s1 = run_stage(a, Stage::spectrum);
  REQUIRE(s1.criteria.size() == 1);
  CHECK(s1.criteria[0].id == 1);
  CHECK(s1.criteria[0].pass);
  const StageResult c = run_stage(a, Stage::constants);
  REQUIRE(c.criteria.size() == 1);
  CHECK(c.criteria[0].pass);
  CHECK(run_stage(a, Stage::weyl_fit).criteria.size() == 2);

  ExperimentConfig b = a;
  b.output_dir = (root / "again").string();
  for (Stage s : {Stage::spectrum, Stage::constants, Stage::weyl_fit}) run_stage(b, s);
  CHECK(artifact_differences(a.output_dir, b.output_dir).empty());

  const auto recs = collected_criteria(a.output_dir);
  REQUIRE(recs.size() == 4);
  CHECK(recs.front().id == 1);
  CHECK(recs.back().id == 4);
  CHECK(criterion_line(recs.front()).rfind("PASS criterion 1 ", 0) == 0);

  // a changed byte shows up, and so does a file on one side only
  {
    std::ofstream f(fs::path(b.output_dir) / "constants.json", std::ios::app);
    f << " ";
  }
  std::ofstream(fs::path(b.output_dir) / "extra.csv") << "x\n";
  CHECK(artifact_differences(a.output_dir, b.output_dir) == std::vector<std::string>{"constants.json", "extra.csv"});

  // spectrum for a single model at a requested dimension is a cache hit the second time
  ExperimentConfig h = a;
  h.model = "H";
  h.basis_dims = {100};
  run_stage(h, Stage::spectrum);
  const auto before = fs::last_write_time(SpectrumCache(h.cache_dir).path(SpectrumCache::key("oracle-H", 100, h.tol, "hermite")));
  run_stage(h, Stage::spectrum);
  CHECK(fs::last_write_time(SpectrumCache(h.cache_dir).path(SpectrumCache::key("oracle-H", 100, h.tol, "hermite"))) ==
        before);
  fs::remove_all(root);
}
