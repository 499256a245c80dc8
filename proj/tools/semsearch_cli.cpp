// Command-line front end: run one episode, benchmark a suite, generate environments.

#include "semsearch/generator.hpp"
#include "semsearch/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace semsearch;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<harness::Method> parse_methods(const std::string& list) {
  std::vector<harness::Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(harness::method_from_string(item));
  if (out.empty()) throw ValidationError("no methods given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic object search: episodes, benchmarks and environment generation"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one episode");
  std::string scenario;
  std::optional<std::uint64_t> run_seed;
  std::string run_method;
  std::string run_out = ".";
  bool deterministic = false;
  run->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", run_seed, "Episode seed (overrides the scenario)");
  run->add_option("--method", run_method, "ours | fess | ours-ns (overrides the scenario)");
  run->add_option("--out", run_out, "Output directory");
  run->add_flag("--deterministic", deterministic, "Write planning time as 0 so outputs are byte-reproducible");

  auto* bench = app.add_subcommand("bench", "Run every scenario in a suite directory for each method");
  std::string suite;
  std::string methods = "ours,fess,ours-ns";
  int episodes = 5;
  std::string bench_out = "results.csv";
  bool bench_det = false;
  bench->add_option("--suite", suite, "Directory of scenario JSON files")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--methods", methods, "Comma-separated methods");
  bench->add_option("--episodes", episodes, "Episodes per scenario and method")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "Results CSV");
  bench->add_flag("--deterministic", bench_det, "Write planning time as 0");

  auto* gen = app.add_subcommand("gen-env", "Generate a house environment");
  world::GeneratorOptions gopt;
  std::string gen_out = "env.json";
  std::string counts_out;
  gen->add_option("--seed", gopt.seed, "Generator seed");
  gen->add_option("--rooms", gopt.rooms, "Room count")->check(CLI::PositiveNumber);
  gen->add_option("--objects", gopt.objects, "Object count")->check(CLI::NonNegativeNumber);
  gen->add_option("--width", gopt.width, "Width in cells (0 = automatic)");
  gen->add_option("--height", gopt.height, "Height in cells (0 = automatic)");
  gen->add_option("--ensure-class", gopt.ensure_class, "Guarantee one instance of this class");
  gen->add_option("--out", gen_out, "Environment JSON");
  gen->add_option("--counts", counts_out, "Also write room co-occurrence counts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = harness::load_scenario_file(scenario);
      if (run_seed) cfg.seed = *run_seed;
      if (!run_method.empty()) cfg.method = harness::method_from_string(run_method);
      if (deterministic) cfg.wall_clock = false;
      const auto log = harness::run_episode(cfg);
      const fs::path out = run_out;
      write_file(out / "results.csv", harness::results_csv({harness::result_row(log)}));
      write_file(out / "metrics_timeseries.csv", harness::metrics_csv(log.metrics));
      write_file(out / "episode.log.json", harness::to_json(log).dump(1) + "\n");
      std::cout << harness::to_string(log.method) << ": " << log.stop_reason << " after " << log.steps_used
                << " steps, path " << log.path_length_m << " m\n";
    } else if (*bench) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(suite))
        if (e.path().extension() == ".json" && e.path().filename().string().rfind("scenario", 0) == 0)
          files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw ValidationError("suite has no scenario*.json files");
      std::vector<harness::ScenarioConfig> scenarios;
      for (const auto& f : files) {
        scenarios.push_back(harness::load_scenario_file(f));
        if (bench_det) scenarios.back().wall_clock = false;
      }
      const auto summary = harness::run_benchmark(scenarios, parse_methods(methods), episodes);
      const auto text = harness::results_csv(harness::to_rows(summary));
      write_file(bench_out, text);
      std::cout << text;
    } else if (*gen) {
      const auto env = world::generate_environment(gopt);
      write_file(gen_out, world::to_json(env).dump() + "\n");
      if (!counts_out.empty()) write_file(counts_out, world::to_json(world::count_cooccurrence({env})).dump(1) + "\n");
      std::cout << "wrote " << gen_out << ": " << env.map.width() << "x" << env.map.height() << ", "
                << env.room_count() << " rooms, " << env.objects.size() << " objects\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
