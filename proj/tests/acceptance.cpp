// Acceptance gate: one PASS/FAIL line per criterion. Tolerances are fixed here.

#include "cases.hpp"
#include "oracles/bayes_filter_oracle.hpp"
#include "oracles/gaussian_oracle.hpp"
#include "oracles/visibility_oracle.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <unistd.h>

using namespace semsearch;
namespace fs = std::filesystem;

namespace {

constexpr double kFilterTolerance = 0.02;
constexpr long kFilterParticles = 1000000;
constexpr int kFilterConfigs = 25;
constexpr double kQueryTolerance = 1e-9;
constexpr double kReturnTolerance = 1e-6;
constexpr double kArithmeticTolerance = 1e-9;
constexpr double kIterativeTolerance = 1e-6;

// Benchmark suite.
constexpr int kSuiteHouses = 20;
constexpr int kSuiteSeeds = 5;
constexpr int kSuiteRooms = 6;
constexpr int kSuiteObjects = 40;
constexpr int kSuiteStepBudget = 1500;
constexpr std::uint64_t kSuiteSeedBase = 5000;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Position fusion against an importance-sampled Bayes update.
Verdict filter_equivalence() {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  double worst_mean = 0.0, worst_cov = 0.0;
  int passed = 0;
  for (int k = 0; k < kFilterConfigs; ++k) {
    // Pose covariance 0.01 I as in the worked example; default sensor noise;
    // prior standard deviations between 2 and 10 cm.
    const Mat2 pose_cov = Mat2::Identity() * 0.01;
    const double range_std = 0.05;
    const double bearing_std = 0.02;
    const Mat2 meas = harness::diag2(range_std * range_std, bearing_std * bearing_std);
    const double angle = std::numbers::pi * u(rng);
    const double s1 = 0.02 + 0.08 * u(rng), s2 = 0.02 + 0.08 * u(rng);
    const Mat2 rot = Eigen::Rotation2Dd(angle).toRotationMatrix();
    const Mat2 prior_sigma = rot * harness::diag2(s1 * s1, s2 * s2) * rot.transpose();
    const Vec2 pose_mu(10.0 * u(rng), 10.0 * u(rng));
    const double r0 = 1.0 + 2.0 * u(rng);
    const double b0 = (2.0 * u(rng) - 1.0) * std::numbers::pi;
    const Vec2 prior_mu = pose_mu + r0 * Vec2(std::cos(b0), std::sin(b0));
    // Measurement drawn from the model around a plausible true position.
    const Vec2 truth = oracle::draw(prior_mu, oracle::chol(prior_sigma), rng);
    const Vec2 rel = truth - oracle::draw(pose_mu, oracle::chol(pose_cov), rng);
    const mapping::RangeBearing z{rel.norm() + range_std * n01(rng), std::atan2(rel.y(), rel.x()) + bearing_std * n01(rng)};

    const auto post = mapping::fuse_position({prior_mu, prior_sigma}, {pose_mu, pose_cov}, z, meas);
    const auto mc = oracle::bayes_update(prior_mu, prior_sigma, pose_mu, pose_cov, z.range, z.bearing, meas,
                                         kFilterParticles, 7000 + static_cast<std::uint64_t>(k));
    const double em = (post.mu - mc.mean).norm() / (mc.mean - pose_mu).norm();
    const double ec = (post.sigma - mc.cov).norm() / mc.cov.norm();
    worst_mean = std::max(worst_mean, em);
    worst_cov = std::max(worst_cov, ec);
    passed += em <= kFilterTolerance && ec <= kFilterTolerance;
  }
  return {passed == kFilterConfigs,
          fmt("%d/%d configs within %.0f%%; worst mean %.4f, worst covariance %.4f", passed, kFilterConfigs,
              100.0 * kFilterTolerance, worst_mean, worst_cov)};
}

// 2. Network queries against enumeration; RTDP against value iteration.
Verdict inference_and_planning() {
  std::mt19937_64 rng(2002);
  double worst_query = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const auto raw = cases::random_network(n, rng);
    const auto net = semantics::BayesianNetwork::create("space", raw.nodes, raw.edges, raw.cpts);
    const auto& target = raw.nodes[rng() % raw.nodes.size()];
    std::set<std::string> evidence;
    for (const auto& node : raw.nodes)
      if (rng() % 3 == 0) evidence.insert(node);
    worst_query = std::max(worst_query, std::abs(semantics::query(net, target, evidence) -
                                                 oracle::enumerate_query(raw, target, evidence)));
  }
  double worst_return = 0.0;
  int optimal_actions = 0;
  for (int k = 0; k < 10; ++k) {
    const auto c = cases::random_mdp(20, 20, rng);
    auto t = planner::initial_values(c.mdp);
    Rng prng(static_cast<std::uint64_t>(k));
    cases::converge_rtdp(c.mdp, t, c.start, prng);
    const auto v_star = oracle::value_iteration(c.reference);
    const auto r = static_cast<std::size_t>(c.reference.index.at(c.mdp.states[static_cast<std::size_t>(c.start)]));
    const auto v_pi = oracle::evaluate_policy(c.reference, cases::greedy_policy(c.mdp, t, c.reference));
    worst_return = std::max(worst_return, std::abs(v_pi[r] - v_star[r]));
    const int a = index_of(planner::greedy_action(t, c.mdp, c.start));
    optimal_actions += oracle::q(c.reference, v_star, static_cast<int>(r), a) >= v_star[r] - kReturnTolerance;
  }
  return {worst_query <= kQueryTolerance && worst_return <= kReturnTolerance && optimal_actions == 10,
          fmt("100 networks, worst |query - enumeration| %.2e; 10 MDPs, %d/10 optimal start actions, "
              "worst start-return gap %.2e",
              worst_query, optimal_actions, worst_return)};
}

// 3. Frontier and dense visibility sets against the literal definitions.
Verdict definitional_exactness() {
  std::mt19937_64 rng(3003);
  int frontier_ok = 0, visibility_ok = 0, maps = 0;
  while (maps < 50) {
    const auto g = testutil::random_agent_grid(30, 30, rng);
    std::vector<Cell> free;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.cells()[i] == CellState::Free) free.push_back(g.cell_of(i));
    if (free.empty()) continue;
    ++maps;
    const int min_size = maps % 2 ? 1 : geometry::kDefaultMinEdgeSize;
    std::set<std::set<Cell>> got;
    for (const auto& e : geometry::detect_frontiers(g, RoomLabels(30, 30), min_size))
      got.insert(testutil::as_set(e.cells));
    frontier_ok += got == oracle::frontier_groups(g, min_size);
    const Cell src = free[rng() % free.size()];
    const double range = 3.0 + static_cast<double>(rng() % 20);
    const auto region = geometry::compute_visibility(g, g.center(src), range, geometry::kDenseRays);
    visibility_ok += testutil::as_set(region.cells) == oracle::dense_region(g, src, range);
  }
  return {frontier_ok == 50 && visibility_ok == 50,
          fmt("frontiers equal on %d/50 maps, visibility equal on %d/50 maps", frontier_ok, visibility_ok)};
}

/// Walled 4 m square room with 15 objects of random class, at least 0.4 m
/// apart and 0.5 to 2.8 m from the room centre.
world::Environment stationary_scene(std::uint64_t seed) {
  constexpr int kSide = 80;
  world::Environment env;
  env.map = GridMap(kSide, kSide, 0.05, CellState::Free);
  env.rooms = RoomLabels(kSide, kSide, 0);
  for (int i = 0; i < kSide; ++i)
    for (const Cell c : {Cell{i, 0}, Cell{i, kSide - 1}, Cell{0, i}, Cell{kSide - 1, i}})
      env.map.set(c, CellState::Occupied);
  env.class_set = builtin::class_set();
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec2 centre = env.map.center({kSide / 2, kSide / 2});
  while (env.objects.size() < 15) {
    const double r = 0.5 + 2.3 * u(rng);
    const double b = 2.0 * std::numbers::pi * u(rng);
    const Vec2 p = centre + r * Vec2(std::cos(b), std::sin(b));
    const auto cell = env.map.cell_at(p);
    if (!cell || env.map.at(*cell) != CellState::Free) continue;
    if (std::any_of(env.objects.begin(), env.objects.end(),
                    [&](const world::GroundTruthObject& o) { return (o.position - p).norm() < 0.4; }))
      continue;
    world::GroundTruthObject o;
    o.id = static_cast<int>(env.objects.size());
    o.position = p;
    o.true_class = static_cast<int>(rng() % env.class_set.size());
    o.room = 0;
    env.objects.push_back(o);
  }
  return env;
}

// 4. Stationary observation: error, cross-entropy and optimality criteria trends.
Verdict mapping_convergence() {
  constexpr int kRuns = 50;
  constexpr int kSteps = 80;
  std::vector<harness::MetricSample> mean(kSteps);
  double cell = 0.0;
  for (int run = 0; run < kRuns; ++run) {
    const auto env = stationary_scene(4000 + static_cast<std::uint64_t>(run));
    cell = env.map.resolution();
    const auto sensor = harness::default_sensor(env.class_set.size());
    const auto samples = harness::run_stationary_observation(env, {40, 40}, sensor, kSteps, 9000 + run);
    for (int t = 0; t < kSteps; ++t) {
      const auto& s = samples[static_cast<std::size_t>(t)];
      auto& m = mean[static_cast<std::size_t>(t)];
      m.median_error += s.median_error / kRuns;
      m.cross_entropy += s.cross_entropy / kRuns;
      m.a_opt += s.a_opt / kRuns;
      m.d_opt += s.d_opt / kRuns;
      m.e_opt += s.e_opt / kRuns;
      m.n_objects += s.n_objects;
    }
  }
  int increases = 0;
  for (int t = 21; t < kSteps; ++t)
    increases += mean[static_cast<std::size_t>(t)].median_error > mean[static_cast<std::size_t>(t - 1)].median_error;
  const auto& first = mean.front();
  const auto& last = mean.back();
  auto peak = [&](double harness::MetricSample::*field) {
    double m = 0.0;
    for (const auto& s : mean) m = std::max(m, s.*field);
    return m;
  };
  const bool error_ok = increases == 0 && last.median_error < 0.5 * cell;
  const bool ce_ok = last.cross_entropy < 0.05 * first.cross_entropy;
  const bool opt_ok = last.a_opt < peak(&harness::MetricSample::a_opt) &&
                      last.d_opt < peak(&harness::MetricSample::d_opt) &&
                      last.e_opt < peak(&harness::MetricSample::e_opt);
  return {error_ok && ce_ok && opt_ok,
          fmt("median error %d increases after step 20, final %.3f cell; cross-entropy %.4f -> %.4f; "
              "A/D/E final below peak: %s; mapped objects per run %.1f -> %.1f",
              increases, last.median_error / cell, first.cross_entropy, last.cross_entropy, opt_ok ? "yes" : "no",
              first.n_objects / double(kRuns), last.n_objects / double(kRuns))};
}

std::vector<harness::ScenarioConfig> benchmark_suite() {
  std::vector<harness::ScenarioConfig> suite;
  for (int h = 0; h < kSuiteHouses; ++h) {
    world::GeneratorOptions opt;
    opt.seed = kSuiteSeedBase + static_cast<std::uint64_t>(h);
    opt.rooms = kSuiteRooms;
    opt.objects = kSuiteObjects;
    opt.ensure_class = "towel";
    const auto env = world::generate_environment(opt);
    harness::ScenarioConfig cfg;
    cfg.environment = world::to_json(env);
    cfg.target = "towel";
    cfg.sensor = harness::default_sensor(env.class_set.size());
    cfg.step_budget = kSuiteStepBudget;
    cfg.seed = opt.seed;
    suite.push_back(std::move(cfg));
  }
  return suite;
}

// 5. Benchmark ordering across the three methods.
Verdict benchmark_ordering() {
  using harness::Method;
  const auto summary =
      harness::run_benchmark(benchmark_suite(), {Method::Ours, Method::FeSs, Method::OursNs}, kSuiteSeeds);
  const auto& ours = summary[0];
  const auto& fess = summary[1];
  const auto& ns = summary[2];
  const bool ok = ours.success_rate >= fess.success_rate && fess.success_rate >= ns.success_rate - 0.05 &&
                  ours.mean_path_length_m <= ns.mean_path_length_m;
  return {ok, fmt("success ours %.3f, fe-ss %.3f, ours-ns %.3f; path ours %.2f m, ours-ns %.2f m, fe-ss %.2f m",
                  ours.success_rate, fess.success_rate, ns.success_rate, ours.mean_path_length_m,
                  ns.mean_path_length_m, fess.mean_path_length_m)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 6. Two CLI runs of one (scenario, seed) produce identical bytes.
Verdict determinism() {
  const auto dir = fs::temp_directory_path() / ("semsearch_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  world::GeneratorOptions opt;
  opt.seed = 6006;
  opt.rooms = 5;
  opt.objects = 30;
  opt.ensure_class = "towel";
  std::ofstream(dir / "env.json") << world::to_json(world::generate_environment(opt)).dump();
  std::ofstream(dir / "scenario.json") << nlohmann::json{{"environment", "env.json"}, {"target", "towel"},
                                                         {"step_budget", 600}}
                                              .dump();
  bool ok = true;
  std::string files[2][2];
  for (int k = 0; k < 2; ++k) {
    const auto out = dir / ("out" + std::to_string(k));
    const std::string cmd = std::string(SEMSEARCH_CLI) + " run --scenario " + (dir / "scenario.json").string() +
                            " --seed 42 --deterministic --out " + out.string() + " > /dev/null";
    ok &= std::system(cmd.c_str()) == 0;
    files[k][0] = slurp(out / "results.csv");
    files[k][1] = slurp(out / "episode.log.json");
  }
  const bool same_results = ok && !files[0][0].empty() && files[0][0] == files[1][0];
  const bool same_log = ok && !files[0][1].empty() && files[0][1] == files[1][1];
  fs::remove_all(dir);
  return {same_results && same_log,
          fmt("results.csv identical: %s, episode.log.json identical: %s (%zu bytes)", same_results ? "yes" : "no",
              same_log ? "yes" : "no", files[0][1].size())};
}

// 7. Worked formula examples.
Verdict formula_checks() {
  std::vector<std::string> failed;
  auto check = [&](const std::string& name, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) failed.push_back(name + fmt("=%.12g (want %.12g)", got, want));
  };
  check("spl(l=4,p=8)", harness::spl({{true, 4.0, 8.0}}), 0.5, kArithmeticTolerance);
  check("spl(l=p)", harness::spl({{true, 4.0, 4.0}}), 1.0, kArithmeticTolerance);
  check("spl(failure)", harness::spl({{false, 4.0, 4.0}}), 0.0, kArithmeticTolerance);

  semantics::CooccurrenceCounts counts({"a", "b", "c", "d", "e"});
  counts.pair[0][1] = 3;
  counts.single[1] = 10;
  check("lidstone", semantics::lidstone_probability(counts, 0, 1, 1.0), 4.0 / 15.0, kArithmeticTolerance);

  auto env = testutil::open_env(10, 10, 1.0);
  testutil::add_object(env, 0, {2.5, 2.5}, 0);
  testutil::add_object(env, 1, {7.5, 7.5}, 1);
  mapping::ObjectMap one;
  mapping::SemanticObject o;
  o.truth_id = 0;
  o.mu = {2.5, 2.5};
  o.sigma = harness::diag2(1.0, 4.0);
  o.class_dist = {1.0, 0.0};
  one.add(o);
  const auto m1 = harness::mapping_metrics(one, env);
  check("A-opt", m1.a_opt, 5.0, kArithmeticTolerance);
  check("D-opt", m1.d_opt, 4.0, kArithmeticTolerance);
  check("E-opt", m1.e_opt, 4.0, kArithmeticTolerance);
  mapping::ObjectMap two;
  o.mu = {3.5, 2.5};
  two.add(o);
  o.truth_id = 1;
  o.mu = {7.5, 4.5};
  o.class_dist = {0.0, 1.0};
  two.add(o);
  const auto m2 = harness::mapping_metrics(two, env);
  check("mean error", m2.mean_error, 2.0, kArithmeticTolerance);
  check("median error", m2.median_error, 2.0, kArithmeticTolerance);

  // Frontier reward with an exact pose on a 20-cell edge, room probability 0.5.
  const GridMap open(30, 5, 1.0, CellState::Free);
  geometry::FrontierEdge edge;
  for (int x = 0; x < 20; ++x) edge.cells.push_back({x, 2});
  edge.room = 0;
  const std::vector<geometry::FrontierEdge> edges = {edge};
  const auto fm = planner::shape_frontier_reward(planner::build_mdp(open, {1.0, 0.0, 0.0}), edges, {{0, 0.5}},
                                                 Mat2::Zero());
  check("frontier reward", fm.reward[static_cast<std::size_t>(*fm.state_of({4, 2}))], 10.0, kArithmeticTolerance);

  // Symmetric straddle of a straight visibility boundary.
  const GridMap fine(40, 40, 0.5, CellState::Free);
  geometry::VisibilityRegion half;
  for (int y = 0; y < 40; ++y)
    for (int x = 20; x < 40; ++x) half.cells.push_back({x, y});
  const Mat2 cov = Mat2::Identity() * 0.5;
  const auto vm = planner::shape_visibility_reward(planner::build_mdp(fine, {1.0, 0.0, 0.0}), half, cov);
  double want = 0.0;
  for (const Cell& c : half.cells) want += oracle::cell_mass(fine.center({19, 20}), cov, c.x * 0.5, c.y * 0.5, 0.5);
  check("visibility straddle", vm.reward[static_cast<std::size_t>(*vm.state_of({19, 20}))], want,
        kIterativeTolerance);

  // Discounted distance on a 5x5 deterministic grid.
  const GridMap g5(5, 5, 1.0, CellState::Free);
  auto m5 = planner::build_mdp(g5, {1.0, 0.0, 0.0});
  const auto goal = static_cast<std::size_t>(*m5.state_of({4, 4}));
  m5.goal[goal] = 1;
  m5.reward[goal] = 1.0;
  auto t5 = planner::initial_values(m5);
  Rng rng(1);
  const int start = *m5.state_of({0, 0});
  cases::converge_rtdp(m5, t5, start, rng, 200);
  check("rtdp 5x5", t5.values[static_cast<std::size_t>(start)], std::pow(0.95, 3), kIterativeTolerance);

  // One-dimensional Gaussian product and the likelihood-ratio-4 class update.
  const auto post = mapping::fuse_position({{0.0, 0.0}, harness::diag2(1.0, 0.0)}, {{-10.0, 0.0}, Mat2::Zero()},
                                           {12.0, 0.0}, harness::diag2(1.0, 1e-4));
  check("1-D mean", post.mu.x(), 1.0, kArithmeticTolerance);
  check("1-D variance", post.sigma(0, 0), 0.5, kArithmeticTolerance);
  const auto cls = mapping::update_class(std::vector<double>{0.5, 0.5}, std::vector<double>{0.8, 0.2},
                                         mapping::DetectorModel{{{2.0, 1.0}, {1.0, 2.0}}});
  check("class posterior", cls.dist[0], 0.8, kArithmeticTolerance);
  check("gate d2", mapping::mahalanobis_squared({0.1, 0.0}, {0.0, 0.0}, 2.0 * Mat2::Identity()), 0.005,
        kArithmeticTolerance);

  std::string detail = failed.empty() ? "all worked examples reproduced" : "mismatches:";
  for (const auto& f : failed) detail += " " + f;
  return {failed.empty(), detail};
}

}  // namespace

// Optional arguments select criteria by number; none runs all.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "filter equivalence", 300.0, filter_equivalence},
      {2, "inference and planning equivalence", 120.0, inference_and_planning},
      {3, "definitional exactness", 0.0, definitional_exactness},
      {4, "mapping convergence trends", 180.0, mapping_convergence},
      {5, "benchmark ordering", 1200.0, benchmark_ordering},
      {6, "determinism", 0.0, determinism},
      {7, "formula checks", 0.0, formula_checks},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double took = seconds_since(t0);
    const bool in_time = c.limit_s <= 0.0 || took < c.limit_s;
    const bool pass = v.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << v.detail
              << fmt(" (%.1f s%s)", took, in_time ? "" : fmt(", over the %.0f s limit", c.limit_s).c_str()) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
