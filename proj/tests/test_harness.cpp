#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtss/grid.hpp"
#include "mtss/harness.hpp"

using namespace mtss;
namespace fs = std::filesystem;

namespace {

ScenarioConfig small(ProblemKind p = ProblemKind::semi_bandit) {
  ScenarioConfig s;
  s.name = "small";
  s.problem = p;
  s.n_items = 20;
  s.slate_size = 3;
  s.dim = 3;
  if (p == ProblemKind::semi_bandit)
    s.theta_source = LmmSource{0.5};
  else
    s.theta_source = BetaLogisticSource{1.0, p == ProblemKind::mnl ? LogisticLink::shifted : LogisticLink::plain};
  return s;
}

AgentConfig fast(AgentKind kind) {
  AgentConfig a;
  a.kind = kind;
  a.sampler.n_burnin = 50;
  a.sampler.n_keep = 50;
  a.sampler.n_refresh = 10;
  return a;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path tmpdir(const std::string& name) {
  fs::path p = fs::path(MTSS_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MTSS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Aggregate, TwoConstantTraces) {
  RegretTrace a, b;
  for (int t = 0; t < 4; ++t) {
    a.push(1.0);
    b.push(3.0);
  }
  const std::vector<RegretTrace> v{a, b};
  const CurveSummary c = aggregate(v);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_DOUBLE_EQ(c.mean_cum_regret[r], 2.0 * (r + 1));
    EXPECT_DOUBLE_EQ(c.stderr_cum_regret[r], std::abs(1.0 * (r + 1) - 3.0 * (r + 1)) / 2.0);
    EXPECT_DOUBLE_EQ(c.mean_inst_regret[r], 2.0);
  }
  EXPECT_FALSE(c.single_replication);
}

TEST(Aggregate, SingleTraceAndErrors) {
  RegretTrace a;
  a.push(0.5);
  const std::vector<RegretTrace> one{a};
  const CurveSummary c = aggregate(one);
  EXPECT_EQ(c.stderr_cum_regret[0], 0.0);
  EXPECT_TRUE(c.single_replication);
  EXPECT_THROW((void)aggregate(std::vector<RegretTrace>{}), std::invalid_argument);
  RegretTrace b;
  b.push(0.1);
  b.push(0.1);
  EXPECT_THROW((void)aggregate(std::vector<RegretTrace>{a, b}), std::invalid_argument);
}

TEST(Replication, LengthAndDeterminism) {
  EXPECT_EQ(run_replication(small(), fast(AgentKind::mtss), 1, 1).rounds(), 1u);
  for (auto p : {ProblemKind::semi_bandit, ProblemKind::cascade, ProblemKind::mnl}) {
    const auto a = run_replication(small(p), fast(AgentKind::mtss), 60, 9);
    const auto b = run_replication(small(p), fast(AgentKind::mtss), 60, 9);
    const auto c = run_replication(small(p), fast(AgentKind::mtss), 60, 10);
    EXPECT_EQ(a.cumulative, b.cumulative);
    EXPECT_NE(a.cumulative, c.cumulative);
  }
  EXPECT_THROW((void)run_replication(small(), fast(AgentKind::mtss), 0, 1), ConfigError);
}

TEST(Replication, MnlRoundAccountingIsExact) {
  for (std::int64_t T : {1, 7, 100, 333}) {
    ReplicationInfo info;
    const auto tr = run_replication(small(ProblemKind::mnl), fast(AgentKind::agnostic), T, 4, &info);
    EXPECT_EQ(static_cast<std::int64_t>(tr.rounds()), T);
    EXPECT_LE(info.decisions, T);
  }
}

TEST(Replication, ColdStartRotates) {
  ScenarioConfig s = small();
  s.cold_start = ColdStart{25, 5};
  ReplicationInfo info;
  const auto tr = run_replication(s, fast(AgentKind::mtss), 100, 2, &info);
  EXPECT_EQ(tr.rounds(), 100u);
  EXPECT_EQ(info.rotations, 3);
}

TEST(Replication, SameInstanceAcrossAgents) {
  ReplicationInfo a, b;
  (void)run_replication(small(), fast(AgentKind::mtss), 5, 3, &a);
  (void)run_replication(small(), fast(AgentKind::agnostic), 5, 3, &b);
  EXPECT_EQ(a.gamma_true, b.gamma_true);
}

TEST(Presets, ShapesMatchTheExperimentTable) {
  const auto& semi = preset("semi-6.1").scenario;
  EXPECT_EQ(semi.n_items, 3000u);
  EXPECT_EQ(semi.slate_size, 10u);
  const auto& cas = preset("cascade-6.1").scenario;
  EXPECT_EQ(cas.n_items, 1000u);
  EXPECT_EQ(cas.slate_size, 3u);
  const auto& mnl = preset("mnl-6.1").scenario;
  EXPECT_EQ(mnl.n_items, 1000u);
  EXPECT_EQ(mnl.slate_size, 5u);
  for (const auto& p : presets()) {
    EXPECT_EQ(p.scenario.dim, 5u);
    EXPECT_DOUBLE_EQ(p.scenario.gamma_prior_variance(), 0.2);
    EXPECT_NO_THROW(p.scenario.validate());
  }
  EXPECT_THROW((void)preset("nope"), ConfigError);
}

TEST(GridConfig, ParsesPresetsInlineAndDefaults) {
  const auto g = parse_grid_config(json::parse(R"({
    "scenario": [{"base": "semi-6.1-desk", "name": "tiny", "n_items": 30, "cold_start": {"period": 10, "delta_n": 3}},
                 {"name": "m", "problem": "mnl", "n_items": 20, "slate_size": 2, "dim": 3,
                  "source": {"type": "beta", "psi": 2, "link": "shifted"}}],
    "agents": ["mtss", {"kind": "agnostic", "name": "ag"}],
    "schedule": {"every": 25},
    "T": 10, "replications": 2, "seed_base": 5, "output_dir": "x"
  })"));
  ASSERT_EQ(g.scenarios.size(), 2u);
  EXPECT_EQ(g.scenarios[0].n_items, 30u);
  EXPECT_EQ(g.scenarios[0].slate_size, 5u);
  EXPECT_EQ(g.scenarios[0].cold_start->delta_n, 3u);
  EXPECT_EQ(g.scenarios[1].problem, ProblemKind::mnl);
  EXPECT_EQ(g.agents[1].label(), "ag");
  EXPECT_EQ(g.agents[0].schedule->period, 25);
  EXPECT_EQ(g.seed_base, 5u);

  const auto d = parse_grid_config(json::parse(R"({"scenario": "semi-6.1-desk"})"));
  EXPECT_EQ(d.T, 2000);
  EXPECT_EQ(d.replications, 20u);
  EXPECT_EQ(d.agents.size(), 4u);
}

TEST(GridConfig, RejectsBadConfigs) {
  for (const char* text : {R"([])", R"({"agents": ["mtss"]})", R"({"scenario": "nope"})",
                           R"({"scenario": "semi-6.1-desk", "T": 0})",
                           R"({"scenario": "semi-6.1-desk", "agents": ["ucb"]})",
                           R"({"scenario": "semi-6.1-desk", "agents": ["mtss", "mtss"]})",
                           R"({"scenario": "semi-6.1-desk", "colour": 1})",
                           R"({"scenario": {"base": "semi-6.1-desk", "slate_size": 500}})",
                           R"({"scenario": "semi-6.1-desk", "T": "many"})",
                           R"({"scenario": "semi-6.1-desk", "eb": {"grid": []}})"})
    EXPECT_THROW((void)parse_grid_config(json::parse(text)), ConfigError) << text;
}

TEST(Grid, WritesCurvesAndMetadata) {
  const fs::path out = tmpdir("grid");
  GridConfig g;
  g.scenarios = {small()};
  g.agents = {fast(AgentKind::mtss), fast(AgentKind::oracle)};
  g.T = 10;
  g.replications = 2;
  g.output_dir = out.string();
  const GridResult r = run_grid(g, 2);
  EXPECT_FALSE(r.any_failure());
  write_grid_outputs(g, r);
  const std::string csv = slurp(out / "small__mtss.csv");
  EXPECT_EQ(csv.rfind("round,mean_cum_regret,stderr_cum_regret,mean_inst_regret,n_replications\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  const json meta = json::parse(slurp(out / "metadata.json"));
  EXPECT_EQ(meta["cells"].size(), 2u);
  EXPECT_EQ(meta["version"], kVersion);
  EXPECT_TRUE(meta.contains("wall_seconds"));
}

TEST(Grid, CellIndependenceAndWorkerInvariance) {
  GridConfig g;
  g.scenarios = {small()};
  g.agents = {fast(AgentKind::mtss), fast(AgentKind::agnostic)};
  g.T = 30;
  g.replications = 3;
  const GridResult both = run_grid(g, 1);
  const GridResult both4 = run_grid(g, 4);
  g.agents = {fast(AgentKind::agnostic)};
  const GridResult one = run_grid(g, 1);
  auto bytes = [](const CellResult& c) {
    std::ostringstream ss;
    write_curve_csv(ss, *c.curve);
    return ss.str();
  };
  EXPECT_EQ(bytes(both.cells[1]), bytes(one.cells[0]));
  EXPECT_EQ(bytes(both.cells[0]), bytes(both4.cells[0]));
  EXPECT_EQ(bytes(both.cells[1]), bytes(both4.cells[1]));
}

TEST(Grid, FailuresAreRecordedPerCell) {
  GridConfig g;
  ScenarioConfig bad = small();
  bad.name = "bad";
  bad.catalog_csv = "/nonexistent/catalog.csv";
  g.scenarios = {small(), bad};
  g.agents = {fast(AgentKind::agnostic)};
  g.T = 5;
  g.replications = 2;
  const GridResult r = run_grid(g, 1);
  EXPECT_TRUE(r.any_failure());
  EXPECT_TRUE(r.cells[0].failures.empty());
  EXPECT_EQ(r.cells[1].failures.size(), 2u);
  EXPECT_FALSE(r.cells[1].curve.has_value());
}

TEST(Grid, CsvCatalogScenario) {
  const fs::path dir = tmpdir("csvcat");
  {
    std::ofstream out(dir / "cat.csv");
    out << "item_id,x0,x1,theta\n";
    for (int i = 0; i < 6; ++i) out << i << ",1," << 0.1 * i << "," << 0.2 * i << "\n";
  }
  ScenarioConfig s = small();
  s.n_items = 6;
  s.dim = 2;
  s.catalog_csv = (dir / "cat.csv").string();
  const auto tr = run_replication(s, fast(AgentKind::agnostic), 20, 1);
  EXPECT_EQ(tr.rounds(), 20u);
  EXPECT_THROW((void)run_replication(s, fast(AgentKind::oracle), 20, 1), ConfigError);
}

TEST(Cli, ExitCodesAndDryRun) {
  const fs::path dir = tmpdir("cli");
  const fs::path out = dir / "out";
  {
    std::ofstream cfg(dir / "ok.json");
    cfg << R"({"scenario": {"base": "semi-6.1-desk", "name": "c", "n_items": 15}, "agents": ["agnostic"],
               "T": 10, "replications": 2, "output_dir": ")" << out.string() << "\"}";
    std::ofstream bad(dir / "bad.json");
    bad << R"({"scenario": "semi-6.1-desk", "T": -1})";
    std::ofstream fail(dir / "fail.json");
    fail << R"({"scenario": {"base": "semi-6.1-desk", "name": "f", "catalog_csv": "/nonexistent.csv"},
                "agents": ["agnostic"], "T": 5, "replications": 1, "output_dir": ")" << (dir / "fail").string() << "\"}";
  }
  EXPECT_EQ(run_cli("presets list"), 0);
  EXPECT_EQ(run_cli("validate --config " + (dir / "ok.json").string()), 0);
  EXPECT_EQ(run_cli("validate --config " + (dir / "bad.json").string()), 1);
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string()), 1);
  EXPECT_EQ(run_cli("run --dry-run --config " + (dir / "ok.json").string()), 0);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run_cli("run -q --workers 2 --config " + (dir / "ok.json").string()), 0);
  EXPECT_TRUE(fs::exists(out / "c__agnostic.csv"));
  EXPECT_EQ(run_cli("run -q --config " + (dir / "fail.json").string()), 2);
  EXPECT_EQ(run_cli("bogus"), 1);
}
