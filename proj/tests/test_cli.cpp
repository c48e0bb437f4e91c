#include "radonlab/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace radonlab;
using namespace radonlab::cli;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("radonlab_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_args(std::vector<std::string> args) {
    args.insert(args.begin(), "radonlab");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run(static_cast<int>(argv.size()), argv.data());
}
}  // namespace

TEST(Config, ParsesSectionsCommentsAndLists) {
    auto c = Config::parse("top = 1\n# comment\n[grid]\nP = 17  # trailing\nL = 3/2\n[params]\np = 3/2, 2, inf\n");
    EXPECT_EQ(c.require("top"), "1");
    EXPECT_EQ(c.integer("grid.P", 0), 17);
    EXPECT_DOUBLE_EQ(c.num("grid.L", 0), 1.5);
    auto p = c.list("params.p", {});
    ASSERT_EQ(p.size(), 3u);
    EXPECT_DOUBLE_EQ(p[0], 1.5);
    EXPECT_TRUE(std::isinf(p[2]));
    EXPECT_EQ(c.str("missing.key", "d"), "d");
    EXPECT_EQ(c.ints("missing.key", {4}), (std::vector<int>{4}));
}

TEST(Config, Errors) {
    EXPECT_THROW(Config::parse("[grid\n"), UsageError);
    EXPECT_THROW(Config::parse("novalue\n"), UsageError);
    EXPECT_THROW(Config::parse(" = 3\n"), UsageError);
    auto c = Config::parse("[a]\nx = abc\ny = 1.5\nz =\n");
    EXPECT_THROW(c.num("a.x", 0), UsageError);
    EXPECT_THROW(c.integer("a.y", 0), UsageError);
    EXPECT_THROW(c.require("a.z"), UsageError);
    EXPECT_THROW(c.require("a.w"), UsageError);
    EXPECT_THROW(Config::load("/nonexistent/radonlab.cfg"), UsageError);
}

TEST(Report, CsvRoundTripDropsRuntime) {
    RunReport r;
    r.add(1, "a", true, 0.25, 0.5, 3.0);
    r.add(2, "b", false, 2.0, 1.0);
    r.info(7, "c", 0.125);
    EXPECT_TRUE(r.failed());
    auto back = RunReport::from_csv(r.csv());
    ASSERT_EQ(back.checks.size(), 3u);
    EXPECT_EQ(back.checks[0].status, "pass");
    EXPECT_EQ(back.checks[1].status, "fail");
    EXPECT_EQ(back.checks[2].status, "info");
    EXPECT_DOUBLE_EQ(back.checks[0].value, 0.25);
    EXPECT_EQ(back.checks[0].runtime, 0.0);
    EXPECT_EQ(back.csv(), r.csv());
    EXPECT_THROW(RunReport::from_csv("h\n1,2\n"), InputError);
}

TEST(Scenario, BuiltInScenarios) {
    auto h = make_scenario(Config::parse("[scenario]\nname = heisenberg\n[grid]\nP = 9\n"));
    EXPECT_EQ(h.grid.n, 3);
    EXPECT_EQ(h.nu, 2);
    EXPECT_EQ(h.blocks.size(), 2u);
    auto t = make_scenario(Config::parse("[scenario]\nname = translation\n[grid]\nP = 65\n"), 1);
    EXPECT_EQ(t.grid.P, 129);
    auto tr = make_scenario(Config::parse("[scenario]\nname = trivial\n[params]\nnu = 2\nmu0 = 1\n"));
    EXPECT_EQ(tr.e.size(), 2u);
    EXPECT_EQ(tr.mu0, 1);
    auto x = make_scenario(Config::parse("[scenario]\nname = xst\n"));
    EXPECT_EQ(x.gamma.N, 2);
    EXPECT_THROW(make_scenario(Config::parse("[scenario]\nname = nope\n")), UsageError);
    EXPECT_THROW(make_scenario(Config::parse("[scenario]\nname = trivial\n[params]\nmu0 = 3\n")), UsageError);
    EXPECT_THROW(make_scenario(Config::parse("[scenario]\nname = trivial\n[params]\na = -1\n")), UsageError);
}

TEST(Scenario, KernelForTrivialScenario) {
    auto s = make_scenario(Config::parse("[scenario]\nname = trivial\n[params]\nnu = 2\n"));
    auto K = scenario_kernel(Config{}, s, 2);
    EXPECT_EQ(K.pieces.size(), 9u);
}

TEST(Run, UsageErrorsExitTwo) {
    EXPECT_EQ(run_args({}), 2);
    EXPECT_EQ(run_args({"ball"}), 2);
    auto dir = scratch("usage");
    auto cfg = (dir / "bad.cfg").string();
    write_file(cfg, "[scenario]\nname = nope\n");
    EXPECT_EQ(run_args({"--config", cfg, "--out", dir.string(), "apply"}), 2);
    EXPECT_EQ(run_args({"--config", cfg, "--out", dir.string(), "frobnicate"}), 2);
    EXPECT_EQ(run_args({"--config", cfg, "--set", "noequals", "ball"}), 2);
}

TEST(Run, BallWritesCsvAndPasses) {
    auto dir = scratch("ball");
    auto cfg = (dir / "ball.cfg").string();
    write_file(cfg, "[scenario]\nname = euclidean\n[ball]\ndelta = 1/2\nsamples = 2000\ntol = 0.3\n");
    EXPECT_EQ(run_args({"--config", cfg, "--out", dir.string(), "--seed", "3", "ball"}), 0);
    EXPECT_TRUE(fs::exists(dir / "ball.csv"));
    EXPECT_TRUE(fs::exists(dir / "doubling.csv"));
    auto rep = RunReport::from_csv(read_file((dir / "report_ball.csv").string()));
    EXPECT_FALSE(rep.failed());
}

TEST(Run, ThresholdFailureExitsFive) {
    auto dir = scratch("fail");
    auto cfg = (dir / "ball.cfg").string();
    write_file(cfg, "[scenario]\nname = euclidean\n[ball]\ndelta = 1/2\nsamples = 1000\ntol = -1\n");
    EXPECT_EQ(run_args({"--config", cfg, "--out", dir.string(), "ball"}), 5);
    EXPECT_EQ(run_args({"--out", dir.string(), "report"}), 5);
    EXPECT_TRUE(fs::exists(dir / "report.csv"));
}

TEST(Run, ApplyAndMaximalOnTrivialScenario) {
    auto dir = scratch("apply");
    auto cfg = (dir / "t.cfg").string();
    write_file(cfg, "[scenario]\nname = trivial\n[grid]\nP = 33\n[apply]\nop = D\nj = 1\n[params]\nJ = 2\n");
    EXPECT_EQ(run_args({"--config", cfg, "--out", dir.string(), "apply"}), 0);
    auto g = ops::GridFunction::from_csv(read_file((dir / "apply.csv").string()), ops::Grid(1, 2.0, 33));
    EXPECT_EQ(g.grid().size(), 33);
    EXPECT_EQ(run_args({"--config", cfg, "--out", dir.string(), "--set", "apply.op=Q", "apply"}), 2);
    EXPECT_EQ(run_args({"--config", cfg, "--out", dir.string(), "--set", "maximal.probes=2", "maximal"}), 0);
    EXPECT_TRUE(fs::exists(dir / "maximal.csv"));
}

TEST(Run, SeedMakesOutputsReproducible) {
    auto dir = scratch("seed");
    auto cfg = (dir / "t.cfg").string();
    write_file(cfg, "[scenario]\nname = trivial\n[grid]\nP = 33\n[apply]\nop = A\nj = 1\n");
    ASSERT_EQ(run_args({"--config", cfg, "--out", dir.string(), "--seed", "9", "apply"}), 0);
    auto first = read_file((dir / "apply.csv").string());
    ASSERT_EQ(run_args({"--config", cfg, "--out", dir.string(), "--seed", "9", "apply"}), 0);
    EXPECT_EQ(read_file((dir / "apply.csv").string()), first);
}
