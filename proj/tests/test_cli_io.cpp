#include "vhi/cli_io.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace vhi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("vhi-test-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

std::string slurp(const std::string& file) {
    std::ifstream f(file, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<std::vector<double>> read_csv(const std::string& file, std::string* header = nullptr) {
    std::ifstream f(file);
    std::string line;
    std::getline(f, line);
    if (header) *header = line;
    std::vector<std::vector<double>> rows;
    while (std::getline(f, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(parse_num(cell, file));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

TEST(Numbers, SeventeenDigitsRoundTrip) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-300, 300);
    for (int i = 0; i < 10000; ++i) {
        const double x = std::ldexp(U(rng), static_cast<int>(U(rng) / 3));
        EXPECT_EQ(parse_num(fmt_num(x), "t"), x);
    }
    EXPECT_EQ(parse_num("+2.5", "t"), 2.5);
    EXPECT_THROW(parse_num("nan", "t"), config_error);
    EXPECT_THROW(parse_num("1.0x", "t"), config_error);
    EXPECT_THROW(parse_num("inf", "t"), config_error);
}

TEST(Config, RoundTripAllPresets) {
    for (const auto& name : preset_names()) {
        const RunConfig c = preset(name);
        EXPECT_EQ(parse_config_string(serialize_config(c)), c) << name;
    }
    RunConfig c;
    set_config_value(c, "material.relax_time", "0.123456789012345678");
    set_config_value(c, "contact.damped_kind", "absolute");
    set_config_value(c, "output.verify", "false");
    EXPECT_EQ(parse_config_string(serialize_config(c)), c);
}

TEST(Config, PresetLineSeedsValues) {
    const RunConfig c = parse_config_string("preset = table1\n[scheme]\ndt = 5e-4\n");
    RunConfig want = preset("table1");
    want.scheme.dt = 5e-4;
    EXPECT_EQ(c, want);
}

TEST(Config, UnknownKeyCitesLine) {
    std::istringstream in("[mesh]\nnx = 4\n\n[contact]\nfrobnicate = 1\n");
    try {
        parse_config(in, "case.cfg");
        FAIL() << "accepted an unknown key";
    } catch (const config_error& e) {
        const std::string m = e.what();
        EXPECT_NE(m.find("case.cfg:5"), std::string::npos) << m;
        EXPECT_NE(m.find("frobnicate"), std::string::npos) << m;
    }
    EXPECT_THROW(parse_config_string("[nosuch]\nx = 1\n"), config_error);
    EXPECT_THROW(parse_config_string("[scheme]\nmode = sideways\n"), config_error);
    EXPECT_THROW(parse_config_string("[scheme]\ndt = 1e-3\npreset = table1\n"), config_error);
    EXPECT_THROW(parse_config_string("[scheme]\ndt 1e-3\n"), config_error);
    EXPECT_THROW(set_config_value(*std::make_unique<RunConfig>(), "scheme.nope", "1"), config_error);
}

TEST(Run, FrictionlessSmoke) {
    TempDir d("frictionless");
    RunConfig c = preset("frictionless");
    c.output.dir = d.str("out");
    std::ostringstream log, err;
    EXPECT_EQ(cmd_run(c, log, err), 0) << err.str();
    std::string header;
    const auto rows = read_csv(d.str("out/trajectory.csv"), &header);
    const auto s = build_scenario(c);
    EXPECT_EQ(static_cast<int>(rows.size()), s.scheme.n_steps() + 1);
    const std::size_t cols = 1 + 2 * s.prob.n_dof + s.prob.n_contact();
    for (const auto& r : rows) EXPECT_EQ(r.size(), cols);
    EXPECT_EQ(header.substr(0, 5), "t,w0,");
    EXPECT_NE(header.find(",u0,"), std::string::npos);
    EXPECT_NE(header.find(",alpha0"), std::string::npos);
    EXPECT_EQ(rows[1][0], c.scheme.dt);
}

TEST(Run, NonIntegralHorizonIsAnErrorNamingTheKey) {
    TempDir d("badT");
    RunConfig c = preset("chain-1d");
    c.scheme.T = 0.1005;
    c.output.dir = d.str("out");
    std::ostringstream log, err;
    EXPECT_EQ(cmd_run(c, log, err), 1);
    EXPECT_NE(err.str().find("scheme.T"), std::string::npos) << err.str();
    EXPECT_FALSE(fs::exists(d.str("out/trajectory.csv")));
}

TEST(Run, NonConvergenceExitsTwo) {
    TempDir d("maxouter");
    RunConfig c = preset("chain-1d");
    c.scheme.max_outer = 2;
    c.output.dir = d.str("out");
    std::ostringstream log, err;
    EXPECT_EQ(cmd_run(c, log, err), 2);
    EXPECT_NE(slurp(d.str("out/report.txt")).find("converged = false"), std::string::npos);
}

TEST(Run, Table1ReproducesByteForByte) {
    TempDir d("table1");
    RunConfig c = preset("table1");
    std::ostringstream log, err;
    c.output.dir = d.str("a");
    ASSERT_EQ(cmd_run(c, log, err), 0) << err.str();
    c.output.dir = d.str("b");
    ASSERT_EQ(cmd_run(c, log, err), 0);
    for (const char* f : {"trajectory.csv", "report.txt"})
        EXPECT_EQ(slurp(d.str(std::string("a/") + f)), slurp(d.str(std::string("b/") + f))) << f;
    const std::string rep = slurp(d.str("a/report.txt"));
    EXPECT_NE(rep.find("\nratios = "), std::string::npos);
    EXPECT_NE(rep.find("\nmargin.abstract = "), std::string::npos);
    EXPECT_NE(rep.find("\nmargin.rsf-compliance = "), std::string::npos);
    EXPECT_NE(err.str().find("warning: smallness condition"), std::string::npos);
}

TEST(Run, PlainDecimalColumns) {
    TempDir d("locale");
    RunConfig c = preset("frictionless");
    c.output.dir = d.str("out");
    std::ostringstream log, err;
    ASSERT_EQ(cmd_run(c, log, err), 0);
    const std::string traj = slurp(d.str("out/trajectory.csv"));
    EXPECT_EQ(traj.find(' '), std::string::npos);
    EXPECT_NE(traj.find("0.001,"), std::string::npos);
}

TEST(Curves, SinglePointIsTheBasePoint) {
    const RsfParams p = RsfParams::table1();
    const auto c = rsf_curves(p, p.alpha0, p.alpha0, 1, 1e-9);
    ASSERT_EQ(c.G.size(), 1u);
    ASSERT_EQ(c.mu.size(), 1u);
    EXPECT_NEAR(c.G[0].first_order, c.G[0].exact, 1e-14 * std::abs(c.G[0].exact));
    EXPECT_NEAR(c.mu[0].first_order, c.mu[0].exact, 1e-14 * std::abs(c.mu[0].exact));
    EXPECT_THROW(rsf_curves(p, 1, 0, 3, 1e-9), config_error);
    EXPECT_THROW(rsf_curves(p, 0, 1, 0, 1e-9), config_error);
}

TEST(Curves, EmittedDataAreMonotoneAndQuadraticNearBase) {
    TempDir d("curves");
    const RsfParams p = RsfParams::table1();
    std::ostringstream log, err;
    ASSERT_EQ(cmd_rsf_curves(p, p.alpha0 - 1, p.alpha0 + 1, 401, 1e-9, d.str(), log, err), 0) << err.str();
    for (const char* file : {"rsf_G.csv", "rsf_mu.csv"}) {
        std::string header;
        const auto rows = read_csv(d.str(file), &header);
        EXPECT_EQ(header, "alpha,exact,first_order");
        ASSERT_EQ(rows.size(), 401u);
        if (std::string(file) == "rsf_G.csv") {
            for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i][1], rows[i - 1][1]) << i;
        }
        const auto& mid = rows[200];
        EXPECT_NEAR(mid[0], p.alpha0, 1e-14 * std::abs(p.alpha0));
        EXPECT_NEAR(mid[2], mid[1], 1e-14 * std::abs(mid[1])) << file;
        std::vector<double> x, y;
        for (const auto& r : rows) {
            const double da = std::abs(r[0] - p.alpha0);
            if (da >= 1e-4 && da <= 1e-1) {
                x.push_back(da);
                y.push_back(std::abs(r[1] - r[2]));
            }
        }
        ASSERT_GE(x.size(), 10u);
        EXPECT_NEAR(testutil::loglog_slope(x, y), 2.0, 0.1) << file;
    }
}

TEST(Check, FrictionlessConditionsHold) {
    TempDir d("check");
    RunConfig c = preset("frictionless");
    c.output.dir = d.str("out");
    std::ostringstream log, err;
    EXPECT_EQ(cmd_check(c, log, err, 2000), 0) << err.str();
    EXPECT_EQ(err.str(), "");
    const std::string txt = slurp(d.str("out/conditions.txt"));
    EXPECT_NE(txt.find("[abstract]"), std::string::npos);
    EXPECT_EQ(txt.find("holds = false"), std::string::npos);
    EXPECT_NE(txt.find("[hypotheses]"), std::string::npos);
}

TEST(Check, FailingConditionWarnsButSucceeds) {
    TempDir d("check-fail");
    RunConfig c = preset("chain-1d");
    c.material.visc_modulus = 1e-3;   // m_A far below the friction side
    c.output.dir = d.str("out");
    std::ostringstream log, err;
    EXPECT_EQ(cmd_check(c, log, err, 2000), 0);
    EXPECT_NE(err.str().find("warning: condition"), std::string::npos);
    EXPECT_NE(slurp(d.str("out/conditions.txt")).find("holds = false"), std::string::npos);
}

TEST(FlowMapCmd, ThreeRowsNonincreasing) {
    TempDir d("flowmap");
    RunConfig c = preset("chain-1d");
    c.output.dir = d.str("out");
    std::ostringstream log, err;
    ASSERT_EQ(cmd_flowmap(c, {1e-2, 1e-3, 1e-4}, log, err), 0) << err.str();
    const auto rows = read_csv(d.str("out/flowmap.csv"));
    ASSERT_EQ(rows.size(), 3u);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i][1], rows[i - 1][1]);
    EXPECT_NE(log.str().find("monotone: yes"), std::string::npos);
}

TEST(FlowMapCmd, BadLadderIsAnError) {
    TempDir d("flowmap-bad");
    RunConfig c = preset("frictionless");
    c.output.dir = d.str("out");
    std::ostringstream log, err;
    EXPECT_EQ(cmd_flowmap(c, {1e-2, 1e-3}, log, err), 1);
    EXPECT_NE(err.str().find("ladder"), std::string::npos);
}
