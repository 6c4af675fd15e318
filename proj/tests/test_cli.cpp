#include "cli/commands.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace degensemi;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("degensemi_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

cli::Context context(const std::string& ini, const std::string& name) {
    cli::Context ctx;
    ctx.config = cli::parse_config(ini);
    ctx.seed = ctx.config.sweep.seed;
    ctx.out = scratch(name);
    static std::ostringstream sink;
    ctx.log = &sink;
    return ctx;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Data rows of a CSV written by CsvWriter, split into cells.
std::vector<std::vector<std::string>> rows(const fs::path& p, std::vector<std::string>* header = nullptr) {
    std::ifstream in(p);
    std::string line;
    std::vector<std::vector<std::string>> out;
    bool seen_header = false;
    while (std::getline(in, line)) {
        if (line.rfind("#", 0) == 0) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!seen_header) {
            seen_header = true;
            if (header) *header = cells;
            continue;
        }
        out.push_back(cells);
    }
    return out;
}

const char* kSmallVerify = R"(
[problem]
d = 2
Gamma = linear:1,0.1,0
drift = sqrt:1,0.5
[discretization]
oned_N = 24
tensor_N = 12
sector_N = 8
perturb_N = 12
freeze_N = 12
corner_m = 8
[sweep]
mags = 1, 16, 256
probes = 8
trials = 50
boundary_N = 24
boundary_probes = 8
interp_levels = 3
)";

int run_tool(const std::string& args) {
    const int status = std::system((std::string(DEGENSEMI_TOOL) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
    const auto c = cli::parse_config("[problem]\nd = 3\nweight = x(1-x)\n[sweep]\nseed = 0xBEEF\nfreeze_lambda = 300\n");
    EXPECT_EQ(c.problem.d, 3);
    EXPECT_TRUE(c.problem.quadratic_weight);
    EXPECT_EQ(c.sweep.seed, 0xBEEFu);
    EXPECT_EQ(c.sweep.freeze_lambda, 300.0);
    EXPECT_EQ(c.discretization.N, 48);
    EXPECT_EQ(cli::parse_seed("f001"), 0xF001u);
    EXPECT_NE(c.hash(), cli::parse_config("[problem]\nd = 3\n").hash());
}

TEST(Config, MalformedInputNamesLineOrField) {
    auto message = [](const std::string& ini) {
        try {
            (void)cli::parse_config(ini);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    EXPECT_NE(message("[problem]\nd = 2\nthis line is broken\n").find("line 3"), std::string::npos);
    EXPECT_NE(message("[problem]\nd = two\n").find("problem.d"), std::string::npos);
    EXPECT_NE(message("[problem]\ncolour = red\n").find("problem.colour"), std::string::npos);
    EXPECT_NE(message("[nonsense]\nk = 1\n").find("nonsense"), std::string::npos);
    EXPECT_NE(message("[sweep]\nprobes = 0\n").find("sweep.probes"), std::string::npos);
    EXPECT_NE(message("[problem]\nweight = x^2\n").find("problem.weight"), std::string::npos);
    EXPECT_THROW((void)cli::make_field(cli::parse_config("[problem]\ndrift = wavy:1\n").problem), ConfigError);
    EXPECT_THROW((void)cli::make_field(cli::parse_config("[problem]\nGamma = constant:-1\n").problem), ConfigError);
    EXPECT_THROW((void)cli::parse_seed("xyz"), ConfigError);
}

TEST(Oracle, ExampleRowsOnDefaultAxes) {
    const auto ctx = context("[sweep]\noracle_thetas = 0, 1.5707963267948966\noracle_mags = 1, 16, 100\n", "oracle");
    EXPECT_EQ(cli::cmd_oracle(ctx), cli::kPass);
    std::vector<std::string> header;
    const auto sweep = rows(ctx.out / "oracle_sweep.csv", &header);
    EXPECT_EQ(header, (std::vector<std::string>{"theta", "mag", "bound", "measured", "ratio", "pass"}));
    const auto detail = rows(ctx.out / "oracle_detail.csv");
    ASSERT_EQ(sweep.size(), detail.size());
    bool saw_i = false, saw_100 = false;
    for (std::size_t k = 0; k < detail.size(); ++k) {
        const auto& r = detail[k];
        if (r[0] != "resolvent") continue;
        const double theta = std::stod(r[3]), mag = std::stod(r[4]), measured = std::stod(r[6]);
        if (std::abs(theta - kPi / 2) < 1e-9 && mag == 1.0) {
            EXPECT_NEAR(std::stod(r[5]), 3.0 / (2.0 * std::cos(kPi / 4)), 1e-9);
            EXPECT_LE(measured, std::stod(r[5]));
            saw_i = true;
        }
        if (theta == 0.0 && mag == 100.0) {
            EXPECT_NEAR(measured, 0.01, 1e-14);
            saw_100 = true;
        }
    }
    EXPECT_TRUE(saw_i && saw_100);
    bool saw_16 = false;
    for (const auto& r : rows(ctx.out / "oracle_identities.csv"))
        if (std::stod(r[0]) == 0.0 && std::stod(r[1]) == 16.0 && std::stod(r[2]) == 1.0 && std::stod(r[3]) == 1.0) {
            EXPECT_LE(std::stod(r[6]), 0.25);
            saw_16 = true;
        }
    EXPECT_TRUE(saw_16);
}

TEST(Oracle, EmptySweepWritesHeaderOnly) {
    const auto ctx = context("[sweep]\noracle_mags =\n", "oracle_empty");
    EXPECT_EQ(cli::cmd_oracle(ctx), cli::kPass);
    std::vector<std::string> header;
    EXPECT_TRUE(rows(ctx.out / "oracle_sweep.csv", &header).empty());
    EXPECT_EQ(header.size(), 6u);
}

TEST(Verify, TensorRejectsOneDimension) {
    const auto ctx = context("[problem]\nd = 1\n", "tensor_d1");
    EXPECT_THROW((void)cli::cmd_verify(ctx, "tensor"), ConfigError);
    EXPECT_THROW((void)cli::cmd_verify(ctx, "all"), ConfigError);
    EXPECT_THROW((void)cli::cmd_verify(ctx, "bogus"), ConfigError);
}

TEST(Verify, SmallAllIsDeterministic) {
    auto a = context(kSmallVerify, "verify_a");
    auto b = context(kSmallVerify, "verify_b");
    b.jobs = 3;
    const int ca = cli::cmd_verify(a, "all");
    EXPECT_EQ(ca, cli::cmd_verify(b, "all"));
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a.out)) {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(b.out / e.path().filename())) << e.path().filename();
    }
    EXPECT_GE(files, 19u);
    const auto verdicts = slurp(a.out / "verdicts.txt");
    for (const char* id : {"oned PASS resolvent", "tensor PASS tensor-resolvent", "perturb PASS perturbation",
                           "freeze PASS freezing", "corners PASS corner-gluing"})
        EXPECT_NE(verdicts.find(id), std::string::npos) << id << "\n" << verdicts;
    EXPECT_EQ(ca, cli::kPass) << verdicts;
}

TEST(Verify, ContractionFailureIsAnEstimateFailure) {
    auto ctx = context(std::string(kSmallVerify) + "freeze_lambda = 2\n", "freeze_small");
    EXPECT_EQ(cli::cmd_verify(ctx, "freeze"), cli::kEstimateFail);
    EXPECT_NE(slurp(ctx.out / "verdicts.txt").find("FAIL freezing"), std::string::npos);
}

TEST(Evolve, ConstantDatumStaysConstant) {
    const auto ctx = context("[problem]\nd = 2\nGamma = linear:1,0.5,0\ndrift = sqrt:1,0.5\n[discretization]\nN = 16\n"
                             "[evolve]\ndatum = constant:1\ntimes = 0.5, 0, 0.01\n",
                             "evolve_one");
    EXPECT_EQ(cli::cmd_evolve(ctx), cli::kPass);
    for (const char* snap : {"snapshot_000.csv", "snapshot_001.csv", "snapshot_002.csv"}) {
        const auto r = rows(ctx.out / snap);
        ASSERT_EQ(r.size(), 256u);
        for (const auto& cells : r) EXPECT_NEAR(std::stod(cells[2]), 1.0, 1e-12) << snap;
    }
    const auto s = rows(ctx.out / "evolve_summary.csv");
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(std::stod(s[0][0]), 0.0);
    EXPECT_EQ(std::stod(s[2][0]), 0.5);
}

TEST(Evolve, TimeZeroIsTheDatum) {
    const auto ctx = context("[problem]\nd = 1\n[discretization]\nN = 40\n[evolve]\ndatum = bump:0.4,0.1\ntimes = 0, 0.1\n"
                             "[output]\nplots = true\n",
                             "evolve_zero");
    EXPECT_EQ(cli::cmd_evolve(ctx), cli::kPass);
    const auto r = rows(ctx.out / "snapshot_000.csv");
    ASSERT_EQ(r.size(), 40u);
    for (const auto& cells : r) {
        const double x = std::stod(cells[0]);
        EXPECT_NEAR(std::stod(cells[1]), std::exp(-(x - 0.4) * (x - 0.4) / 0.02), 1e-11);
    }
    EXPECT_TRUE(fs::exists(ctx.out / "snapshot_001.svg"));
}

TEST(Evolve, CenterShiftFollowsDrift) {
    // u(t, x) = E_x u₀(X_t): a positive drift carries the bump's preimage to smaller x.
    auto center = [](double b) {
        std::ostringstream ini;
        ini << "[problem]\nd = 1\ndrift = constant:" << b << "\n[discretization]\nN = 80\n[evolve]\ndatum = bump:0.5,0.05\n"
            << "times = 0, 0.05\nscheme = expm\n";
        const auto ctx = context(ini.str(), "evolve_center");
        EXPECT_EQ(cli::cmd_evolve(ctx), cli::kPass);
        const auto s = rows(ctx.out / "evolve_summary.csv");
        return std::stod(s[1][4]) - std::stod(s[0][4]);
    };
    const double still = center(0.0);
    EXPECT_LT(center(1.0) - still, 0.0);
    EXPECT_LT(center(2.0) - still, center(1.0) - still);
}

TEST(Binary, ExitCodesAndOutputOverride) {
    const fs::path dir = scratch("binary");
    const fs::path bad = dir / "bad.ini", good = dir / "good.ini";
    std::ofstream(bad) << "[problem]\nd = 2\nbroken\n";
    std::ofstream(good) << "[sweep]\noracle_thetas = 0\noracle_mags = 16\noracle_drifts = 0\noracle_gammas = 1\n";
    EXPECT_EQ(run_tool("oracle --config " + bad.string()), 1);
    EXPECT_EQ(run_tool("oracle"), 1);
    EXPECT_EQ(run_tool("frobnicate --config " + good.string()), 1);
    EXPECT_EQ(run_tool("oracle --config " + good.string() + " --seed nothex"), 1);
    EXPECT_EQ(run_tool("verify tensor --config " + good.string() + " --out " + (dir / "t").string()), 0);
    const std::string env = "DEGENSEMI_OUT=" + (dir / "env").string() + " ";
    const int status = std::system((env + DEGENSEMI_TOOL + " oracle --config " + good.string() + " --out " + (dir / "flag").string() +
                                    " --seed 0x2A >/dev/null 2>&1")
                                       .c_str());
    EXPECT_EQ(WEXITSTATUS(status), 0);
    EXPECT_TRUE(fs::exists(dir / "env" / "oracle_sweep.csv"));
    EXPECT_FALSE(fs::exists(dir / "flag"));
    EXPECT_NE(slurp(dir / "env" / "oracle_sweep.csv").find("# seed=0x2a"), std::string::npos);
}
