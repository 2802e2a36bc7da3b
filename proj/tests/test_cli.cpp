#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "msgamlss_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(MSGAMLSS_CLI) + " " + args + " >" + (workdir() / "stdout.txt").string() +
                            " 2>" + (workdir() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

std::vector<std::string> lines(const std::string& file) {
    std::ifstream in(file);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

// simulate + fit once for the whole suite
class Pipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        ASSERT_EQ(run("simulate --paper-dgp --T 600 --seed 4 --out " + path("sim.csv")), 0);
        ASSERT_EQ(run("fit --data " + path("sim.csv") +
                      " --response y --states 2 --mu 'smooth(x, k=6)' --sigma 'smooth(x, k=6)'"
                      " --transition 'smooth(z, k=6)' --out " + path("fit")),
                  0);
    }
};

}  // namespace

TEST_F(Pipeline, SimulateWritesTruth) {
    const auto rows = lines(path("sim.csv"));
    ASSERT_EQ(rows.size(), 601u);
    EXPECT_EQ(rows[0], "t,y,x,z,true_state");
}

TEST_F(Pipeline, FitWritesReportAndModel) {
    std::ifstream in(path("fit/fit_report.json"));
    const auto report = nlohmann::json::parse(in);
    EXPECT_EQ(report.at("states"), 2);
    EXPECT_EQ(report.at("n_obs"), 600);
    EXPECT_TRUE(fs::exists(path("fit/model.json")));
}

TEST_F(Pipeline, DecodeOneRowPerObservation) {
    ASSERT_EQ(run("decode --model " + path("fit/model.json") + " --data " + path("sim.csv") + " --out " +
                  path("dec.csv")),
              0);
    const auto rows = lines(path("dec.csv"));
    ASSERT_EQ(rows.size(), 601u);
    EXPECT_EQ(rows[0], "time,y,state");
}

TEST_F(Pipeline, ResidualsAndSummary) {
    ASSERT_EQ(run("residuals --model " + path("fit/model.json") + " --data " + path("sim.csv") + " --out " +
                  path("res.csv")),
              0);
    EXPECT_EQ(lines(path("res.csv"))[0], "time,y,pit,residual");
    std::ifstream in(path("res_summary.json"));
    const auto summary = nlohmann::json::parse(in);
    EXPECT_EQ(summary.at("n"), 600);
    EXPECT_EQ(summary.at("acf").size(), 30u);
    EXPECT_GT(summary.at("ks_p_value").get<double>(), 0.0);
}

TEST_F(Pipeline, CurveProducts) {
    const std::string model = " --model " + path("fit/model.json");
    ASSERT_EQ(run("effects" + model + " --covariate x --grid-size 11 --bands --draws 100 --quantiles 0.1 0.9 --out " +
                  path("eff.csv")),
              0);
    const auto eff = lines(path("eff.csv"));
    EXPECT_EQ(eff[0], "grid,state,parameter,estimate,lower,upper");
    // 11 points x 2 states x (mu, sigma, q0.1, q0.9)
    EXPECT_EQ(eff.size(), 1u + 11 * 2 * 4);

    ASSERT_EQ(run("transitions" + model + " --grid-size 5 --out " + path("tr.csv")), 0);
    const auto tr = lines(path("tr.csv"));
    EXPECT_EQ(tr[0], "grid,from,to,estimate");
    EXPECT_EQ(tr.size(), 1u + 5 * 4);

    ASSERT_EQ(run("stationary" + model + " --grid-size 5 --bands --draws 50 --out " + path("st.csv")), 0);
    const auto st = lines(path("st.csv"));
    EXPECT_EQ(st[0], "grid,state,estimate,lower,upper,dropped");
    EXPECT_EQ(st.size(), 1u + 5 * 2);
}

TEST_F(Pipeline, ExitCodes) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("decode --model " + path("nope.json") + " --data " + path("sim.csv")), 2);
    EXPECT_EQ(run("effects --model " + path("fit/model.json") + " --covariate w"), 2);
    EXPECT_EQ(run("effects --model " + path("fit/model.json") + " --covariate x --grid-min 5 --grid-max 6 --out " +
                  path("x.csv")),
              3);
    // a numerically impossible fit: zero-variance response
    {
        std::ofstream flat(path("flat.csv"));
        flat << "y,x\n";
        for (int t = 0; t < 50; ++t) flat << "1.0," << t * 0.01 << "\n";
    }
    const int code = run("fit --data " + path("flat.csv") + " --response y --states 2 --mu 'linear(x)' --out " +
                         path("flatfit"));
    EXPECT_TRUE(code == 0 || code == 3) << code;
}

TEST_F(Pipeline, FitFromConfigFile) {
    {
        std::ofstream cfg(path("run.json"));
        cfg << R"js({"data": "sim.csv", "response": "y", "family": "normal", "states": 2,
                   "parameters": {"mu": ["smooth(x, k=5)"], "sigma": []},
                   "transitions": ["linear(z)"], "initial": "stationary",
                   "optimizer": {"max_outer_iterations": 30}})js";
    }
    // relative data path resolves next to the config
    ASSERT_EQ(run("fit --config " + path("run.json") + " --out " + path("cfgfit")), 0);
    std::ifstream in(path("cfgfit/fit_report.json"));
    const auto report = nlohmann::json::parse(in);
    EXPECT_TRUE(report.at("coefficients").contains("gamma[1,2]:z"));
    // --data overrides the config, other model flags conflict with it
    ASSERT_EQ(run("fit --config " + path("run.json") + " --data " + path("sim.csv") + " --out " + path("cfgfit2")), 0);
    EXPECT_EQ(run("fit --config " + path("run.json") + " --states 3"), 2);
    {
        std::ofstream bad(path("bad.json"));
        bad << R"js({"data": "sim.csv", "parameters": {"mu": ["cubic(x)"]}})js";
    }
    EXPECT_EQ(run("fit --config " + path("bad.json") + " --out " + path("badfit")), 2);
}
