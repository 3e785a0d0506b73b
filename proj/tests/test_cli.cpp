#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowtomo/io.hpp"
#include "flowtomo/png.hpp"

using namespace flowtomo;

namespace {

struct CliRun {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    static fs::path root() { return fs::absolute("cli_work"); }

    static void SetUpTestSuite() {
        fs::remove_all(root());
        fs::create_directories(root());
    }

    CliRun run(const std::string& args) const {
        const fs::path o = root() / "stdout.txt", e = root() / "stderr.txt";
        const std::string cmd = std::string(FLOWTOMO_CLI_PATH) + " " + args + " > " + o.string() + " 2> " + e.string();
        const int status = std::system(cmd.c_str());
        CliRun r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(o);
        r.err = slurp(e);
        return r;
    }

    std::string p(const std::string& rel) const { return (root() / rel).string(); }
};

double rel_l2_of(const std::string& report_stdout) { return json::parse(report_stdout)["error"]["rel_l2"]; }

} // namespace

TEST_F(Cli, FlowBeatsNoFlowEndToEnd) {
    ASSERT_EQ(run("simulate --n 64 --angles 96 --rotations 2 --max-disp 5 --seed 1 --out " + p("e2e")).code, 0);
    ASSERT_EQ(run("reconstruct --no-flow --data " + p("e2e/data.json") + " --out " + p("e2e/cg.json")).code, 0);
    ASSERT_EQ(run("reconstruct --data " + p("e2e/data.json") + " --out " + p("e2e/of.json") + " --log " +
                  p("e2e/of.csv"))
                  .code,
              0);
    const CliRun a = run("report --volume " + p("e2e/cg.json") + " --truth " + p("e2e/truth_final.json"));
    ASSERT_EQ(a.code, 0) << a.err;
    const CliRun b = run("report --volume " + p("e2e/of.json") + " --truth " + p("e2e/truth_final.json"));
    ASSERT_EQ(b.code, 0) << b.err;
    const double e_cg = rel_l2_of(a.out), e_of = rel_l2_of(b.out);
    EXPECT_LT(e_of, e_cg) << "flow " << e_of << " vs no flow " << e_cg;

    std::ifstream log(p("e2e/of.csv"));
    std::string header;
    std::getline(log, header);
    EXPECT_EQ(header, "iteration,level,binning,lagrangian,fidelity,tv,rho1,rho2,mean_flow,window");
    std::size_t rows = 0;
    for (std::string line; std::getline(log, line);) ++rows;
    EXPECT_EQ(rows, 64u);

    const CliRun r = run("report --volume " + p("e2e/of.json") + " --data " + p("e2e/data.json") + " --flow " +
                      p("e2e/of_flow.json") + " --psi1 " + p("e2e/of_psi1.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_GT(double(json::parse(r.out)["residual"]["alignment_gain"]), 1.0);
}

TEST_F(Cli, UnknownFlagPrintsUsage) {
    const CliRun r = run("simulate --out " + p("x") + " --frobnicate 3");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("flowtomo: error[invalid-argument]"), std::string::npos);
    EXPECT_NE(r.err.find("Usage:"), std::string::npos);
    EXPECT_FALSE(fs::exists(p("x")));
}

TEST_F(Cli, MissingSubcommandIsArgumentError) { EXPECT_EQ(run("").code, 2); }

TEST_F(Cli, InvalidValuesAreArgumentErrors) {
    ASSERT_EQ(run("simulate --n 16 --angles 8 --rotations 2 --seed 3 --out " + p("small")).code, 0);
    const std::string d = " --data " + p("small/data.json") + " --out " + p("small/r.json");
    EXPECT_EQ(run("reconstruct --binning 3,2" + d).code, 2);
    EXPECT_EQ(run("reconstruct --projector magic" + d).code, 2);
    EXPECT_EQ(run("reconstruct --dense --shift-only" + d).code, 2);
    EXPECT_EQ(run("simulate --n 16 --angles 9 --rotations 2 --out " + p("bad")).code, 2);
    EXPECT_FALSE(fs::exists(p("small/r.json")));
}

TEST_F(Cli, FscOfIdenticalVolumesHasNoCrossing) {
    ASSERT_EQ(run("simulate --n 16 --angles 8 --rotations 2 --seed 4 --out " + p("fsc")).code, 0);
    const CliRun r = run("fsc " + p("fsc/truth_initial.json") + " " + p("fsc/truth_initial.json") + " --csv " +
                      p("fsc/c.csv") + " --png " + p("fsc/c.png"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("crossing none"), std::string::npos);
    EXPECT_EQ(slurp(p("fsc/c.csv")).rfind("frequency,correlation,half_bit,shell_count\n", 0), 0u);
    EXPECT_EQ(read_png(p("fsc/c.png")).width, 640u);
}

TEST_F(Cli, IoErrorsHaveTheirOwnCode) {
    const CliRun missing = run("fsc " + p("nope.json") + " " + p("nope.json"));
    EXPECT_EQ(missing.code, 3);
    EXPECT_NE(missing.err.find("flowtomo: error[io-error]"), std::string::npos);

    ASSERT_EQ(run("simulate --n 16 --angles 8 --rotations 2 --seed 5 --out " + p("trunc")).code, 0);
    fs::resize_file(p("trunc/truth_final.f32"), 100);
    const CliRun t = run("fsc " + p("trunc/truth_final.json") + " " + p("trunc/truth_initial.json"));
    EXPECT_EQ(t.code, 3);
    EXPECT_NE(t.err.find("error[size-mismatch]"), std::string::npos);

    std::ofstream(p("garbage.json")) << "{not json";
    EXPECT_EQ(run("fsc " + p("garbage.json") + " " + p("garbage.json")).code, 3);
}

TEST_F(Cli, NonFiniteDataIsNumericalAbort) {
    ScanGeometry g = with_grid(make_interlaced(4, 2, 3.14159), 8, 4);
    ProjectionStack<float> d(g);
    d.data[3] = std::numeric_limits<float>::infinity();
    fs::create_directories(p("inf"));
    save_projections(p("inf/data.json"), d);
    const CliRun r = run("reconstruct --data " + p("inf/data.json") + " --out " + p("inf/r.json"));
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.err.find("error[numerical-abort]"), std::string::npos);
    EXPECT_FALSE(fs::exists(p("inf/r.json")));
}

TEST_F(Cli, SimulateIsDeterministicAcrossThreadCounts) {
    const std::string common = "simulate --n 24 --angles 16 --rotations 2 --max-disp 3 --seed 9 --noise --out ";
    ASSERT_EQ(run("--threads 1 " + common + p("det1")).code, 0);
    ASSERT_EQ(run("--threads 3 " + common + p("det2")).code, 0);
    for (const char* f : {"data.json", "data.f32", "truth_final.f32", "field.json", "field.x.f32"})
        EXPECT_EQ(slurp(p(std::string("det1/") + f)), slurp(p(std::string("det2/") + f))) << f;
    const auto m = load_manifest(p("det1/data.json"));
    EXPECT_EQ(m.provenance["noise"]["poisson_photons"], 1e5);
    EXPECT_EQ(m.geometry.n_angles_total(), 16u);
}

TEST_F(Cli, SlicesWritePngs) {
    ASSERT_EQ(run("simulate --n 16 --nz 12 --angles 8 --rotations 2 --seed 6 --out " + p("sl")).code, 0);
    ASSERT_EQ(run("reconstruct --data " + p("sl/data.json") + " --out " + p("sl/r.json") + " --admm-iters 3").code,
              0);
    const CliRun r = run("slices --volume " + p("sl/r.json") + " --flow " + p("sl/r_flow.json") + " --angles 0,7 --prefix " +
                      p("sl/img/r"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto xy = read_png(p("sl/img/r_xy.png")), xz = read_png(p("sl/img/r_xz.png"));
    EXPECT_EQ(xy.width, 16u);
    EXPECT_EQ(xy.height, 16u);
    EXPECT_EQ(xz.height, 12u);
    EXPECT_EQ(read_png(p("sl/img/r_flow_7.png")).channels, 3u);
    EXPECT_EQ(run("slices --flow " + p("sl/r_flow.json") + " --angles 8 --prefix " + p("sl/img/r")).code, 2);
}

TEST_F(Cli, PrealignAndLcurve) {
    ASSERT_EQ(run("simulate --n 24 --angles 16 --rotations 2 --max-disp 2 --seed 7 --out " + p("pl")).code, 0);
    ASSERT_EQ(run("prealign --data " + p("pl/data.json") + " --out " + p("pl/aligned.json") + " --cg-iters 8").code,
              0);
    const auto a = load_projections<float>(p("pl/aligned.json"));
    EXPECT_TRUE(a.checksums_ok);
    EXPECT_EQ(a.data.n_angles(), 16u);
    EXPECT_TRUE(fs::exists(p("pl/aligned_shifts.json")));

    const CliRun r = run("lcurve --data " + p("pl/data.json") + " --alphas 0,0.1,1 --admm-iters 4 --out " +
                      p("pl/lc.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream csv(slurp(p("pl/lc.csv")));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "alpha,fidelity,tv,corner");
    int rows = 0, corners = 0;
    while (std::getline(csv, line)) {
        ++rows;
        corners += line.back() == '1';
    }
    EXPECT_EQ(rows, 3);
    EXPECT_EQ(corners, 1);
    EXPECT_EQ(run("lcurve --data " + p("pl/data.json") + " --alphas 1,0.1").code, 2);
}
