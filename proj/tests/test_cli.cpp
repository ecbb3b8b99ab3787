#include "cli.hpp"
#include "symptomcast/errors.hpp"
#include "symptomcast/gridder.hpp"
#include "symptomcast/run_config.hpp"

#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace symptomcast;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(# tiny run
days=24
responses_per_day=150
grid_rows=8
grid_cols=8
patch=4,4,2
test_days=4
clusters=2
epochs=2
c1=4
c2=6
latent=8
)";

struct Invocation {
    int code = 0;
    std::string out, err;
};

Invocation invoke(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    Invocation r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text)
{
    std::ofstream(p, std::ios::binary) << text;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("symptomcast_" + tag + "_" + std::to_string(::getpid())))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

RunConfig parse(const std::string& text)
{
    std::istringstream in(text);
    return parse_run_config(in);
}

} // namespace

TEST_SUITE("run config")
{
    TEST_CASE("defaults echo and parse back to the same echo")
    {
        const RunConfig a = parse("");
        CHECK(a.model().epochs == 5);
        CHECK(a.model().patch->stride == 2);
        CHECK(a.model().input_channels == 4 * 16);
        const RunConfig b = parse(a.echo());
        CHECK(b.echo() == a.echo());
    }

    TEST_CASE("shared fields propagate into the model")
    {
        const RunConfig c = parse("grid_rows=12\ngrid_cols=9\nclusters=3\nx_max=50\npatch=4,4,1\n");
        CHECK(c.model().grid_rows == 12);
        CHECK(c.model().grid_cols == 9);
        CHECK(c.model().input_channels == 48);
        CHECK(c.experiment.bounds.x_max == 50.0);
        CHECK(c.experiment.patch.stride == 1);
        CHECK(parse("mode=raw_features\nclusters=3\n").model().input_channels == 16);
        const RunConfig s = parse("seeds=4,5,6\ninterpolation=inverse_distance\n");
        CHECK(s.experiment.seeds == std::vector<std::uint64_t>{4, 5, 6});
        CHECK(s.experiment.interpolation == Interpolation::inverse_distance);
    }

    TEST_CASE("unknown, derived and malformed keys are config errors with a line number")
    {
        try {
            parse("days=10\nbogus=1\n");
            FAIL("no throw");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
            CHECK(std::string(e.what()).find("bogus") != std::string::npos);
        }
        CHECK_THROWS_AS(parse("input_channels=16\n"), ConfigError);
        CHECK_THROWS_AS(parse("days=ten\n"), ConfigError);
        CHECK_THROWS_AS(parse("interpolation=cubic\n"), ConfigError);
        CHECK_THROWS_AS(parse("clusters=0\n"), ConfigError);
        CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), ConfigError);
    }

    TEST_CASE("profile mix round trip and shorthand")
    {
        const auto mix = default_profile_mix();
        const auto back = parse_profile_mix(format_profile_mix(mix));
        REQUIRE(back.size() == mix.size());
        for (std::size_t i = 0; i < mix.size(); ++i) {
            CHECK(back[i].weight == mix[i].weight);
            CHECK(back[i].propensity == mix[i].propensity);
            CHECK(back[i].age_sd == mix[i].age_sd);
            CHECK(back[i].chronic_p == mix[i].chronic_p);
        }
        const auto one = parse_profile_mix("2:0.3:50:5:0.1:0.2");
        REQUIRE(one.size() == 1);
        CHECK(one[0].propensity[8] == 0.3);
        CHECK(one[0].age_mean == 50.0);
        CHECK_THROWS_AS(parse_profile_mix("1:0.3:50"), ConfigError);
        CHECK_THROWS_AS(parse_profile_mix("1:0.1,0.2:50:5:0.1:0.2"), ConfigError);
    }
}

TEST_SUITE("cli")
{
    TEST_CASE("usage, config and data errors map to exit codes with one-line messages")
    {
        TempDir dir("codes");
        Invocation r = invoke({"bogus"});
        CHECK(r.code == cli::kUsage);
        CHECK(r.err.rfind("error: usage: ", 0) == 0);
        CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
        CHECK(invoke({}).code == cli::kUsage);
        CHECK(invoke({"train", "--data", "x.csv"}).code == cli::kUsage);

        r = invoke({"generate", "--config", dir / "missing.cfg", "--out", dir / "s.csv", "--lambda", dir / "l.grid"});
        CHECK(r.code == cli::kConfig);
        CHECK(r.err.rfind("error: config: ", 0) == 0);
        spit(dir / "bad.cfg", "days=10\nnope=3\n");
        CHECK(invoke({"generate", "--config", dir / "bad.cfg", "--out", dir / "s.csv", "--lambda", dir / "l.grid"}).code ==
              cli::kConfig);

        r = invoke({"render", "--grid", dir / "missing.grid", "--out", dir / "x.pgm"});
        CHECK(r.code == cli::kData);
        CHECK(r.err.rfind("error: data: ", 0) == 0);
        spit(dir / "bad.csv", "not,a,survey\n");
        CHECK(invoke({"fit-profiles", "--data", dir / "bad.csv", "--out", dir / "p.txt"}).code == cli::kData);
    }

    TEST_CASE("generate, fit, train, eval, predict and render on a tiny run")
    {
        TempDir dir("pipeline");
        spit(dir / "run.cfg", kTinyConfig);
        const std::string cfg = dir / "run.cfg";

        REQUIRE(invoke({"generate", "--config", cfg, "--out", dir / "s.csv", "--lambda", dir / "l.grid"}).code == 0);
        {
            std::ifstream in(dir / "l.grid", std::ios::binary);
            const TensorXd lambda = read_grid(in);
            CHECK(lambda.shape() == nn::Shape{1, 24, 8, 8});
            CHECK(lambda.vec().minCoeff() > 0.0);
        }

        Invocation r = invoke({"fit-profiles", "--data", dir / "s.csv", "--k", "2", "--config", cfg, "--out", dir / "p.txt"});
        REQUIRE(r.code == 0);
        CHECK(r.out.find("clusters=2") != std::string::npos);

        r = invoke({"train", "--data", dir / "s.csv", "--profiles", dir / "p.txt", "--config", cfg, "--out", dir / "ck.bin"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        const std::string loss = slurp(dir / "ck.bin.loss.csv");
        CHECK(loss.rfind("epoch,loss\n1,", 0) == 0);
        CHECK(std::count(loss.begin(), loss.end(), '\n') == 3);
        CHECK(fs::exists(dir / "ck.bin.manifest"));
        CHECK(slurp(dir / "ck.bin.manifest").find("epochs=2") != std::string::npos);

        r = invoke({"eval", "--checkpoint", dir / "ck.bin", "--data", dir / "s.csv", "--report", dir / "ev.csv",
                 "--test-days", "4"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        const std::string report = slurp(dir / "ev.csv");
        CHECK(report.rfind("split,windows,n_pixels,r2,spearman\ntest,4,", 0) == 0);
        CHECK(fs::exists(dir / "ev.csv.manifest"));

        r = invoke({"predict", "--checkpoint", dir / "ck.bin", "--data", dir / "s.csv", "--date", "24", "--out",
                 dir / "pr.grid"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        {
            std::ifstream in(dir / "pr.grid", std::ios::binary);
            const TensorXd p = read_grid(in);
            REQUIRE(p.shape() == nn::Shape{2, 1, 8, 8});
            CHECK(p.all_finite());
            for (Index i = 64; i < 128; ++i) {
                CHECK(p[i] > 0.0);
            }
        }
        CHECK(invoke({"predict", "--checkpoint", dir / "ck.bin", "--data", dir / "s.csv", "--date", "40", "--out",
                   dir / "far.grid"})
                  .code == cli::kData);

        r = invoke({"render", "--grid", dir / "pr.grid", "--out", dir / "pr.pgm", "--channel", "1"});
        REQUIRE(r.code == 0);
        std::istringstream pgm(slurp(dir / "pr.pgm"));
        std::string magic;
        int w = 0, h = 0, maxval = 0;
        pgm >> magic >> w >> h >> maxval;
        CHECK(magic == "P2");
        CHECK(w == 8);
        CHECK(h == 8);
        CHECK(maxval == 255);
        int v = 0, n = 0, lo = 255, hi = 0;
        while (pgm >> v) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            ++n;
        }
        CHECK(n == 64);
        CHECK(lo == 0);
        CHECK(hi == 255);

        // a second profile count is a config error, not a crash
        REQUIRE(invoke({"fit-profiles", "--data", dir / "s.csv", "--k", "3", "--config", cfg, "--out", dir / "p3.txt"})
                    .code == 0);
        CHECK(invoke({"train", "--data", dir / "s.csv", "--profiles", dir / "p3.txt", "--config", cfg, "--out",
                   dir / "x.bin"})
                  .code == cli::kConfig);
    }

    TEST_CASE("training twice writes byte-identical checkpoints")
    {
        TempDir dir("repro");
        spit(dir / "run.cfg", kTinyConfig);
        const std::string cfg = dir / "run.cfg";
        REQUIRE(invoke({"generate", "--config", cfg, "--out", dir / "s.csv", "--lambda", dir / "l.grid"}).code == 0);
        REQUIRE(invoke({"fit-profiles", "--data", dir / "s.csv", "--k", "2", "--config", cfg, "--out", dir / "p.txt"})
                    .code == 0);
        for (const char* name : {"a.bin", "b.bin"}) {
            REQUIRE(invoke({"train", "--data", dir / "s.csv", "--profiles", dir / "p.txt", "--config", cfg, "--out",
                         dir / name})
                        .code == 0);
        }
        const std::string a = slurp(dir / "a.bin");
        CHECK(!a.empty());
        CHECK(a == slurp(dir / "b.bin"));
    }

    TEST_CASE("a constant grid renders as a single grey level, north row first")
    {
        TempDir dir("render");
        TensorXd g = TensorXd::constant({1, 2, 3, 4}, 0.25);
        {
            std::ofstream os(dir / "c.grid", std::ios::binary);
            write_grid(os, g);
        }
        Invocation r = invoke({"render", "--grid", dir / "c.grid", "--out", dir / "c.pgm", "--time", "1"});
        REQUIRE(r.code == 0);
        std::istringstream pgm(slurp(dir / "c.pgm"));
        std::string magic;
        int w = 0, h = 0, maxval = 0, v = 0;
        pgm >> magic >> w >> h >> maxval;
        std::set<int> levels;
        while (pgm >> v) {
            levels.insert(v);
        }
        CHECK(levels == std::set<int>{0});

        // row 0 of the grid is the southern edge, so it is written last
        for (Index i = 0; i < g.size(); ++i) {
            g[i] = 0.0;
        }
        g.at(0, 0, 0, 0) = 1.0;
        {
            std::ofstream os(dir / "r.grid", std::ios::binary);
            write_grid(os, g);
        }
        REQUIRE(invoke({"render", "--grid", dir / "r.grid", "--out", dir / "r.pgm"}).code == 0);
        std::istringstream rows(slurp(dir / "r.pgm"));
        rows >> magic >> w >> h >> maxval;
        std::vector<int> px;
        while (rows >> v) {
            px.push_back(v);
        }
        REQUIRE(px.size() == 12);
        CHECK(px[8] == 255);
        CHECK(px[0] == 0);
        CHECK(invoke({"render", "--grid", dir / "r.grid", "--out", dir / "x.pgm", "--channel", "1"}).code == cli::kConfig);
    }
}
