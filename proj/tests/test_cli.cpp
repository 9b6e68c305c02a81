#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "reiqa/cli.hpp"
#include "reiqa/config.hpp"
#include "reiqa/error.hpp"
#include "reiqa/quality_head.hpp"

using namespace reiqa;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("reiqa_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("config text round-trips and rejects unknown keys") {
    RunConfig cfg;
    cfg.set("train.epochs", "3");
    cfg.set("encoder.widths", "8, 16");
    cfg.set("pipeline.ola_max", "0.25");
    cfg.set("paths.out", "runs/x");
    cfg.seed = 77;
    const RunConfig back = RunConfig::parse(cfg.serialize());
    CHECK(back.serialize() == cfg.serialize());
    CHECK(back.digest() == cfg.digest());
    CHECK(back.encoder.widths == std::vector<int>{8, 16});

    CHECK_THROWS_AS(cfg.set("train.epoch", "3"), InvalidArgument);
    CHECK_THROWS_AS(cfg.set("paths.nowhere", "x"), InvalidArgument);
    CHECK_THROWS_AS(cfg.set("train.lr0", "fast"), InvalidArgument);
    CHECK_THROWS_AS(RunConfig::parse("[bogus]\nx = 1\n"), InvalidArgument);
    CHECK_THROWS_AS(RunConfig::parse("epochs = 1\n"), FormatError);
    CHECK(RunConfig::parse("# note\n[train]\nepochs = 9\n").train.epochs == 9);
}

TEST_CASE("config digest ignores threads and paths but not settings") {
    RunConfig a, b;
    b.threads = 4;
    b.paths["out"] = "elsewhere";
    CHECK(a.digest() == b.digest());
    b.train.tau = 0.1;
    CHECK(a.digest() != b.digest());
    RunConfig c;
    c.seed = 1;
    CHECK(a.digest() != c.digest());
}

TEST_CASE("exit codes") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"nonsense"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);
    CHECK(cli({"train", "--set", "train.nope=1", "--sources", "x", "--out", "y"}).code == kExitUsage);
    CHECK(cli({"train", "--threads", "0"}).code == kExitUsage);
    CHECK(cli({"eval", "--features", "f.bin"}).code == kExitUsage);  // no manifest anywhere

    const Run missing = cli({"eval", "--manifest", "/nonexistent/m.csv", "--features", "f.bin"});
    CHECK(missing.code == kExitFailure);
    CHECK(missing.err.find("io-error") != std::string::npos);
}

TEST_CASE("eval of a perfect predictor reports 1.0") {
    const fs::path dir = scratch("perfect");
    {
        std::ofstream m(dir / "m.csv");
        m << "path,mos\n";
        for (int i = 0; i < 40; ++i) m << "img" << i << ".png," << (i * 7 % 40) << "\n";
    }
    Matrix x(40, 2);
    std::vector<std::string> names;
    for (int i = 0; i < 40; ++i) {
        x(i, 0) = i * 7 % 40;
        x(i, 1) = (i % 3) * 0.01;
        names.push_back("img" + std::to_string(i) + ".png");
    }
    save_features(dir / "f.bin", x, names);
    const Run r = cli({"eval", "--manifest", (dir / "m.csv").string(), "--features", (dir / "f.bin").string(), "--out",
                       (dir / "rep").string(), "--name", "perfect"});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("perfect    1.0000 ") != std::string::npos);
    CHECK(fs::exists(dir / "rep" / "report.csv"));
    CHECK(fs::exists(dir / "rep" / "run_manifest.txt"));

    // Rows that do not line up with the manifest are refused.
    names[3] = "other.png";
    save_features(dir / "g.bin", x, names);
    const Run bad = cli({"eval", "--manifest", (dir / "m.csv").string(), "--features", (dir / "g.bin").string()});
    CHECK(bad.code == kExitFailure);
    CHECK(bad.err.find("format-error") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("synth writes a labeled distorted set and a run manifest") {
    const fs::path dir = scratch("synth");
    const Run r = cli({"synth", "--out", dir.string(), "--count", "3", "--width", "64", "--height", "64", "--distorted",
                       "2", "--kinds", "GaussianBlur,WhiteNoiseRGB", "--seed", "5"});
    REQUIRE(r.code == kExitOk);
    std::ifstream m(dir / "manifest.csv");
    std::string header;
    std::getline(m, header);
    CHECK(header == "path,mos,ref_path,content_id");
    int rows = 0;
    for (std::string line; std::getline(m, line);) ++rows;
    CHECK(rows == 6);
    std::ifstream rm(dir / "run_manifest.txt");
    std::string first;
    std::getline(rm, first);
    CHECK(first.rfind("command = reiqa synth", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("gradcheck and selftest pass") {
    const Run g = cli({"gradcheck", "--seed", "3"});
    CHECK(g.code == kExitOk);
    CHECK(g.out.find("PASS") != std::string::npos);
    const Run s = cli({"selftest"});
    CHECK(s.code == kExitOk);
    CHECK(s.out.find("FAIL") == std::string::npos);
}
