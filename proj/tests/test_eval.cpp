#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "reiqa/error.hpp"
#include "reiqa/eval.hpp"
#include "reiqa/metrics.hpp"
#include "reiqa/rng.hpp"

using namespace reiqa;

namespace {

// Rank = (#smaller) + (#equal + 1) / 2, by counting.
std::vector<long double> brute_ranks(const std::vector<double>& v) {
    std::vector<long double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        long double less = 0, equal = 0;
        for (double w : v) {
            less += w < v[i];
            equal += w == v[i];
        }
        r[i] = less + (equal + 1) / 2;
    }
    return r;
}

template <class T>
long double brute_pearson(const std::vector<T>& x, const std::vector<T>& y) {
    const long double n = x.size();
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> random_vector(Rng& rng, int n, bool ties) {
    std::vector<double> v(n);
    for (double& x : v) x = ties ? static_cast<double>(rng.below(5)) : rng.normal() * 3.0 + 1.0;
    return v;
}

bool is_constant(const std::vector<double>& v) {
    for (double x : v)
        if (x != v.front()) return false;
    return true;
}

Manifest synthetic_manifest(int contents, int per_content, bool with_content) {
    Manifest m;
    for (int c = 0; c < contents; ++c)
        for (int k = 0; k < per_content; ++k) {
            ManifestEntry e;
            e.path = "img_" + std::to_string(c) + "_" + std::to_string(k) + ".png";
            e.mos = 100.0 * k + c;
            if (with_content) e.content_id = "c" + std::to_string(c);
            m.entries.push_back(e);
        }
    return m;
}

Matrix column(const std::vector<double>& v) {
    Matrix m(static_cast<long>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<long>(i), 0) = v[i];
    return m;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("reiqa_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("correlations match brute-force references") {
    Rng rng(1);
    double worst_s = 0.0, worst_p = 0.0;
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = static_cast<int>(rng.between(2, 60));
        const auto x = random_vector(rng, n, trial % 2 == 0);
        const auto y = random_vector(rng, n, trial % 3 == 0);
        if (is_constant(x) || is_constant(y)) {
            CHECK_THROWS_AS(srcc(x, y), DegenerateMetric);
            continue;
        }
        ++checked;
        worst_s = std::max(worst_s, static_cast<double>(std::fabs(srcc(x, y) - brute_pearson(brute_ranks(x), brute_ranks(y)))));
        worst_p = std::max(worst_p, static_cast<double>(std::fabs(plcc(x, y) - brute_pearson(x, y))));
    }
    CHECK(checked > 900);
    CHECK(worst_s < 1e-9);
    CHECK(worst_p < 1e-9);
}

TEST_CASE("correlation examples") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(srcc(x, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(srcc(x, std::vector<double>{10, 20, 30, 31}) == doctest::Approx(1.0));
    CHECK(srcc(x, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(plcc(x, std::vector<double>{5, 7, 9, 11}) == doctest::Approx(1.0));
    CHECK(plcc(x, std::vector<double>{-1, -2, -3, -4}) == doctest::Approx(-1.0));
    CHECK(fractional_ranks(std::vector<double>{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
    CHECK_THROWS_AS(srcc(x, std::vector<double>{1, 1, 1, 1}), DegenerateMetric);
    CHECK_THROWS_AS(plcc(x, std::vector<double>{1, 2, 3}), InvalidArgument);
    CHECK_THROWS_AS(plcc(std::vector<double>{1}, std::vector<double>{1}), InvalidArgument);
    CHECK_THROWS_AS(plcc(x, std::vector<double>{1, NAN, 2, 3}), InvalidArgument);
    CHECK(median({3, 1, 2}) == 2);
    CHECK(median({4, 1, 3, 2}) == 2.5);
}

TEST_CASE("rank and affine invariances") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = static_cast<int>(rng.between(3, 40));
        const auto x = random_vector(rng, n, trial % 2 == 0);
        const auto y = random_vector(rng, n, false);
        if (is_constant(x)) continue;
        // Strictly increasing remap of moderate-range values keeps every order.
        const double a = rng.uniform(0.5, 2.0), b = rng.uniform(-3.0, 3.0);
        std::vector<double> xm, xa;
        for (double v : x) {
            xm.push_back(v * v * v + a * v + std::exp(v / 8.0));
            xa.push_back(a * v + b);
        }
        CHECK(srcc(xm, y) == doctest::Approx(srcc(x, y)).epsilon(1e-12));
        CHECK(srcc(y, xm) == doctest::Approx(srcc(y, x)).epsilon(1e-12));
        CHECK(plcc(xa, y) == doctest::Approx(plcc(x, y)).epsilon(1e-9));
        CHECK(plcc(y, xa) == doctest::Approx(plcc(y, x)).epsilon(1e-9));
    }
}

TEST_CASE("split by image") {
    const Manifest m = synthetic_manifest(10, 1, false);
    SplitSpec spec;
    const Split s = split(m, spec, 0);
    CHECK(s.train.size() == 7);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 2);
    CHECK(split(m, spec, 0).digest() == s.digest());
    CHECK(split(m, spec, 1).digest() != s.digest());
    spec.seed = 9;
    CHECK(split(m, spec, 0).digest() != s.digest());
}

TEST_CASE("split by content never mixes a content across partitions") {
    const Manifest m = synthetic_manifest(23, 6, true);
    SplitSpec spec;
    spec.grouping = Grouping::ByContent;
    std::set<std::uint64_t> digests;
    for (int r = 0; r < 10; ++r) {
        const Split s = split(m, spec, r);
        digests.insert(s.digest());
        std::vector<int> seen(m.size(), 0);
        std::map<std::string, int> owner;
        const std::vector<std::size_t>* parts[3] = {&s.train, &s.val, &s.test};
        for (int p = 0; p < 3; ++p) {
            CHECK_FALSE(parts[p]->empty());
            for (std::size_t i : *parts[p]) {
                ++seen[i];
                const auto [it, fresh] = owner.emplace(*m.entries[i].content_id, p);
                CHECK(it->second == p);
            }
        }
        for (int c : seen) CHECK(c == 1);
        // Whole groups of 6 land within one group of the item targets.
        CHECK(std::abs(static_cast<double>(s.train.size()) - 0.7 * m.size()) <= 6);
        CHECK(std::abs(static_cast<double>(s.test.size()) - 0.2 * m.size()) <= 6);
    }
    CHECK(digests.size() == 10);
}

TEST_CASE("split errors and overrides") {
    SplitSpec spec;
    CHECK_THROWS_AS(split(synthetic_manifest(2, 1, false), spec, 0), InvalidArgument);
    // Content ids demand content grouping.
    CHECK_THROWS_AS(split(synthetic_manifest(10, 2, true), spec, 0), InvalidArgument);
    spec.grouping = Grouping::ByContent;
    CHECK_THROWS_AS(split(synthetic_manifest(2, 5, true), spec, 0), InvalidArgument);
    CHECK_THROWS_AS(split(synthetic_manifest(10, 1, false), spec, 0), InvalidArgument);

    SplitSpec bad;
    bad.train = 0.8;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);

    Manifest fixed = synthetic_manifest(6, 1, false);
    const char* tags[] = {"test", "train", "val", "train", "test", "train"};
    for (std::size_t i = 0; i < 6; ++i) fixed.entries[i].split = tags[i];
    const Split s = split(fixed, SplitSpec{}, 3);
    CHECK(s.train == std::vector<std::size_t>{1, 3, 5});
    CHECK(s.val == std::vector<std::size_t>{2});
    CHECK(s.test == std::vector<std::size_t>{0, 4});
}

TEST_CASE("protocol with a perfect predictor") {
    const Manifest m = synthetic_manifest(40, 5, true);
    SplitSpec spec;
    spec.grouping = Grouping::ByContent;
    const auto grid = lambda_grid();
    const EvalReport r = run_protocol(m, column(m.mos()), spec, grid);
    REQUIRE(r.repeats.size() == 10);
    for (const auto& rep : r.repeats) {
        CHECK(rep.srcc == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(rep.plcc == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(r.median_srcc == doctest::Approx(1.0).epsilon(1e-12));

    spec.repeats = 1;
    const EvalReport one = run_protocol(m, column(m.mos()), spec, grid);
    CHECK(one.median_srcc == one.repeats[0].srcc);
    CHECK(one.median_plcc == one.repeats[0].plcc);
}

TEST_CASE("protocol on noise features stays near zero and is thread invariant") {
    Rng rng(3);
    const Manifest m = synthetic_manifest(200, 1, false);
    Matrix x(200, 4);
    for (long i = 0; i < x.rows(); ++i)
        for (long j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
    SplitSpec spec;
    spec.seed = 11;
    const auto grid = lambda_grid();
    const EvalReport a = run_protocol(m, x, spec, grid, 1);
    const EvalReport b = run_protocol(m, x, spec, grid, 4);
    CHECK(std::fabs(a.median_srcc) <= 0.2);

    std::vector<double> s, p;
    for (std::size_t i = 0; i < a.repeats.size(); ++i) {
        CHECK(a.repeats[i].repeat == static_cast<int>(i));
        CHECK(a.repeats[i].srcc == b.repeats[i].srcc);
        CHECK(a.repeats[i].lambda == b.repeats[i].lambda);
        s.push_back(a.repeats[i].srcc);
        p.push_back(a.repeats[i].plcc);
    }
    CHECK(a.median_srcc == median(s));
    CHECK(a.median_plcc == median(p));
}

TEST_CASE("protocol failures name the repeat") {
    Manifest m = synthetic_manifest(20, 1, false);
    for (auto& e : m.entries) e.mos = 3.0;
    Matrix x(20, 1);
    for (long i = 0; i < 20; ++i) x(i, 0) = static_cast<double>(i);
    try {
        run_protocol(m, x, SplitSpec{}, lambda_grid());
        FAIL("expected a degenerate metric");
    } catch (const DegenerateMetric& e) {
        CHECK(std::string(e.what()).find("repeat 0") != std::string::npos);
    }
    CHECK_THROWS_AS(run_protocol(m, Matrix(5, 1), SplitSpec{}, lambda_grid()), InvalidArgument);
}

TEST_CASE("cross evaluation") {
    const Manifest train = synthetic_manifest(30, 4, true);
    const Manifest test = synthetic_manifest(10, 3, false);
    const auto grid = lambda_grid();
    const CrossResult perfect = run_cross(train, column(train.mos()), test, column(test.mos()), grid, 1);
    CHECK(perfect.srcc == doctest::Approx(1.0));
    CHECK(perfect.plcc == doctest::Approx(1.0));

    // Train = test: the same seeded 90/10 selection, refit, scored in-sample.
    Rng rng(4);
    Matrix x(train.size(), 3);
    for (long i = 0; i < x.rows(); ++i)
        for (long j = 0; j < 3; ++j) x(i, j) = train.entries[i].mos * (j + 1) + rng.normal();
    const CrossResult self = run_cross(train, x, train, x, grid, 7);

    SplitSpec spec;
    spec.train = 0.9;
    spec.val = 0.1;
    spec.test = 0.0;
    spec.seed = 7;
    spec.grouping = Grouping::ByContent;
    const Split s = split(train, spec, 0);
    CHECK(s.test.empty());
    const auto y = train.mos();
    std::vector<double> yt, yv;
    for (std::size_t i : s.train) yt.push_back(y[i]);
    for (std::size_t i : s.val) yv.push_back(y[i]);
    const LambdaSearch ls = select_lambda(select_rows(x, s.train), yt, select_rows(x, s.val), yv, grid);
    const RidgeModel model = fit_ridge(x, y, ls.model.lambda);
    const auto pred = predict_all(model, x);
    CHECK(self.lambda == ls.model.lambda);
    CHECK(self.srcc == srcc(pred, y));
    CHECK(self.plcc == plcc(pred, y));
}

TEST_CASE("manifest files") {
    const auto dir = temp_dir("manifest");
    write_file(dir / "a.png", "");
    write_file(dir / "b.png", "");
    write_file(dir / "r.png", "");

    write_file(dir / "ok.csv", "path,mos,content_id,ref_path\na.png,1.5,x,r.png\nb.png,2,y,r.png\n");
    const Manifest m = Manifest::load(dir / "ok.csv");
    REQUIRE(m.size() == 2);
    CHECK(m.entries[1].mos == 2.0);
    CHECK(m.has_content());
    CHECK(m.has_ref());
    CHECK_FALSE(m.has_split());
    CHECK(m.resolve("a.png") == dir / "a.png");

    m.save(dir / "saved.csv");
    const Manifest back = Manifest::load(dir / "saved.csv");
    CHECK(back.entries[0].path == "a.png");
    CHECK(back.entries[0].mos == 1.5);
    CHECK(back.entries[1].content_id == "y");
    CHECK(back.entries[1].ref_path == "r.png");

    write_file(dir / "unknown.csv", "path,mos,score\na.png,1,2\n");
    CHECK_THROWS_AS(Manifest::load(dir / "unknown.csv"), FormatError);
    write_file(dir / "header.csv", "mos,path\n1,a.png\n");
    CHECK_THROWS_AS(Manifest::load(dir / "header.csv"), FormatError);
    write_file(dir / "partial.csv", "path,mos,content_id\na.png,1,x\nb.png,2,\n");
    CHECK_THROWS_AS(Manifest::load(dir / "partial.csv"), FormatError);
    write_file(dir / "badmos.csv", "path,mos\na.png,abc\n");
    CHECK_THROWS_AS(Manifest::load(dir / "badmos.csv"), FormatError);
    write_file(dir / "inf.csv", "path,mos\na.png,inf\n");
    CHECK_THROWS_AS(Manifest::load(dir / "inf.csv"), FormatError);
    write_file(dir / "badsplit.csv", "path,mos,split\na.png,1,holdout\n");
    CHECK_THROWS_AS(Manifest::load(dir / "badsplit.csv"), FormatError);
    write_file(dir / "missing.csv", "path,mos\nnope.png,1\n");
    CHECK_THROWS_AS(Manifest::load(dir / "missing.csv"), IoError);
    CHECK(Manifest::load(dir / "missing.csv", false).size() == 1);
    CHECK_THROWS_AS(Manifest::load(dir / "absent.csv"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("report outputs") {
    EvalReport r;
    r.repeats = {{0, 0.5, 0.6, 1.0}, {1, 0.7, 0.8, 10.0}};
    r.median_srcc = 0.6;
    r.median_plcc = 0.7;
    const auto dir = temp_dir("report");
    write_report_csv(dir / "r.csv", r);
    std::ifstream in(dir / "r.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() ==
          "repeat,srcc,plcc,lambda\n0,0.500000000,0.600000000,1\n1,0.700000000,0.800000000,10\n"
          "median,0.600000000,0.700000000,\n");
    const std::string table = format_report("synthetic", r);
    CHECK(table.find("synthetic") != std::string::npos);
    CHECK(table.find("0.6000") != std::string::npos);
    CHECK(table.find("0.7000") != std::string::npos);
    std::filesystem::remove_all(dir);
}
