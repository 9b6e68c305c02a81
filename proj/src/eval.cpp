#include "reiqa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "reiqa/digest.hpp"
#include "reiqa/error.hpp"
#include "reiqa/metrics.hpp"
#include "reiqa/rng.hpp"

namespace reiqa {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

Manifest Manifest::load(const std::filesystem::path& path, bool check_paths) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();

    std::string line;
    if (!std::getline(in, line)) throw FormatError("manifest is empty");
    const auto header = split_csv(line);
    if (header.size() < 2 || trim(header[0]) != "path" || trim(header[1]) != "mos") {
        throw FormatError("manifest header must start with path,mos");
    }
    int ref_col = -1, content_col = -1, split_col = -1;
    for (std::size_t i = 2; i < header.size(); ++i) {
        const std::string h = trim(header[i]);
        int* slot = h == "ref_path" ? &ref_col : h == "content_id" ? &content_col : h == "split" ? &split_col : nullptr;
        if (!slot) throw FormatError("unknown manifest column '" + h + "'");
        if (*slot >= 0) throw FormatError("duplicate manifest column '" + h + "'");
        *slot = static_cast<int>(i);
    }

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " fields");
        }
        ManifestEntry e;
        e.path = trim(cells[0]);
        if (e.path.empty()) throw FormatError("manifest line " + std::to_string(lineno) + ": empty path");
        std::size_t used = 0;
        const std::string mos = trim(cells[1]);
        try {
            e.mos = std::stod(mos, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != mos.size() || !std::isfinite(e.mos)) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": bad mos '" + mos + "'");
        }
        auto optional_cell = [&](int col) -> std::optional<std::string> {
            if (col < 0) return std::nullopt;
            std::string v = trim(cells[col]);
            if (v.empty()) return std::nullopt;
            return v;
        };
        e.ref_path = optional_cell(ref_col);
        e.content_id = optional_cell(content_col);
        e.split = optional_cell(split_col);
        if (e.split && *e.split != "train" && *e.split != "val" && *e.split != "test") {
            throw FormatError("manifest line " + std::to_string(lineno) + ": split must be train, val or test");
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw FormatError("manifest has no entries");

    auto all_or_none = [&](auto member, const char* what) {
        std::size_t n = 0;
        for (const auto& e : m.entries) n += (e.*member).has_value();
        if (n != 0 && n != m.entries.size()) throw FormatError(std::string("manifest: ") + what + " must be set for every entry or none");
    };
    all_or_none(&ManifestEntry::content_id, "content_id");
    all_or_none(&ManifestEntry::split, "split");
    all_or_none(&ManifestEntry::ref_path, "ref_path");

    if (check_paths) {
        for (const auto& e : m.entries) {
            if (!std::filesystem::exists(m.resolve(e.path))) throw IoError("manifest image not found: " + e.path);
            if (e.ref_path && !std::filesystem::exists(m.resolve(*e.ref_path))) {
                throw IoError("manifest reference not found: " + *e.ref_path);
            }
        }
    }
    return m;
}

void Manifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << "path,mos";
    if (has_ref()) out << ",ref_path";
    if (has_content()) out << ",content_id";
    if (has_split()) out << ",split";
    out << '\n';
    char buf[64];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%.17g", e.mos);
        out << e.path << ',' << buf;
        if (has_ref()) out << ',' << e.ref_path.value_or("");
        if (has_content()) out << ',' << e.content_id.value_or("");
        if (has_split()) out << ',' << e.split.value_or("");
        out << '\n';
    }
    if (!out) throw IoError("failed writing manifest " + path.string());
}

bool Manifest::has_content() const { return !entries.empty() && entries.front().content_id.has_value(); }
bool Manifest::has_ref() const { return !entries.empty() && entries.front().ref_path.has_value(); }
bool Manifest::has_split() const { return !entries.empty() && entries.front().split.has_value(); }

std::vector<double> Manifest::mos() const {
    std::vector<double> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.mos);
    return out;
}

std::filesystem::path Manifest::resolve(const std::string& p) const {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base_dir / fp;
}

void SplitSpec::validate() const {
    if (!(train > 0.0 && val > 0.0 && test >= 0.0)) throw InvalidArgument("split fractions must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");
    if (repeats < 1) throw InvalidArgument("repeat count must be at least 1");
}

std::uint64_t Split::digest() const {
    Digest d;
    for (const auto* part : {&train, &val, &test}) {
        d.update_u64(part->size());
        for (std::size_t i : *part) d.update_u64(i);
    }
    return d.value();
}

Split split(const Manifest& manifest, const SplitSpec& spec, int repeat) {
    spec.validate();
    const std::size_t n = manifest.size();
    Split s;
    if (manifest.has_split()) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::string& tag = *manifest.entries[i].split;
            (tag == "train" ? s.train : tag == "val" ? s.val : s.test).push_back(i);
        }
        return s;
    }
    if (manifest.has_content() && spec.grouping != Grouping::ByContent) {
        throw InvalidArgument("manifests with content_id must be split by content");
    }

    // Groups in first-appearance order.
    std::vector<std::vector<std::size_t>> groups;
    if (spec.grouping == Grouping::ByContent) {
        if (!manifest.has_content()) throw InvalidArgument("grouping by content needs a content_id column");
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < n; ++i) {
            const auto [it, fresh] = index.emplace(*manifest.entries[i].content_id, groups.size());
            if (fresh) groups.emplace_back();
            groups[it->second].push_back(i);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
    }

    const double fractions[3] = {spec.train, spec.val, spec.test};
    std::vector<int> active;
    for (int p = 0; p < 3; ++p)
        if (fractions[p] > 0.0) active.push_back(p);
    if (groups.size() < active.size()) {
        throw InvalidArgument("need at least " + std::to_string(active.size()) + " groups to split, have " +
                              std::to_string(groups.size()));
    }

    Rng rng(Rng::derive(spec.seed, static_cast<std::uint64_t>(repeat)));
    for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[rng.below(i)]);

    std::vector<std::size_t>* parts[3] = {&s.train, &s.val, &s.test};
    double filled[3] = {0, 0, 0};
    std::size_t g = 0;
    for (int p : active) {
        for (std::size_t i : groups[g]) parts[p]->push_back(i);
        filled[p] += static_cast<double>(groups[g].size());
        ++g;
    }
    for (; g < groups.size(); ++g) {
        int best = active.front();
        double best_deficit = -1e300;
        for (int p : active) {
            const double deficit = fractions[p] * static_cast<double>(n) - filled[p];
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = p;
            }
        }
        for (std::size_t i : groups[g]) parts[best]->push_back(i);
        filled[best] += static_cast<double>(groups[g].size());
    }
    for (auto* part : parts) std::sort(part->begin(), part->end());
    return s;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<long>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<long>(i)) = m.row(static_cast<long>(rows[i]));
    return out;
}

namespace {

std::vector<double> pick(std::span<const double> v, std::span<const std::size_t> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) out.push_back(v[i]);
    return out;
}

}  // namespace

RepeatResult evaluate_split(const Matrix& features, std::span<const double> mos, const Split& s,
                            std::span<const double> grid) {
    if (s.train.size() < 2 || s.val.size() < 2 || s.test.size() < 2) {
        throw InvalidArgument("each partition needs at least two items");
    }
    const auto y_train = pick(mos, s.train);
    const auto y_val = pick(mos, s.val);
    const auto y_test = pick(mos, s.test);
    const LambdaSearch search =
        select_lambda(select_rows(features, s.train), y_train, select_rows(features, s.val), y_val, grid);
    const auto pred = predict_all(search.model, select_rows(features, s.test));
    RepeatResult r;
    r.srcc = srcc(pred, y_test);
    r.plcc = plcc(pred, y_test);
    r.lambda = search.model.lambda;
    return r;
}

EvalReport run_protocol(const Manifest& manifest, const Matrix& features, const SplitSpec& spec,
                        std::span<const double> grid, int threads) {
    spec.validate();
    if (static_cast<std::size_t>(features.rows()) != manifest.size()) {
        throw InvalidArgument("feature rows do not match manifest entries");
    }
    const auto mos = manifest.mos();
    EvalReport report;
    report.repeats.resize(static_cast<std::size_t>(spec.repeats));
    std::vector<std::exception_ptr> errors(report.repeats.size());

    auto work = [&](int r) {
        try {
            report.repeats[r] = evaluate_split(features, mos, split(manifest, spec, r), grid);
            report.repeats[r].repeat = r;
        } catch (const DegenerateMetric& e) {
            errors[r] = std::make_exception_ptr(DegenerateMetric("repeat " + std::to_string(r) + ": " + e.what()));
        } catch (const NumericFailure& e) {
            errors[r] = std::make_exception_ptr(NumericFailure("repeat " + std::to_string(r) + ": " + e.what()));
        } catch (...) {
            errors[r] = std::current_exception();
        }
    };
    const int workers = std::clamp(threads, 1, spec.repeats);
    if (workers == 1) {
        for (int r = 0; r < spec.repeats; ++r) work(r);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&, t] {
                for (int r = t; r < spec.repeats; r += workers) work(r);
            });
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<double> s, p;
    for (const auto& r : report.repeats) {
        s.push_back(r.srcc);
        p.push_back(r.plcc);
    }
    report.median_srcc = median(s);
    report.median_plcc = median(p);
    return report;
}

CrossResult run_cross(const Manifest& train, const Matrix& train_features, const Manifest& test,
                      const Matrix& test_features, std::span<const double> grid, std::uint64_t seed) {
    if (static_cast<std::size_t>(train_features.rows()) != train.size() ||
        static_cast<std::size_t>(test_features.rows()) != test.size()) {
        throw InvalidArgument("feature rows do not match manifest entries");
    }
    Manifest inner = train;
    for (auto& e : inner.entries) e.split.reset();
    SplitSpec spec;
    spec.train = 0.9;
    spec.val = 0.1;
    spec.test = 0.0;
    spec.seed = seed;
    spec.grouping = inner.has_content() ? Grouping::ByContent : Grouping::ByImage;
    const Split s = split(inner, spec, 0);

    const auto y = train.mos();
    const LambdaSearch search = select_lambda(select_rows(train_features, s.train), pick(y, s.train),
                                              select_rows(train_features, s.val), pick(y, s.val), grid);
    const RidgeModel model = fit_ridge(train_features, y, search.model.lambda);
    const auto pred = predict_all(model, test_features);
    const auto y_test = test.mos();
    return CrossResult{srcc(pred, y_test), plcc(pred, y_test), model.lambda};
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write report " + path.string());
    out << "repeat,srcc,plcc,lambda\n";
    char buf[160];
    for (const auto& r : report.repeats) {
        std::snprintf(buf, sizeof buf, "%d,%.9f,%.9f,%.9g\n", r.repeat, r.srcc, r.plcc, r.lambda);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "median,%.9f,%.9f,\n", report.median_srcc, report.median_plcc);
    out << buf;
    if (!out) throw IoError("failed writing report " + path.string());
}

std::string format_report(const std::string& name, const EvalReport& report) {
    const int width = static_cast<int>(std::max<std::size_t>(name.size(), 7));
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s\n", width, "dataset", "SRCC", "PLCC");
    out += buf;
    out += std::string(static_cast<std::size_t>(width) + 20, '-') + "\n";
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f\n", width, name.c_str(), report.median_srcc, report.median_plcc);
    out += buf;
    std::snprintf(buf, sizeof buf, "(median of %zu repeats)\n", report.repeats.size());
    out += buf;
    return out;
}

}  // namespace reiqa
