#include "reiqa/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include "reiqa/config.hpp"
#include "reiqa/contrastive.hpp"
#include "reiqa/digest.hpp"
#include "reiqa/distortion.hpp"
#include "reiqa/error.hpp"
#include "reiqa/eval.hpp"
#include "reiqa/image_io.hpp"
#include "reiqa/metrics.hpp"
#include "reiqa/quality_head.hpp"
#include "reiqa/synth.hpp"
#include "reiqa/trainer.hpp"

namespace fs = std::filesystem;

namespace reiqa {

namespace {

// Config problems found while resolving options count as usage errors.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "run config file (key = value sections)");
    sub->add_option("--set", c.sets, "override one config key, e.g. train.epochs=3")->take_all();
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--threads", c.threads, "worker threads; 1 is the bit-exact path")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Common& c) {
    try {
        RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
        for (const auto& s : c.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        if (c.seed) cfg.seed = *c.seed;
        if (c.threads) cfg.threads = *c.threads;
        cfg.validate();
        return cfg;
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    } catch (const FormatError& e) {
        throw UsageError(e.what());
    }
}

std::string pick_path(const std::string& flag, const RunConfig& cfg, const char* key, const char* what) {
    if (!flag.empty()) return flag;
    const auto it = cfg.paths.find(key);
    if (it != cfg.paths.end()) return it->second;
    throw UsageError(std::string("missing ") + what + " (flag or [paths] " + key + ")");
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no images in " + dir.string());
    return out;
}

std::vector<Image> load_images(const std::vector<fs::path>& paths) {
    std::vector<Image> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(read_image(p));
    return out;
}

std::string numbered(int i, int width = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*d", width, i);
    return buf;
}

std::string command_line(const std::vector<std::string>& args) {
    std::string s = "reiqa";
    for (const auto& a : args) s += " " + a;
    return s;
}

std::vector<DistortionKind> parse_kinds(const std::string& spec) {
    std::vector<DistortionKind> out;
    if (spec == "all") return list_kinds();
    if (spec == "monotone") {
        for (auto k : list_kinds())
            if (is_monotone_kind(k)) out.push_back(k);
        return out;
    }
    std::stringstream ss(spec);
    std::string name;
    while (std::getline(ss, name, ',')) out.push_back(kind_from_name(name));
    return out;
}

Encoder load_encoder(const std::string& path) { return load_checkpoint(path).state.online; }

Matrix features_for(const Manifest& m, const std::string& feature_path) {
    const FeatureFile f = load_features(feature_path);
    if (static_cast<std::size_t>(f.values.rows()) != m.size()) {
        throw FormatError("feature file has " + std::to_string(f.values.rows()) + " rows, manifest has " +
                          std::to_string(m.size()) + " entries");
    }
    if (!f.paths.empty()) {
        for (std::size_t i = 0; i < m.size(); ++i)
            if (f.paths[i] != m.entries[i].path) {
                throw FormatError("feature row " + std::to_string(i) + " is '" + f.paths[i] + "', manifest has '" +
                                  m.entries[i].path + "'");
            }
    }
    return f.values;
}

Matrix extract_manifest(const Manifest& m, const Encoder* content, const Encoder& quality, bool fr, int threads) {
    std::vector<Image> dist;
    dist.reserve(m.size());
    for (const auto& e : m.entries) dist.push_back(read_image(m.resolve(e.path)));
    const Matrix hd = extract_all(content, quality, dist, threads);
    if (!fr) return hd;
    if (!m.has_ref()) throw InvalidArgument("full-reference extraction needs a ref_path column");
    std::vector<Image> ref;
    ref.reserve(m.size());
    for (const auto& e : m.entries) ref.push_back(read_image(m.resolve(*e.ref_path)));
    return fr_features(extract_all(content, quality, ref, threads), hd);
}

std::vector<std::string> manifest_paths(const Manifest& m) {
    std::vector<std::string> out;
    for (const auto& e : m.entries) out.push_back(e.path);
    return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SynthOpts {
    Common common;
    std::string out;
    int count = 200;
    int width = 256;
    int height = 256;
    int distorted = 0;
    std::string kinds = "all";
    bool all_levels = false;
};

int cmd_synth(const SynthOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    const fs::path dir = pick_path(o.out, cfg, "out", "output directory (--out)");
    if (o.count < 1 || o.width < 1 || o.height < 1) throw UsageError("count and size must be positive");
    fs::create_directories(dir / "pristine");
    const auto images = synth_corpus(cfg.seed, o.count, o.width, o.height);
    for (int i = 0; i < o.count; ++i) write_image(images[i], dir / "pristine" / (numbered(i) + ".png"));
    out << "wrote " << o.count << " pristine images to " << (dir / "pristine").string() << "\n";

    if (o.distorted > 0) {
        const auto kinds = parse_kinds(o.kinds);
        const auto plan = plan_distortions(Rng::derive(cfg.seed, 0x5e7), o.count, o.distorted, kinds, o.all_levels);
        fs::create_directories(dir / "distorted");
        Manifest m;
        int prev = -1, k = 0;
        for (const auto& p : plan) {
            k = p.content == prev ? k + 1 : 0;
            prev = p.content;
            const std::string name = "distorted/" + numbered(p.content) + "_" + numbered(k, 2) + ".png";
            write_image(apply(images[p.content], p.spec), dir / name);
            ManifestEntry e;
            e.path = name;
            e.mos = p.spec.level;
            e.ref_path = "pristine/" + numbered(p.content) + ".png";
            e.content_id = numbered(p.content);
            m.entries.push_back(std::move(e));
        }
        m.save(dir / "manifest.csv");
        out << "wrote " << plan.size() << " distorted images and " << (dir / "manifest.csv").string() << "\n";
    }
    write_run_manifest(dir, command_line(args), cfg);
    return kExitOk;
}

struct DistortOpts {
    Common common;
    std::string input;
    std::string out;
    std::string kind = "all";
    int level = 0;
    bool list = false;
};

int cmd_distort(const DistortOpts& o, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    if (o.list) {
        for (auto k : list_kinds()) {
            out << kind_name(k) << (is_monotone_kind(k) ? "  (monotone)" : "") << "\n";
            for (int l = 1; l <= kNumLevels; ++l) {
                out << "  " << l << ":";
                for (const auto& [name, value] : params_for(k, l).values()) out << " " << name << "=" << value;
                out << "\n";
            }
        }
        return kExitOk;
    }
    if (o.input.empty() || o.out.empty()) throw UsageError("distort needs --input and --out (or --list)");
    if (o.level < 0 || o.level > kNumLevels) throw UsageError("--level must be 0 (all) or 1..5");
    const Image src = read_image(o.input);
    const auto kinds = o.kind == "all" ? list_kinds() : parse_kinds(o.kind);
    const bool single = kinds.size() == 1 && o.level != 0;
    if (single) {
        write_image(apply(src, DistortionSpec{kinds[0], o.level, cfg.seed}), o.out);
        out << "wrote " << o.out << "\n";
        return kExitOk;
    }
    fs::create_directories(o.out);
    int n = 0;
    for (auto k : kinds)
        for (int l = o.level == 0 ? 1 : o.level; l <= (o.level == 0 ? kNumLevels : o.level); ++l) {
            write_image(apply(src, DistortionSpec{k, l, cfg.seed}),
                        fs::path(o.out) / (std::string(kind_name(k)) + "_" + std::to_string(l) + ".png"));
            ++n;
        }
    out << "wrote " << n << " images to " << o.out << "\n";
    return kExitOk;
}

struct PairsOpts {
    Common common;
    std::string sources;
    std::string out;
    int limit = 8;
};

int cmd_pairs(const PairsOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    const fs::path src_dir = pick_path(o.sources, cfg, "sources", "source directory (--sources)");
    const fs::path dir = pick_path(o.out, cfg, "out", "output directory (--out)");
    auto paths = list_images(src_dir);
    if (o.limit > 0 && static_cast<int>(paths.size()) > o.limit) paths.resize(static_cast<std::size_t>(o.limit));
    const auto sources = load_images(paths);
    Rng rng(Rng::derive(cfg.seed, 0x9a1));
    const PairBatch batch = make_batch(rng, sources, cfg.pipeline, cfg.threads);

    fs::create_directories(dir);
    std::ofstream csv(dir / "pairs.csv", std::ios::trunc);
    csv << "pair,query,key,source,chunk,scale,aug,query_crop,key_crop,swapped\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::string q = "q_" + numbered(static_cast<int>(i)) + ".png";
        const std::string k = "k_" + numbered(static_cast<int>(i)) + ".png";
        write_image(batch.queries[i], dir / q);
        write_image(batch.keys[i], dir / k);
        const PairMeta& m = batch.meta[i];
        csv << i << ',' << q << ',' << k << ',' << paths[m.source].filename().string() << ',' << m.chunk << ','
            << m.scale << ',' << m.aug << ',' << m.query_crop << ',' << m.key_crop << ',' << (m.swapped ? 1 : 0) << '\n';
    }
    write_run_manifest(dir, command_line(args), cfg);
    out << "wrote " << batch.size() << " pairs (" << batch.skipped << " source/scale combinations skipped), digest "
        << Digest::to_hex(batch.digest()) << "\n";
    return kExitOk;
}

struct TrainOpts {
    Common common;
    std::string sources;
    std::string out;
    int log_every = 50;
};

int cmd_train(const TrainOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    const fs::path src_dir = pick_path(o.sources, cfg, "sources", "source directory (--sources)");
    const fs::path dir = pick_path(o.out, cfg, "out", "output directory (--out)");
    const auto sources = load_images(list_images(src_dir));
    const TrainConfig tc = cfg.resolved_train();
    const long planned = planned_steps(sources, cfg.pipeline, tc);
    out << "training on " << sources.size() << " images, " << planned << " steps\n";
    if (planned < 1) throw InvalidArgument("the corpus is too small for one batch");

    const TrainResult r = train(sources, cfg.pipeline, tc, cfg.encoder, [&](const LogRow& row) {
        if (o.log_every > 0 && (row.step % o.log_every == 0 || row.step + 1 == planned)) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "step %ld/%ld epoch %d lr %.5f loss %.4f queue %d\n", row.step + 1, planned,
                          row.epoch, row.lr, row.loss, row.queue_fill);
            out << buf << std::flush;
        }
    });
    fs::create_directories(dir);
    save_checkpoint(dir / "checkpoint.bin", r.state, cfg.digest());
    write_training_log(dir / "training_log.csv", r.log);
    write_run_manifest(dir, command_line(args), cfg);
    out << "wrote " << (dir / "checkpoint.bin").string() << " (online encoder digest "
        << Digest::to_hex(r.state.online.digest()) << ")\n";
    return kExitOk;
}

struct ExtractOpts {
    Common common;
    std::string manifest;
    std::string checkpoint;
    std::string content_checkpoint;
    std::string out;
    bool fr = false;
};

int cmd_extract(const ExtractOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    const Manifest m = Manifest::load(pick_path(o.manifest, cfg, "manifest", "manifest (--manifest)"));
    const Encoder quality = load_encoder(pick_path(o.checkpoint, cfg, "checkpoint", "quality checkpoint (--checkpoint)"));
    std::optional<Encoder> content;
    const auto cc = o.content_checkpoint.empty() && cfg.paths.count("content_checkpoint")
                        ? cfg.paths.at("content_checkpoint")
                        : o.content_checkpoint;
    if (!cc.empty()) content = load_encoder(cc);
    const fs::path path = pick_path(o.out, cfg, "features", "feature file (--out)");
    const Matrix x = extract_manifest(m, content ? &*content : nullptr, quality, o.fr, cfg.threads);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto names = manifest_paths(m);
    save_features(path, x, names);
    write_run_manifest(path.has_parent_path() ? path.parent_path() : fs::path("."), command_line(args), cfg);
    out << "wrote " << x.rows() << " x " << x.cols() << " features to " << path.string() << "\n";
    return kExitOk;
}

struct RegressOpts {
    Common common;
    std::string manifest;
    std::string features;
    std::string out;
    std::optional<double> lambda;
};

int cmd_regress(const RegressOpts& o, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    const Manifest m = Manifest::load(pick_path(o.manifest, cfg, "manifest", "manifest (--manifest)"), false);
    const Matrix x = features_for(m, pick_path(o.features, cfg, "features", "feature file (--features)"));
    const auto y = m.mos();
    double lambda = 0.0;
    if (o.lambda) {
        lambda = *o.lambda;
    } else {
        // Same 90/10 selection as cross-evaluation, then refit on everything.
        Manifest inner = m;
        for (auto& e : inner.entries) e.split.reset();
        SplitSpec spec = cfg.split_spec(inner.has_content());
        spec.train = 0.9;
        spec.val = 0.1;
        spec.test = 0.0;
        const Split s = split(inner, spec, 0);
        std::vector<double> yt, yv;
        for (auto i : s.train) yt.push_back(y[i]);
        for (auto i : s.val) yv.push_back(y[i]);
        lambda = select_lambda(select_rows(x, s.train), yt, select_rows(x, s.val), yv, cfg.grid.values()).model.lambda;
    }
    const RidgeModel model = fit_ridge(x, y, lambda);
    const fs::path path = pick_path(o.out, cfg, "model", "model file (--out)");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_model(path, model);
    char buf[160];
    std::snprintf(buf, sizeof buf, "lambda %.6g, training SRCC %.4f, wrote %s\n", lambda, srcc(predict_all(model, x), y),
                  path.string().c_str());
    out << buf;
    return kExitOk;
}

struct EvalOpts {
    Common common;
    std::string manifest;
    std::string features;
    std::string checkpoint;
    std::string content_checkpoint;
    bool fr = false;
    std::string out;
    std::string name;
};

int cmd_eval(const EvalOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    const fs::path mpath = pick_path(o.manifest, cfg, "manifest", "manifest (--manifest)");
    const bool from_features = !o.features.empty() || (o.checkpoint.empty() && cfg.paths.count("features"));
    const Manifest m = Manifest::load(mpath, !from_features);
    Matrix x;
    if (from_features) {
        x = features_for(m, pick_path(o.features, cfg, "features", "feature file (--features)"));
    } else {
        const Encoder quality = load_encoder(pick_path(o.checkpoint, cfg, "checkpoint", "--features or --checkpoint"));
        std::optional<Encoder> content;
        if (!o.content_checkpoint.empty()) content = load_encoder(o.content_checkpoint);
        x = extract_manifest(m, content ? &*content : nullptr, quality, o.fr, cfg.threads);
    }
    const EvalReport report = run_protocol(m, x, cfg.split_spec(m.has_content()), cfg.grid.values(), cfg.threads);
    const std::string name = o.name.empty() ? mpath.stem().string() : o.name;
    const std::string table = format_report(name, report);
    out << table;
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        write_report_csv(fs::path(o.out) / "report.csv", report);
        std::ofstream(fs::path(o.out) / "report.txt", std::ios::trunc) << table;
        write_run_manifest(o.out, command_line(args), cfg);
    }
    return kExitOk;
}

struct CrossOpts {
    Common common;
    std::string train_manifest, train_features, test_manifest, test_features, out;
};

int cmd_cross(const CrossOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    const Manifest tr = Manifest::load(pick_path(o.train_manifest, cfg, "manifest", "--train-manifest"), false);
    const Manifest te = Manifest::load(pick_path(o.test_manifest, cfg, "test_manifest", "--test-manifest"), false);
    const Matrix xtr = features_for(tr, pick_path(o.train_features, cfg, "features", "--train-features"));
    const Matrix xte = features_for(te, pick_path(o.test_features, cfg, "test_features", "--test-features"));
    const CrossResult r = run_cross(tr, xtr, te, xte, cfg.grid.values(), cfg.seed);
    char buf[160];
    std::snprintf(buf, sizeof buf, "cross SRCC %.4f PLCC %.4f (lambda %.6g)\n", r.srcc, r.plcc, r.lambda);
    out << buf;
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        std::ofstream csv(fs::path(o.out) / "cross.csv", std::ios::trunc);
        std::snprintf(buf, sizeof buf, "srcc,plcc,lambda\n%.9f,%.9f,%.9g\n", r.srcc, r.plcc, r.lambda);
        csv << buf;
        write_run_manifest(o.out, command_line(args), cfg);
    }
    return kExitOk;
}

struct GradOpts {
    Common common;
    int seeds = 1;
};

int cmd_gradcheck(const GradOpts& o, std::ostream& out) {
    const RunConfig cfg = resolve(o.common);
    if (o.seeds < 1) throw UsageError("--seeds must be at least 1");
    double worst = 0.0;
    for (int i = 0; i < o.seeds; ++i) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
        const GradCheckResult r = gradient_check(seed);
        char buf[200];
        std::snprintf(buf, sizeof buf, "seed %llu: max relative error %.3e over %zu parameters (worst %s)\n",
                      static_cast<unsigned long long>(seed), r.max_rel_error, r.checked, r.worst_param.c_str());
        out << buf;
        worst = std::max(worst, r.max_rel_error);
    }
    const bool ok = worst < 1e-4;
    out << (ok ? "PASS" : "FAIL") << " gradient check (threshold 1e-4)\n";
    return ok ? kExitOk : kExitFailure;
}

// Compact versions of the oracle suites, for checking an installed binary.
int cmd_selftest(const Common& common, std::ostream& out) {
    const RunConfig cfg = resolve(common);
    Rng rng(Rng::derive(cfg.seed, 0x5e1f));
    int failures = 0;
    auto report = [&](const char* name, bool ok, double value) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s %-28s %.3e\n", ok ? "PASS" : "FAIL", name, value);
        out << buf;
        failures += !ok;
    };
    auto unit = [&](int d) {
        std::vector<double> v(static_cast<std::size_t>(d));
        double n = 0.0;
        for (double& x : v) {
            x = rng.normal();
            n += x * x;
        }
        for (double& x : v) x /= std::sqrt(n);
        return v;
    };

    {
        double worst = 0.0;
        for (int t = 0; t < 200; ++t) {
            const int n = 3 + static_cast<int>(rng.below(30));
            std::vector<double> x(n), y(n);
            for (int i = 0; i < n; ++i) {
                x[i] = static_cast<double>(rng.below(6));
                y[i] = rng.normal();
            }
            if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) continue;
            std::vector<long double> rx(n), ry(n);
            for (int i = 0; i < n; ++i) {
                long double lx = 0, ex = 0, ly = 0, ey = 0;
                for (int j = 0; j < n; ++j) {
                    lx += x[j] < x[i];
                    ex += x[j] == x[i];
                    ly += y[j] < y[i];
                    ey += y[j] == y[i];
                }
                rx[i] = lx + (ex + 1) / 2;
                ry[i] = ly + (ey + 1) / 2;
            }
            long double mx = 0, my = 0;
            for (int i = 0; i < n; ++i) {
                mx += rx[i] / n;
                my += ry[i] / n;
            }
            long double sxy = 0, sxx = 0, syy = 0;
            for (int i = 0; i < n; ++i) {
                sxy += (rx[i] - mx) * (ry[i] - my);
                sxx += (rx[i] - mx) * (rx[i] - mx);
                syy += (ry[i] - my) * (ry[i] - my);
            }
            worst = std::max(worst, static_cast<double>(std::fabs(srcc(x, y) - sxy / std::sqrt(sxx * syy))));
        }
        report("srcc vs brute force", worst < 1e-9, worst);
    }
    {
        double worst = 0.0;
        for (int t = 0; t < 200; ++t) {
            const double tau = std::array{0.07, 0.2, 1.0}[t % 3];
            const auto q = unit(16), k = unit(16);
            std::vector<std::vector<double>> negs;
            for (int i = 0; i < 64; ++i) negs.push_back(unit(16));
            auto logit = [&](const std::vector<double>& v) {
                long double s = 0;
                for (int i = 0; i < 16; ++i) s += static_cast<long double>(q[i]) * v[i];
                return std::exp(s / tau);
            };
            long double den = logit(k);
            for (const auto& v : negs) den += logit(v);
            worst = std::max(worst, static_cast<double>(std::fabs(info_nce_loss(q, k, negs, tau) + std::log(logit(k) / den))));
        }
        report("info_nce vs long double", worst < 1e-10, worst);
    }
    {
        NegativeQueue queue(13, 2);
        std::deque<std::vector<double>> model;
        bool ok = true;
        for (int op = 0; op < 2000 && ok; ++op) {
            const auto v = unit(2);
            queue.push(v);
            model.push_back(v);
            if (model.size() > 13) model.pop_front();
            ok = queue.size() == static_cast<int>(model.size());
            for (int i = 0; ok && i < queue.size(); ++i) ok = std::equal(model[i].begin(), model[i].end(), queue.at(i).begin());
        }
        report("queue vs FIFO model", ok, 0.0);
    }
    {
        Rng er(1);
        const Encoder online = Encoder::create(EncoderConfig{{4, 8}, 16, 8}, er);
        Encoder key = Encoder::create(EncoderConfig{{4, 8}, 16, 8}, er);
        momentum_update(key, online, 0.0);
        report("momentum m=0 copies", key.digest() == online.digest(), 0.0);
    }
    {
        const GradCheckResult r = gradient_check(cfg.seed);
        report("gradient check", r.max_rel_error < 1e-4, r.max_rel_error);
    }
    out << (failures == 0 ? "all self-tests passed\n" : "self-tests FAILED\n");
    return failures == 0 ? kExitOk : kExitFailure;
}

const char* category(const std::exception& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid-argument";
    if (dynamic_cast<const NumericFailure*>(&e)) return "numeric-failure";
    if (dynamic_cast<const SamplingExhausted*>(&e)) return "sampling-exhausted";
    if (dynamic_cast<const DegenerateMetric*>(&e)) return "degenerate-metric";
    if (dynamic_cast<const StateError*>(&e)) return "state-error";
    if (dynamic_cast<const IoError*>(&e)) return "io-error";
    if (dynamic_cast<const FormatError*>(&e)) return "format-error";
    return "internal-error";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quality-aware contrastive representations for image quality assessment", "reiqa"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every command");

    SynthOpts synth;
    auto* s_synth = app.add_subcommand("synth", "generate a procedural image corpus, optionally with a labeled distorted set");
    add_common(s_synth, synth.common);
    s_synth->add_option("--out", synth.out, "output directory");
    s_synth->add_option("--count", synth.count, "number of pristine images");
    s_synth->add_option("--width", synth.width, "image width");
    s_synth->add_option("--height", synth.height, "image height");
    s_synth->add_option("--distorted", synth.distorted, "distorted kinds per image (0 = none)");
    s_synth->add_option("--kinds", synth.kinds, "all, monotone or a comma list of kind names");
    s_synth->add_flag("--all-levels", synth.all_levels, "every chosen kind at all five levels");

    DistortOpts distort;
    auto* s_distort = app.add_subcommand("distort", "apply bank distortions to one image");
    add_common(s_distort, distort.common);
    s_distort->add_option("--input", distort.input, "input image");
    s_distort->add_option("--out", distort.out, "output image, or directory for several");
    s_distort->add_option("--kind", distort.kind, "kind name, comma list, monotone or all");
    s_distort->add_option("--level", distort.level, "1..5, or 0 for all levels");
    s_distort->add_flag("--list", distort.list, "print the kinds and severity table");

    PairsOpts pairs;
    auto* s_pairs = app.add_subcommand("pairs", "build one batch of query/key training pairs");
    add_common(s_pairs, pairs.common);
    s_pairs->add_option("--sources", pairs.sources, "directory of pristine images");
    s_pairs->add_option("--out", pairs.out, "output directory");
    s_pairs->add_option("--limit", pairs.limit, "use the first N sources (0 = all)");

    TrainOpts trainopt;
    auto* s_train = app.add_subcommand("train", "contrastive training of an encoder");
    add_common(s_train, trainopt.common);
    s_train->add_option("--sources", trainopt.sources, "directory of pristine images");
    s_train->add_option("--out", trainopt.out, "output directory");
    s_train->add_option("--log-every", trainopt.log_every, "print every N steps (0 = quiet)");

    ExtractOpts extract;
    auto* s_extract = app.add_subcommand("extract", "pooled features of frozen encoders for a manifest");
    add_common(s_extract, extract.common);
    s_extract->add_option("--manifest", extract.manifest, "manifest CSV");
    s_extract->add_option("--checkpoint", extract.checkpoint, "quality encoder checkpoint");
    s_extract->add_option("--content-checkpoint", extract.content_checkpoint, "content encoder checkpoint");
    s_extract->add_option("--out", extract.out, "feature file");
    s_extract->add_flag("--fr", extract.fr, "full-reference |h_ref - h_dist| features");

    RegressOpts regress;
    auto* s_regress = app.add_subcommand("regress", "fit the ridge head on a whole manifest");
    add_common(s_regress, regress.common);
    s_regress->add_option("--manifest", regress.manifest, "manifest CSV");
    s_regress->add_option("--features", regress.features, "feature file");
    s_regress->add_option("--out", regress.out, "model file");
    s_regress->add_option("--lambda", regress.lambda, "fixed lambda instead of the grid search");

    EvalOpts evalopt;
    auto* s_eval = app.add_subcommand("eval", "repeated train/val/test protocol, median SRCC and PLCC");
    add_common(s_eval, evalopt.common);
    s_eval->add_option("--manifest", evalopt.manifest, "manifest CSV");
    s_eval->add_option("--features", evalopt.features, "feature file");
    s_eval->add_option("--checkpoint", evalopt.checkpoint, "extract with this quality checkpoint instead");
    s_eval->add_option("--content-checkpoint", evalopt.content_checkpoint, "content encoder checkpoint");
    s_eval->add_flag("--fr", evalopt.fr, "full-reference features when extracting");
    s_eval->add_option("--out", evalopt.out, "report directory");
    s_eval->add_option("--name", evalopt.name, "dataset name in the table");

    CrossOpts cross;
    auto* s_cross = app.add_subcommand("cross-eval", "train the head on one dataset, test on another");
    add_common(s_cross, cross.common);
    s_cross->add_option("--train-manifest", cross.train_manifest, "training manifest");
    s_cross->add_option("--train-features", cross.train_features, "training features");
    s_cross->add_option("--test-manifest", cross.test_manifest, "test manifest");
    s_cross->add_option("--test-features", cross.test_features, "test features");
    s_cross->add_option("--out", cross.out, "result directory");

    GradOpts grad;
    auto* s_grad = app.add_subcommand("gradcheck", "finite-difference check of the encoder backward pass");
    add_common(s_grad, grad.common);
    s_grad->add_option("--seeds", grad.seeds, "check seeds seed .. seed+N-1");

    Common selftest;
    auto* s_self = app.add_subcommand("selftest", "metric, loss, queue and gradient oracle checks");
    add_common(s_self, selftest);

    std::vector<std::string> argv_store{"reiqa"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (s_synth->parsed()) return cmd_synth(synth, args, out);
        if (s_distort->parsed()) return cmd_distort(distort, out);
        if (s_pairs->parsed()) return cmd_pairs(pairs, args, out);
        if (s_train->parsed()) return cmd_train(trainopt, args, out);
        if (s_extract->parsed()) return cmd_extract(extract, args, out);
        if (s_regress->parsed()) return cmd_regress(regress, out);
        if (s_eval->parsed()) return cmd_eval(evalopt, args, out);
        if (s_cross->parsed()) return cmd_cross(cross, args, out);
        if (s_grad->parsed()) return cmd_gradcheck(grad, out);
        if (s_self->parsed()) return cmd_selftest(selftest, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error (" << category(e) << "): " << e.what() << "\n";
        return kExitFailure;
    }
    err << "no command given\n";
    return kExitUsage;
}

}  // namespace reiqa
