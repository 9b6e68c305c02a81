#include "reiqa/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "reiqa/digest.hpp"
#include "reiqa/error.hpp"

namespace reiqa {

namespace {

const std::vector<std::string> kPathKeys = {"sources",  "out",           "manifest",      "features",
                                            "checkpoint", "content_checkpoint", "model",  "test_manifest",
                                            "test_features"};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
T parse_int(const std::string& key, const std::string& v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw InvalidArgument(key + ": expected an integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
        throw InvalidArgument(key + ": expected a number, got '" + v + "'");
    }
    return d;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
    return s;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& v)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
    const char* key;
    Setter set;
    Getter get;
};

#define REIQA_INT(name, member)                                                                                \
    Field {                                                                                                    \
        name, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_int<int>(k, v); }, \
            [](const RunConfig& c) { return std::to_string(c.member); }                                        \
    }
#define REIQA_DOUBLE(name, member)                                                                              \
    Field {                                                                                                     \
        name, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); }, \
            [](const RunConfig& c) { return fmt_double(c.member); }                                             \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        Field{"run.seed",
              [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_int<std::uint64_t>(k, v); },
              [](const RunConfig& c) { return std::to_string(c.seed); }},
        REIQA_INT("run.threads", threads),

        REIQA_INT("pipeline.n_aug", pipeline.n_aug),
        REIQA_INT("pipeline.patch", pipeline.patch),
        REIQA_DOUBLE("pipeline.ola_min", pipeline.ola.min_frac),
        REIQA_DOUBLE("pipeline.ola_max", pipeline.ola.max_frac),
        Field{"pipeline.scales",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.pipeline.scales.clear();
                  for (const auto& s : split_list(v)) c.pipeline.scales.push_back(parse_double(k, s));
              },
              [](const RunConfig& c) { return join_doubles(c.pipeline.scales); }},
        REIQA_INT("pipeline.max_crop_attempts", pipeline.max_crop_attempts),

        Field{"encoder.widths",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.encoder.widths.clear();
                  for (const auto& s : split_list(v)) c.encoder.widths.push_back(parse_int<int>(k, s));
              },
              [](const RunConfig& c) { return join_ints(c.encoder.widths); }},
        REIQA_INT("encoder.hidden", encoder.hidden),
        REIQA_INT("encoder.dim", encoder.dim),

        Field{"train.mode",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  if (v == "quality") c.train.mode = TrainMode::Quality;
                  else if (v == "content") c.train.mode = TrainMode::Content;
                  else throw InvalidArgument(k + ": expected quality or content, got '" + v + "'");
              },
              [](const RunConfig& c) { return std::string(c.train.mode == TrainMode::Quality ? "quality" : "content"); }},
        REIQA_DOUBLE("train.lr0", train.lr0),
        REIQA_INT("train.epochs", train.epochs),
        REIQA_DOUBLE("train.tau", train.tau),
        REIQA_DOUBLE("train.m", train.m),
        REIQA_INT("train.batch", train.batch),
        REIQA_INT("train.queue", train.queue),
        REIQA_DOUBLE("train.sgd_momentum", train.sgd_momentum),
        REIQA_DOUBLE("train.weight_decay", train.weight_decay),

        REIQA_INT("grid.points", grid.points),
        REIQA_DOUBLE("grid.lo", grid.lo),
        REIQA_DOUBLE("grid.hi", grid.hi),

        REIQA_DOUBLE("eval.train", eval.train),
        REIQA_DOUBLE("eval.val", eval.val),
        REIQA_DOUBLE("eval.test", eval.test),
        REIQA_INT("eval.repeats", eval.repeats),
        Field{"eval.grouping",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  if (v != "auto" && v != "image" && v != "content") {
                      throw InvalidArgument(k + ": expected auto, image or content, got '" + v + "'");
                  }
                  c.eval.grouping = v;
              },
              [](const RunConfig& c) { return c.eval.grouping; }},
    };
    return f;
}

#undef REIQA_INT
#undef REIQA_DOUBLE

}  // namespace

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
    const std::string v = trim(value);
    if (dotted_key.rfind("paths.", 0) == 0) {
        const std::string name = dotted_key.substr(6);
        if (std::find(kPathKeys.begin(), kPathKeys.end(), name) == kPathKeys.end()) {
            throw InvalidArgument("unknown config key '" + dotted_key + "'");
        }
        if (v.empty()) paths.erase(name);
        else paths[name] = v;
        return;
    }
    for (const auto& f : fields()) {
        if (dotted_key == f.key) {
            f.set(*this, dotted_key, v);
            return;
        }
    }
    throw InvalidArgument("unknown config key '" + dotted_key + "'");
}

void RunConfig::validate() const {
    if (threads < 1) throw InvalidArgument("run.threads must be at least 1");
    pipeline.validate();
    encoder.validate();
    resolved_train().validate();
    if (grid.points < 1 || !(grid.lo > 0.0) || grid.hi < grid.lo) throw InvalidArgument("grid needs points >= 1 and 0 < lo <= hi");
    split_spec(false).validate();
}

namespace {

std::string serialize_fields(const RunConfig& cfg, bool substantive_only) {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        const std::string key = f.key;
        if (substantive_only && key == "run.threads") continue;
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            out += (section.empty() ? "[" : "\n[") + sec + "]\n";
            section = sec;
        }
        out += key.substr(dot + 1) + " = " + f.get(cfg) + "\n";
    }
    return out;
}

}  // namespace

std::string RunConfig::serialize() const {
    std::string out = serialize_fields(*this, false);
    out += "\n[paths]\n";
    for (const auto& [k, v] : paths) out += k + " = " + v + "\n";
    return out;
}

std::uint64_t RunConfig::digest() const { return digest_of(serialize_fields(*this, true)); }

TrainConfig RunConfig::resolved_train() const {
    TrainConfig t = train;
    t.seed = seed;
    t.threads = threads;
    return t;
}

SplitSpec RunConfig::split_spec(bool has_content) const {
    SplitSpec s;
    s.train = eval.train;
    s.val = eval.val;
    s.test = eval.test;
    s.repeats = eval.repeats;
    s.seed = seed;
    const bool by_content = eval.grouping == "content" || (eval.grouping == "auto" && has_content);
    s.grouping = by_content ? Grouping::ByContent : Grouping::ByImage;
    return s;
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw FormatError("config line " + std::to_string(lineno) + ": bad section header");
            section = trim(t.substr(1, t.size() - 2));
            static const std::vector<std::string> known = {"run", "pipeline", "encoder", "train", "grid", "eval", "paths"};
            if (std::find(known.begin(), known.end(), section) == known.end()) {
                throw InvalidArgument("config line " + std::to_string(lineno) + ": unknown section '" + section + "'");
            }
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty()) throw FormatError("config line " + std::to_string(lineno) + ": key outside a section");
        cfg.set(section + "." + trim(t.substr(0, eq)), t.substr(eq + 1));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "run_manifest.txt", std::ios::trunc);
    if (!out) throw IoError("cannot write run manifest in " + dir.string());
    out << "command = " << command << "\n";
    out << "config_digest = " << Digest::to_hex(cfg.digest()) << "\n\n";
    out << cfg.serialize();
}

}  // namespace reiqa
