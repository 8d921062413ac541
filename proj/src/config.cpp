#include "educe/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace educe {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct Key {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& why) {
    throw ConfigError("config: key '" + key + "': bad value '" + value + "' (" + why + ")");
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        bad_value(key, v, "expected a number");
    }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        bad_value(key, v, "expected a non-negative integer");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        bad_value(key, v, "expected a non-negative integer");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    bad_value(key, v, "expected on/off");
}

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

const std::vector<Key>& registry() {
    static const std::vector<Key> keys = {
        {"task",
         [](RunConfig& c, const std::string& v) {
             if (v == "classification")
                 c.train.task = TaskKind::Classification;
             else if (v == "regression")
                 c.train.task = TaskKind::Regression;
             else
                 bad_value("task", v, "classification or regression");
         },
         [](const RunConfig& c) {
             return c.train.task == TaskKind::Classification ? "classification" : "regression";
         }},
        {"model",
         [](RunConfig& c, const std::string& v) { c.train.model = model_kind_from(v); },
         [](const RunConfig& c) { return model_kind_name(c.train.model); }},
        {"concepts",
         [](RunConfig& c, const std::string& v) { c.train.concepts = parse_size("concepts", v); },
         [](const RunConfig& c) { return std::to_string(c.train.concepts); }},
        {"embedding_dim",
         [](RunConfig& c, const std::string& v) {
             c.train.embed_dim = parse_size("embedding_dim", v);
         },
         [](const RunConfig& c) { return std::to_string(c.train.embed_dim); }},
        {"hidden",
         [](RunConfig& c, const std::string& v) { c.train.hidden = parse_size("hidden", v); },
         [](const RunConfig& c) { return std::to_string(c.train.hidden); }},
        {"lambda0",
         [](RunConfig& c, const std::string& v) {
             c.train.lambda0 = parse_double("lambda0", v);
             if (c.train.lambda0 < 0.0) bad_value("lambda0", v, "must be >= 0");
         },
         [](const RunConfig& c) { return fmt_double(c.train.lambda0); }},
        {"lambda_growth",
         [](RunConfig& c, const std::string& v) {
             c.train.lambda_growth = parse_double("lambda_growth", v);
         },
         [](const RunConfig& c) { return fmt_double(c.train.lambda_growth); }},
        {"lambda_l1",
         [](RunConfig& c, const std::string& v) {
             c.train.lambda_l1 = parse_double("lambda_l1", v);
             if (c.train.lambda_l1 < 0.0) bad_value("lambda_l1", v, "must be >= 0");
         },
         [](const RunConfig& c) { return fmt_double(c.train.lambda_l1); }},
        {"r",
         [](RunConfig& c, const std::string& v) {
             c.train.r = parse_double("r", v);
             if (c.train.r < 0.0 || c.train.r > 1.0) bad_value("r", v, "must be in [0,1]");
         },
         [](const RunConfig& c) { return fmt_double(c.train.r); }},
        {"learning_rate",
         [](RunConfig& c, const std::string& v) {
             c.train.learning_rate = parse_double("learning_rate", v);
             if (c.train.learning_rate <= 0.0) bad_value("learning_rate", v, "must be > 0");
         },
         [](const RunConfig& c) { return fmt_double(c.train.learning_rate); }},
        {"batch_size",
         [](RunConfig& c, const std::string& v) {
             c.train.batch_size = parse_size("batch_size", v);
         },
         [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
        {"max_epochs",
         [](RunConfig& c, const std::string& v) {
             c.train.max_epochs = parse_size("max_epochs", v);
         },
         [](const RunConfig& c) { return std::to_string(c.train.max_epochs); }},
        {"patience",
         [](RunConfig& c, const std::string& v) { c.train.patience = parse_size("patience", v); },
         [](const RunConfig& c) { return std::to_string(c.train.patience); }},
        {"clip",
         [](RunConfig& c, const std::string& v) {
             c.train.clip = parse_double("clip", v);
             if (c.train.clip < 0.0) bad_value("clip", v, "must be >= 0");
         },
         [](const RunConfig& c) { return fmt_double(c.train.clip); }},
        {"entropy_weight",
         [](RunConfig& c, const std::string& v) {
             c.train.entropy_weight = parse_double("entropy_weight", v);
         },
         [](const RunConfig& c) { return fmt_double(c.train.entropy_weight); }},
        {"seed",
         [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("seed", v); },
         [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        {"eval_seed",
         [](RunConfig& c, const std::string& v) { c.train.eval_seed = parse_u64("eval_seed", v); },
         [](const RunConfig& c) { return std::to_string(c.train.eval_seed); }},
        {"split_seed",
         [](RunConfig& c, const std::string& v) { c.split_seed = parse_u64("split_seed", v); },
         [](const RunConfig& c) { return std::to_string(c.split_seed); }},
        {"embedding_seed",
         [](RunConfig& c, const std::string& v) {
             c.embedding_seed = parse_u64("embedding_seed", v);
         },
         [](const RunConfig& c) { return std::to_string(c.embedding_seed); }},
        {"min_span_offset",
         [](RunConfig& c, const std::string& v) {
             c.train.window.min_offset = parse_size("min_span_offset", v);
         },
         [](const RunConfig& c) { return std::to_string(c.train.window.min_offset); }},
        {"max_span_offset",
         [](RunConfig& c, const std::string& v) {
             c.train.window.max_offset = parse_size("max_span_offset", v);
         },
         [](const RunConfig& c) { return std::to_string(c.train.window.max_offset); }},
        {"log_timing",
         [](RunConfig& c, const std::string& v) {
             c.train.log_timing = parse_bool("log_timing", v);
         },
         [](const RunConfig& c) { return c.train.log_timing ? std::string("on") : std::string("off"); }},
        {"train",
         [](RunConfig& c, const std::string& v) { c.train_path = v; },
         [](const RunConfig& c) { return c.train_path; }},
        {"val",
         [](RunConfig& c, const std::string& v) { c.val_path = v; },
         [](const RunConfig& c) { return c.val_path; }},
        {"test",
         [](RunConfig& c, const std::string& v) { c.test_path = v; },
         [](const RunConfig& c) { return c.test_path; }},
        {"embeddings",
         [](RunConfig& c, const std::string& v) { c.embeddings_path = v; },
         [](const RunConfig& c) { return c.embeddings_path; }},
        {"embedding_scale",
         [](RunConfig& c, const std::string& v) {
             c.embedding_scale = parse_double("embedding_scale", v);
             if (c.embedding_scale <= 0.0) bad_value("embedding_scale", v, "must be > 0");
         },
         [](const RunConfig& c) { return fmt_double(c.embedding_scale); }},
        {"split",
         [](RunConfig& c, const std::string& v) {
             c.split_fractions.clear();
             std::istringstream is(v);
             std::string cell;
             while (std::getline(is, cell, ','))
                 c.split_fractions.push_back(parse_double("split", trim(cell)));
             if (c.split_fractions.size() < 2 || c.split_fractions.size() > 3)
                 bad_value("split", v, "expected 2 or 3 comma-separated fractions");
         },
         [](const RunConfig& c) {
             std::string out;
             for (std::size_t i = 0; i < c.split_fractions.size(); ++i) {
                 if (i) out += ",";
                 out += fmt_double(c.split_fractions[i]);
             }
             return out;
         }},
        {"min_count",
         [](RunConfig& c, const std::string& v) { c.min_count = parse_size("min_count", v); },
         [](const RunConfig& c) { return std::to_string(c.min_count); }},
        {"classes",
         [](RunConfig& c, const std::string& v) { c.n_classes = parse_size("classes", v); },
         [](const RunConfig& c) { return std::to_string(c.n_classes); }},
        {"out_dir",
         [](RunConfig& c, const std::string& v) { c.out_dir = v; },
         [](const RunConfig& c) { return c.out_dir; }},
        {"argmax_eval",
         [](RunConfig& c, const std::string& v) { c.argmax_eval = parse_bool("argmax_eval", v); },
         [](const RunConfig& c) { return c.argmax_eval ? std::string("on") : std::string("off"); }},
        {"neutral_label",
         [](RunConfig& c, const std::string& v) {
             c.neutral_label = parse_size("neutral_label", v);
         },
         [](const RunConfig& c) { return std::to_string(c.neutral_label); }},
        {"word_label_count",
         [](RunConfig& c, const std::string& v) {
             c.word_label_count = parse_size("word_label_count", v);
         },
         [](const RunConfig& c) { return std::to_string(c.word_label_count); }},
    };
    return keys;
}

const Key* find_key(const std::string& name) {
    for (const auto& k : registry())
        if (k.name == name) return &k;
    return nullptr;
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value,
              const std::string& where) {
    const Key* k = find_key(key);
    if (!k) throw ConfigError("config: unknown key '" + key + "' (" + where + ")");
    k->set(cfg, value);
}

void check_paths(const RunConfig& cfg) {
    auto need = [](const std::string& path, const char* key) {
        if (path.empty()) return;
        if (!std::filesystem::exists(path))
            throw ConfigError("config: key '" + std::string(key) + "': path does not exist: " +
                              path);
    };
    need(cfg.train_path, "train");
    need(cfg.val_path, "val");
    need(cfg.test_path, "test");
    if (cfg.embeddings_path != "none") need(cfg.embeddings_path, "embeddings");
}

}  // namespace

RunConfig default_config() {
    return RunConfig{};
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : registry()) out.push_back(k.name);
    return out;
}

RunConfig parse_config_lines(const std::vector<std::string>& lines, const std::string& origin,
                             const std::vector<std::string>& overrides) {
    RunConfig cfg = default_config();
    std::size_t line_no = 0;
    for (const auto& raw : lines) {
        ++line_no;
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + origin + ":" + std::to_string(line_no) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        apply_kv(cfg, key, value, origin + ":" + std::to_string(line_no));
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: override '" + ov + "': expected key=value");
        apply_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)), "command line");
    }
    check_paths(cfg);
    return cfg;
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return parse_config_lines(lines, path, overrides);
}

std::string render_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : registry()) {
        out += k.name;
        out += " = ";
        out += k.get(cfg);
        out += "\n";
    }
    return out;
}

}  // namespace educe
