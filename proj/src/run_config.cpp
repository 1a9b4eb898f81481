#include "ssa/run_config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "ssa/errors.hpp"

namespace ssa {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
    V v{};
    const std::string t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError("'" + key + "': cannot parse '" + text + "'");
    }
    return v;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<SensorSpec> parse_sensors(const std::string& key, const std::string& text) {
    std::vector<SensorSpec> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("'" + key + "': expected C:c pairs, got '" + item + "'");
        out.push_back({parse_number<int>(key, item.substr(0, colon)), parse_number<int>(key, item.substr(colon + 1))});
    }
    if (out.empty()) throw ConfigError("'" + key + "': no sensors listed");
    return out;
}

std::string sensors_text(const std::vector<SensorSpec>& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i].bands) + ":" + std::to_string(s[i].msi_bands);
    }
    return out;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SSA_INT_FIELD(KEY, EXPR)                                                                     \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<int>(KEY, v); },      \
          [](const RunConfig& c) { return std::to_string(c.EXPR); }}
#define SSA_DOUBLE_FIELD(KEY, EXPR)                                                                  \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<double>(KEY, v); },   \
          [](const RunConfig& c) { return fmt_double(c.EXPR); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        Field{"seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>("seed", v); },
              [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        Field{"data.sensors", [](RunConfig& c, const std::string& v) { c.data.sensors = parse_sensors("data.sensors", v); },
              [](const RunConfig& c) { return sensors_text(c.data.sensors); }},
        SSA_INT_FIELD("data.scale", data.scale),
        SSA_INT_FIELD("data.patch", data.patch),
        SSA_INT_FIELD("data.stride", data.stride),
        SSA_INT_FIELD("data.images", data.images),
        SSA_INT_FIELD("data.image_size", data.image_size),
        SSA_DOUBLE_FIELD("data.smoothness", data.smoothness),
        SSA_INT_FIELD("model.d_feat", train.model.d_feat),
        SSA_INT_FIELD("model.c_max", train.model.c_max),
        SSA_INT_FIELD("model.enc_spe_depth", train.model.enc_spe_depth),
        SSA_INT_FIELD("model.enc_spa_depth", train.model.enc_spa_depth),
        SSA_INT_FIELD("model.decoder_hidden", train.model.decoder_hidden),
        SSA_INT_FIELD("model.decoder_layers", train.model.decoder_layers),
        SSA_INT_FIELD("train.steps", train.steps),
        SSA_INT_FIELD("train.batch_size", train.batch_size),
        SSA_DOUBLE_FIELD("train.lr_start", train.lr_start),
        SSA_DOUBLE_FIELD("train.lr_min", train.lr_min),
        SSA_DOUBLE_FIELD("train.lambda_ssim", train.lambda_ssim),
        SSA_DOUBLE_FIELD("train.weight_decay", train.weight_decay),
        SSA_DOUBLE_FIELD("train.beta1", train.beta1),
        SSA_DOUBLE_FIELD("train.beta2", train.beta2),
        SSA_DOUBLE_FIELD("train.eps", train.eps),
        SSA_INT_FIELD("train.checkpoint_every", train.checkpoint_every),
        SSA_INT_FIELD("train.probe_every", train.probe_every),
        SSA_INT_FIELD("train.probe_per_bucket", train.probe_per_bucket),
    };
    return table;
}

#undef SSA_INT_FIELD
#undef SSA_DOUBLE_FIELD

}  // namespace

void RunConfig::validate() const {
    train.validate();
    const auto& d = data;
    if (d.sensors.empty()) throw ConfigError("data.sensors: no sensors listed");
    for (const auto& s : d.sensors) {
        const std::string tag = std::to_string(s.bands) + ":" + std::to_string(s.msi_bands);
        if (s.bands < 1 || s.msi_bands < 1) throw ConfigError("data.sensors: band counts must be >= 1 (" + tag + ")");
        if (s.msi_bands > s.bands) throw ConfigError("data.sensors: c exceeds C in " + tag);
        if (s.bands + s.msi_bands > train.model.c_max) {
            throw ConfigError("data.sensors: C + c exceeds model.c_max = " + std::to_string(train.model.c_max) + " in " + tag);
        }
    }
    if (d.scale < 2) throw ConfigError("data.scale must be >= 2");
    if (d.patch < 1 || d.patch % d.scale != 0) throw ConfigError("data.patch must be a positive multiple of data.scale");
    if (d.stride < 1) throw ConfigError("data.stride must be >= 1");
    if (d.images < 1) throw ConfigError("data.images must be >= 1");
    if (d.image_size < d.patch) throw ConfigError("data.image_size must be >= data.patch");
    if (!(d.smoothness > 0.0)) throw ConfigError("data.smoothness must be positive");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto where = source + ":" + std::to_string(lineno) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            apply_setting(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path);
}

std::string to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

std::vector<std::string> run_config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

std::string bucket_id(int bands, int msi_bands) {
    return "c" + std::to_string(bands) + "_m" + std::to_string(msi_bands);
}

std::vector<BucketSpec> bucket_specs(const RunConfig& cfg) {
    std::vector<BucketSpec> out;
    for (const auto& s : cfg.data.sensors) {
        BucketSpec b;
        b.dataset_id = bucket_id(s.bands, s.msi_bands);
        b.bands = s.bands;
        b.msi_bands = s.msi_bands;
        b.scale = cfg.data.scale;
        b.patch = cfg.data.patch;
        b.stride = cfg.data.stride;
        b.images = cfg.data.images;
        b.image_size = cfg.data.image_size;
        b.smoothness = cfg.data.smoothness;
        out.push_back(b);
    }
    return out;
}

}  // namespace ssa
