#include "lacovl/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace lacovl {

const std::vector<std::string> kPromptTemplates = {
    "[class]",
    "a photo of [class].",
    "a photo of a [class] face.",
    "a [class] facial expression.",
};

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& key) {
    std::vector<std::size_t> out;
    for (const std::string& part : split_csv_list(s)) {
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(part)));
        } catch (const std::exception&) {
            throw ConfigInvalid(key + ": bad integer '" + part + "'");
        }
    }
    return out;
}

std::string join_size_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

std::string join_str_list(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += v[i];
    }
    return s;
}

}  // namespace

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

KvConfig KvConfig::parse_text(const std::string& text) {
    KvConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigInvalid("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigInvalid("line " + std::to_string(lineno) + ": empty key");
        cfg.kv_[key] = value;
    }
    return cfg;
}

void KvConfig::apply_override(const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigInvalid("override must be key=value, got '" + assignment + "'");
    std::string key = trim(assignment.substr(0, eq));
    std::string value = trim(assignment.substr(eq + 1));
    if (key.empty()) throw ConfigInvalid("override has empty key: '" + assignment + "'");
    kv_[key] = value;
}

std::string KvConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
    return out;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigInvalid(key + ": bad number '" + it->second + "'");
    }
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        std::int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigInvalid(key + ": bad integer '" + it->second + "'");
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigInvalid(key + ": bad bool '" + it->second + "'");
}

RunConfig RunConfig::from_kv(const KvConfig& kv) {
    RunConfig c;
    static const std::set<std::string> known = {
        "data.path",           "data.image_size",      "data.num_classes",
        "data.class_names",    "model.d_model",        "model.d_h",
        "model.d_e",           "model.d_clip",         "model.scale_channels",
        "model.scale_patches", "model.encoder_depth",  "model.encoder_heads",
        "model.head_depth",    "model.head_heads",     "model.bgca_heads",
        "model.gate_mode",     "model.gate_granularity", "model.alpha_reading",
        "model.attn_eps",      "model.teacher_residual", "model.tau",
        "model.alpha_scale",   "model.ecp",            "model.prompt_template",
        "ablation.landmark_guidance", "ablation.bgca", "ablation.vles",
        "train.lr",            "train.weight_decay",   "train.beta1",
        "train.beta2",         "train.adam_eps",       "train.batch_size",
        "train.epochs",        "train.lambda",         "train.val_fraction",
        "train.early_stop_acc", "train.seed",          "out.dir",
    };
    for (const auto& [k, v] : kv.entries()) {
        if (!known.count(k)) throw ConfigInvalid("unknown config key: " + k);
    }

    c.data_path = kv.get_str("data.path", c.data_path);
    c.image_size = static_cast<std::size_t>(kv.get_int("data.image_size", c.image_size));
    c.num_classes = static_cast<std::size_t>(kv.get_int("data.num_classes", c.num_classes));
    if (kv.has("data.class_names")) c.class_names = split_csv_list(kv.get_str("data.class_names", ""));

    c.d_model = static_cast<std::size_t>(kv.get_int("model.d_model", c.d_model));
    c.d_h = static_cast<std::size_t>(kv.get_int("model.d_h", c.d_h));
    c.d_e = static_cast<std::size_t>(kv.get_int("model.d_e", c.d_e));
    c.d_clip = static_cast<std::size_t>(kv.get_int("model.d_clip", c.d_clip));
    if (kv.has("model.scale_channels"))
        c.scale_channels = parse_size_list(kv.get_str("model.scale_channels", ""), "model.scale_channels");
    if (kv.has("model.scale_patches"))
        c.scale_patches = parse_size_list(kv.get_str("model.scale_patches", ""), "model.scale_patches");
    c.encoder_depth = static_cast<std::size_t>(kv.get_int("model.encoder_depth", c.encoder_depth));
    c.encoder_heads = static_cast<std::size_t>(kv.get_int("model.encoder_heads", c.encoder_heads));
    c.head_depth = static_cast<std::size_t>(kv.get_int("model.head_depth", c.head_depth));
    c.head_heads = static_cast<std::size_t>(kv.get_int("model.head_heads", c.head_heads));
    c.bgca_heads = static_cast<std::size_t>(kv.get_int("model.bgca_heads", c.bgca_heads));

    const std::string gate = kv.get_str("model.gate_mode", "fused");
    if (gate == "fused") c.gate_mode = GateMode::Fused;
    else if (gate == "separate") c.gate_mode = GateMode::Separate;
    else throw ConfigInvalid("model.gate_mode must be fused|separate, got '" + gate + "'");

    const std::string gran = kv.get_str("model.gate_granularity", "per_query");
    if (gran == "per_query") c.gate_granularity = GateGranularity::PerQuery;
    else if (gran == "per_head") c.gate_granularity = GateGranularity::PerHead;
    else if (gran == "per_element") c.gate_granularity = GateGranularity::PerElement;
    else throw ConfigInvalid("model.gate_granularity must be per_query|per_head|per_element");

    const std::string reading = kv.get_str("model.alpha_reading", "spec");
    if (reading == "spec") c.alpha_reading = AlphaReading::Spec;
    else if (reading == "swapped") c.alpha_reading = AlphaReading::Swapped;
    else throw ConfigInvalid("model.alpha_reading must be spec|swapped");

    c.attn_eps = kv.get_double("model.attn_eps", c.attn_eps);
    c.teacher_residual = kv.get_bool("model.teacher_residual", c.teacher_residual);
    c.tau = kv.get_double("model.tau", c.tau);
    c.alpha_scale = kv.get_double("model.alpha_scale", c.alpha_scale);
    c.ecp = kv.get_bool("model.ecp", c.ecp);
    c.prompt_template = static_cast<std::size_t>(kv.get_int("model.prompt_template", c.prompt_template));

    c.ablation.landmark_guidance = kv.get_bool("ablation.landmark_guidance", true);
    c.ablation.bgca = kv.get_bool("ablation.bgca", true);
    c.ablation.vles = kv.get_bool("ablation.vles", true);

    c.lr = kv.get_double("train.lr", c.lr);
    c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
    c.beta1 = kv.get_double("train.beta1", c.beta1);
    c.beta2 = kv.get_double("train.beta2", c.beta2);
    c.adam_eps = kv.get_double("train.adam_eps", c.adam_eps);
    c.batch_size = static_cast<std::size_t>(kv.get_int("train.batch_size", c.batch_size));
    c.epochs = static_cast<std::size_t>(kv.get_int("train.epochs", c.epochs));
    c.lambda = kv.get_double("train.lambda", c.lambda);
    c.val_fraction = kv.get_double("train.val_fraction", c.val_fraction);
    c.early_stop_acc = kv.get_double("train.early_stop_acc", c.early_stop_acc);
    c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<std::int64_t>(c.seed)));
    c.out_dir = kv.get_str("out.dir", c.out_dir);
    return c;
}

KvConfig RunConfig::to_kv() const {
    KvConfig kv;
    kv.set("data.path", data_path);
    kv.set("data.image_size", std::to_string(image_size));
    kv.set("data.num_classes", std::to_string(num_classes));
    kv.set("data.class_names", join_str_list(class_names));
    kv.set("model.d_model", std::to_string(d_model));
    kv.set("model.d_h", std::to_string(d_h));
    kv.set("model.d_e", std::to_string(d_e));
    kv.set("model.d_clip", std::to_string(d_clip));
    kv.set("model.scale_channels", join_size_list(scale_channels));
    kv.set("model.scale_patches", join_size_list(scale_patches));
    kv.set("model.encoder_depth", std::to_string(encoder_depth));
    kv.set("model.encoder_heads", std::to_string(encoder_heads));
    kv.set("model.head_depth", std::to_string(head_depth));
    kv.set("model.head_heads", std::to_string(head_heads));
    kv.set("model.bgca_heads", std::to_string(bgca_heads));
    kv.set("model.gate_mode", gate_mode == GateMode::Fused ? "fused" : "separate");
    kv.set("model.gate_granularity", gate_granularity == GateGranularity::PerQuery ? "per_query"
                                     : gate_granularity == GateGranularity::PerHead ? "per_head"
                                                                                    : "per_element");
    kv.set("model.alpha_reading", alpha_reading == AlphaReading::Spec ? "spec" : "swapped");
    kv.set("model.attn_eps", fmt_double(attn_eps));
    kv.set("model.teacher_residual", teacher_residual ? "true" : "false");
    kv.set("model.tau", fmt_double(tau));
    kv.set("model.alpha_scale", fmt_double(alpha_scale));
    kv.set("model.ecp", ecp ? "true" : "false");
    kv.set("model.prompt_template", std::to_string(prompt_template));
    kv.set("ablation.landmark_guidance", ablation.landmark_guidance ? "true" : "false");
    kv.set("ablation.bgca", ablation.bgca ? "true" : "false");
    kv.set("ablation.vles", ablation.vles ? "true" : "false");
    kv.set("train.lr", fmt_double(lr));
    kv.set("train.weight_decay", fmt_double(weight_decay));
    kv.set("train.beta1", fmt_double(beta1));
    kv.set("train.beta2", fmt_double(beta2));
    kv.set("train.adam_eps", fmt_double(adam_eps));
    kv.set("train.batch_size", std::to_string(batch_size));
    kv.set("train.epochs", std::to_string(epochs));
    kv.set("train.lambda", fmt_double(lambda));
    kv.set("train.val_fraction", fmt_double(val_fraction));
    kv.set("train.early_stop_acc", fmt_double(early_stop_acc));
    kv.set("train.seed", std::to_string(seed));
    kv.set("out.dir", out_dir);
    return kv;
}

void RunConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigInvalid(msg);
    };
    require(d_model > 0 && d_h > 0 && d_e > 0 && d_clip > 0, "model dims must be positive");
    require(tau > 0.0, "model.tau must be > 0");
    require(prompt_template < kPromptTemplates.size(),
            "model.prompt_template must be in [0," + std::to_string(kPromptTemplates.size()) + ")");
    require(num_classes >= 2, "data.num_classes must be >= 2");
    require(class_names.size() == num_classes,
            "data.class_names must list data.num_classes names");
    require(scale_channels.size() == 3 && scale_patches.size() == 3,
            "model.scale_channels and model.scale_patches must have 3 entries");
    for (std::size_t p : scale_patches) {
        require(p > 0 && image_size % p == 0,
                "each model.scale_patches entry must divide data.image_size");
    }
    require(image_size % 8 == 0, "data.image_size must be divisible by 8");
    require(d_model % encoder_heads == 0, "encoder heads must divide d_model");
    require(d_model % head_heads == 0, "head heads must divide d_model");
    require(d_h % bgca_heads == 0, "bgca heads must divide d_h");
    require(batch_size > 0, "train.batch_size must be positive");
    require(val_fraction >= 0.0 && val_fraction < 1.0, "train.val_fraction must be in [0,1)");
    require(!ablation.bgca || ablation.landmark_guidance,
            "ablation.bgca=true requires ablation.landmark_guidance=true");
    require(attn_eps > 0.0, "model.attn_eps must be > 0");
}

std::vector<std::size_t> RunConfig::tokens_per_scale() const {
    std::vector<std::size_t> out;
    for (std::size_t p : scale_patches) {
        const std::size_t side = image_size / p;
        out.push_back(side * side);
    }
    return out;
}

RunConfig RunConfig::gradcheck_profile() {
    RunConfig c;
    c.image_size = 8;
    c.scale_patches = {4, 4, 8};   // 4, 4, 1 tokens
    c.scale_channels = {8, 8, 12};
    c.d_model = 16;
    c.d_h = 8;
    c.d_e = 24;
    c.d_clip = 8;
    c.encoder_depth = 1;
    c.encoder_heads = 2;
    c.head_depth = 1;
    c.head_heads = 2;
    c.batch_size = 2;
    return c;
}

RunConfig RunConfig::paper_profile() {
    RunConfig c;
    c.image_size = 224;
    c.scale_patches = {16, 28, 56};
    c.scale_channels = {64, 128, 256};
    c.d_clip = 512;
    c.lr = 4e-6;
    c.weight_decay = 1e-4;
    c.batch_size = 24;
    c.epochs = 200;
    return c;
}

}  // namespace lacovl
