#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lacovl/common.hpp"

namespace lacovl {

// Flat `section.key = value` text config. Unknown keys are rejected when
// materializing a RunConfig so typos in --override fail loudly.
class KvConfig {
public:
    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_text(const std::string& text);

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    // "k=v" form used by --override
    void apply_override(const std::string& assignment);

    std::string serialize() const;  // sorted keys, canonical spacing

    const std::map<std::string, std::string>& entries() const { return kv_; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

private:
    std::map<std::string, std::string> kv_;
};

// Prompt templates selectable by id; "[class]" is replaced by the class name.
extern const std::vector<std::string> kPromptTemplates;

struct AblationFlags {
    bool landmark_guidance = true;
    bool bgca = true;
    bool vles = true;
};

enum class GateMode { Fused, Separate };
enum class GateGranularity { PerQuery, PerHead, PerElement };
enum class AlphaReading { Spec, Swapped };

struct RunConfig {
    // data
    std::string data_path;
    std::size_t image_size = 32;
    std::size_t num_classes = 7;
    std::vector<std::string> class_names = {"surprise", "fear",  "disgust", "happiness",
                                            "sadness",  "anger", "neutral"};

    // model dims
    std::size_t d_model = 64;
    std::size_t d_h = 16;
    std::size_t d_e = 96;
    std::size_t d_clip = 32;
    std::vector<std::size_t> scale_channels = {16, 32, 64};
    std::vector<std::size_t> scale_patches = {4, 8, 16};
    std::size_t encoder_depth = 2;
    std::size_t encoder_heads = 4;
    std::size_t head_depth = 1;
    std::size_t head_heads = 4;
    std::size_t bgca_heads = 1;
    GateMode gate_mode = GateMode::Fused;
    GateGranularity gate_granularity = GateGranularity::PerQuery;
    AlphaReading alpha_reading = AlphaReading::Spec;
    double attn_eps = 1e-6;
    bool teacher_residual = true;

    // semantic branch
    double tau = 0.07;
    double alpha_scale = 0.1;
    bool ecp = true;
    std::size_t prompt_template = 0;

    AblationFlags ablation;

    // optimizer / loop
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 8;
    std::size_t epochs = 300;
    double lambda = 1.0;
    double val_fraction = 0.15;
    // Stop once eval-mode train accuracy reaches this (0 disables).
    double early_stop_acc = 0.0;

    std::uint64_t seed = 42;
    std::string out_dir;

    static RunConfig from_kv(const KvConfig& kv);
    KvConfig to_kv() const;
    void validate() const;

    // Token count per scale: (image_size / patch)^2.
    std::vector<std::size_t> tokens_per_scale() const;

    // Small-dimension profile used by the gradient-check command.
    static RunConfig gradcheck_profile();

    // Hyperparameters matching the original full-scale training recipe.
    static RunConfig paper_profile();
};

std::vector<std::string> split_csv_list(const std::string& s);

}  // namespace lacovl
