#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lacovl/config.hpp"
#include "lacovl/gradcheck.hpp"
#include "lacovl/model.hpp"
#include "lacovl/training.hpp"

namespace lacovl::cli {

// Shared command-line options resolved by main().
struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

RunConfig resolve_config(const CommonOpts& opts, const RunConfig& base = RunConfig());

// Finite-difference verification of every trainable parameter group against
// the full training loss on a sampled 2-pair batch.
struct ModelGradCheck {
    struct Group {
        std::string name;
        GradCheckReport report;
    };
    std::vector<Group> groups;
    bool pass = true;
    double max_rel_err = 0.0;
    double seconds = 0.0;
};
ModelGradCheck gradcheck_model(const RunConfig& cfg, double tol = 1e-3, double h = 1e-5);

int cmd_synth_data(const std::string& out_dir, std::size_t n_per_class, std::size_t image_size,
                   std::uint64_t seed);
int cmd_train(const CommonOpts& opts);
int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::optional<std::string>& out_dir);
int cmd_gradcheck(const CommonOpts& opts, double tol);
int cmd_dump_attn(const std::string& checkpoint, const std::string& image_path,
                  const std::string& out_dir);
int cmd_export_embeddings(const std::string& checkpoint, const std::string& data_dir,
                          const std::string& out_path);

// Rebuild a model from the config embedded in a checkpoint and load weights.
Model load_model(const std::string& checkpoint_path);

void write_matrix_csv(const std::string& path, const Tensor& m);

}  // namespace lacovl::cli
