#include <CLI11.hpp>

#include "lacovl/cli.hpp"
#include "lacovl/log.hpp"

using namespace lacovl;

int main(int argc, char** argv) {
    CLI::App app{"lacovl: landmark-guided gated cross attention FER with "
                 "vision-language prompting, on an in-repo autodiff core"};
    app.require_subcommand(1);

    cli::CommonOpts opts;
    std::uint64_t seed_flag = 0;
    std::string out_flag;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "config file (key = value lines)");
        cmd->add_option("--override", opts.overrides, "config override key=value (repeatable)");
        cmd->add_option("--seed", seed_flag, "override train.seed")
            ->each([&](const std::string&) { opts.seed = seed_flag; });
        cmd->add_option("--out", out_flag, "override out.dir")
            ->each([&](const std::string&) { opts.out_dir = out_flag; });
    };

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate the synthetic glyph dataset");
    std::string synth_out;
    std::size_t n_per_class = 10, image_size = 32;
    std::uint64_t synth_seed = 42;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n-per-class", n_per_class, "samples per class");
    synth->add_option("--image-size", image_size, "square image size");
    synth->add_option("--seed", synth_seed, "generator seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model from a config");
    add_common(train_cmd);
    bool paper_profile = false;
    train_cmd->add_flag("--paper-profile", paper_profile,
                        "start from the full-scale hyperparameter profile");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data, eval_out;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_out, "directory for report.csv/confusion.csv");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck",
                                        "finite-difference check of every trainable group");
    add_common(grad_cmd);
    double grad_tol = 1e-3;
    grad_cmd->add_option("--tol", grad_tol, "relative-error tolerance");

    // dump-attn
    auto* dump_cmd = app.add_subcommand("dump-attn", "write attention-state CSVs for one image");
    std::string dump_ckpt, dump_image, dump_out;
    dump_cmd->add_option("--checkpoint", dump_ckpt, "checkpoint file")->required();
    dump_cmd->add_option("--image", dump_image, "input PPM image")->required();
    dump_cmd->add_option("--out", dump_out, "output directory")->required();

    // export-embeddings
    auto* emb_cmd = app.add_subcommand("export-embeddings",
                                       "write per-sample visual embeddings and semantic scores");
    std::string emb_ckpt, emb_data, emb_out;
    emb_cmd->add_option("--checkpoint", emb_ckpt, "checkpoint file")->required();
    emb_cmd->add_option("--data", emb_data, "dataset directory")->required();
    emb_cmd->add_option("--out", emb_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cli::cmd_synth_data(synth_out, n_per_class, image_size, synth_seed);
        if (train_cmd->parsed()) {
            if (paper_profile) {
                KvConfig base = RunConfig::paper_profile().to_kv();
                cli::CommonOpts merged = opts;
                merged.overrides.clear();
                for (const auto& [k, v] : base.entries())
                    merged.overrides.push_back(k + "=" + v);
                for (const auto& ov : opts.overrides) merged.overrides.push_back(ov);
                return cli::cmd_train(merged);
            }
            return cli::cmd_train(opts);
        }
        if (eval_cmd->parsed())
            return cli::cmd_eval(eval_ckpt, eval_data,
                                 eval_out.empty() ? std::nullopt
                                                  : std::optional<std::string>(eval_out));
        if (grad_cmd->parsed()) return cli::cmd_gradcheck(opts, grad_tol);
        if (dump_cmd->parsed()) return cli::cmd_dump_attn(dump_ckpt, dump_image, dump_out);
        if (emb_cmd->parsed()) return cli::cmd_export_embeddings(emb_ckpt, emb_data, emb_out);
    } catch (const ConfigInvalid& e) {
        log_error(e.what());
        return 2;
    } catch (const std::exception& e) {
        log_error(e.what());
        return 1;
    }
    return 0;
}
