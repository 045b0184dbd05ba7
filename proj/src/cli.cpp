#include "lacovl/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lacovl/checkpoint.hpp"
#include "lacovl/log.hpp"

namespace lacovl::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

RunConfig resolve_config(const CommonOpts& opts, const RunConfig& base) {
    KvConfig kv = base.to_kv();
    if (!opts.config_path.empty()) {
        KvConfig file = KvConfig::parse_file(opts.config_path);
        for (const auto& [k, v] : file.entries()) kv.set(k, v);
    }
    for (const std::string& ov : opts.overrides) kv.apply_override(ov);
    if (opts.seed) kv.set("train.seed", std::to_string(*opts.seed));
    if (opts.out_dir) kv.set("out.dir", *opts.out_dir);
    return RunConfig::from_kv(kv);
}

void write_matrix_csv(const std::string& path, const Tensor& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    const std::size_t rows = m.rank() == 2 ? m.dim(0) : m.size();
    const std::size_t cols = m.rank() == 2 ? m.dim(1) : 1;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (j) out << ",";
            out << fmt17(m.values()[i * cols + j]);
        }
        out << "\n";
    }
    if (!out) throw IoError("short write on " + path);
}

ModelGradCheck gradcheck_model(const RunConfig& cfg, double tol, double h) {
    const auto start = std::chrono::steady_clock::now();
    RunConfig rc = cfg;
    rc.validate();
    Model model(rc);

    Dataset ds = synth_dataset(2, rc.image_size, rc.seed + 1);
    Rng rng = Rng(rc.seed).split("gradcheck");
    PairBatch batch = sample_pairs(ds, 2, rng);

    // one backward pass gives the analytic gradients for every group
    model.registry().zero_grad();
    {
        Model::TrainOutputs out = model.forward_train(batch, ForwardCtx::train_pure());
        auto [loss, bd] = total_loss(out, batch.labels, rc.lambda, model.has_semantic_branch());
        loss.backward();
    }

    auto eval = [&]() {
        NoGradGuard ng;
        Model::TrainOutputs out = model.forward_train(batch, ForwardCtx::train_pure());
        auto [loss, bd] = total_loss(out, batch.labels, rc.lambda, model.has_semantic_branch());
        return loss.value();
    };

    ModelGradCheck result;
    GradCheckOptions opts;
    opts.tol = tol;
    opts.h = h;
    for (auto& [name, param] : model.registry().params()) {
        if (param.frozen) continue;
        std::vector<double> analytic = param.tensor.has_grad()
                                           ? param.tensor.grad()
                                           : std::vector<double>(param.tensor.size(), 0.0);
        GradCheckReport report = check_against_fd(param.tensor.values(), analytic, eval, opts);
        result.pass = result.pass && report.pass;
        result.max_rel_err = std::max(result.max_rel_err, report.max_rel_err);
        result.groups.push_back({name, std::move(report)});
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

int cmd_synth_data(const std::string& out_dir, std::size_t n_per_class, std::size_t image_size,
                   std::uint64_t seed) {
    if (out_dir.empty()) {
        log_error("synth-data: --out is required");
        return 2;
    }
    Dataset ds = synth_dataset(n_per_class, image_size, seed);
    save_dataset(out_dir, ds);
    log_info("wrote " + std::to_string(ds.size()) + " samples to " + out_dir);
    return 0;
}

int cmd_train(const CommonOpts& opts) {
    RunConfig cfg = resolve_config(opts);
    if (cfg.data_path.empty()) throw ConfigInvalid("data.path is required for train");
    if (cfg.out_dir.empty()) throw ConfigInvalid("out.dir is required for train");
    cfg.validate();
    Dataset ds = load_dataset(cfg.data_path, cfg.image_size, cfg.num_classes);
    Model model(cfg);
    log_info("model has " + std::to_string(model.registry().trainable_count()) +
             " trainable values");
    TrainResult result = train(cfg, ds, model);
    log_info("checkpoints: " + result.final_checkpoint + ", " + result.best_checkpoint);
    return 0;
}

Model load_model(const std::string& checkpoint_path) {
    CheckpointInfo info = read_checkpoint_info(checkpoint_path);
    Model model(RunConfig::from_kv(info.config));
    load_checkpoint(checkpoint_path, model.registry(), nullptr);
    return model;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::optional<std::string>& out_dir) {
    Model model = load_model(checkpoint);
    const RunConfig& cfg = model.config();
    Dataset ds = load_dataset(data_dir, cfg.image_size, cfg.num_classes);
    EvalReport report = evaluate(model, ds);

    std::printf("overall_accuracy %s\n", fmt17(report.accuracy).c_str());
    for (std::size_t c = 0; c < cfg.num_classes; ++c)
        std::printf("class %zu %s %s\n", c, cfg.class_names[c].c_str(),
                    fmt17(report.per_class[c]).c_str());

    if (out_dir) {
        fs::create_directories(*out_dir);
        std::ofstream rep(fs::path(*out_dir) / "report.csv");
        if (!rep) throw IoError("cannot write report.csv in " + *out_dir);
        rep << "metric,value\n";
        rep << "overall_accuracy," << fmt17(report.accuracy) << "\n";
        for (std::size_t c = 0; c < cfg.num_classes; ++c)
            rep << "acc_" << cfg.class_names[c] << "," << fmt17(report.per_class[c]) << "\n";
        std::ofstream conf(fs::path(*out_dir) / "confusion.csv");
        if (!conf) throw IoError("cannot write confusion.csv in " + *out_dir);
        for (std::size_t r = 0; r < cfg.num_classes; ++r) {
            for (std::size_t c = 0; c < cfg.num_classes; ++c) {
                if (c) conf << ",";
                conf << report.confusion[r][c];
            }
            conf << "\n";
        }
    }
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts, double tol) {
    RunConfig cfg = resolve_config(opts, RunConfig::gradcheck_profile());
    ModelGradCheck result = gradcheck_model(cfg, tol);
    for (const auto& group : result.groups) {
        std::printf("%-32s %s max_rel_err=%.3e checked=%zu skipped=%zu\n", group.name.c_str(),
                    group.report.pass ? "ok" : "FAIL", group.report.max_rel_err,
                    group.report.checked, group.report.skipped_kinks.size());
        for (const auto& f : group.report.failures)
            std::printf("  elem %zu analytic=%.6e numeric=%.6e rel_err=%.3e\n", f.index,
                        f.analytic, f.numeric, f.rel_err);
    }
    std::printf("gradcheck %s: %zu groups, max_rel_err=%.3e, %.1fs\n",
                result.pass ? "PASS" : "FAIL", result.groups.size(), result.max_rel_err,
                result.seconds);
    return result.pass ? 0 : 1;
}

int cmd_dump_attn(const std::string& checkpoint, const std::string& image_path,
                  const std::string& out_dir) {
    Model model = load_model(checkpoint);
    if (!model.config().ablation.landmark_guidance)
        throw ConfigInvalid("dump-attn needs a model trained with ablation.landmark_guidance=true");
    ImageSample img = read_ppm(image_path, model.config().image_size);
    fs::create_directories(out_dir);

    std::vector<BgcaAttentionState> lgae_state;
    std::vector<CslPairState> csl_state;
    model.dump_attention(img, lgae_state, csl_state);

    for (std::size_t i = 0; i < lgae_state.size(); ++i) {
        const BgcaAttentionState& st = lgae_state[i];
        const std::string base = (fs::path(out_dir) / ("s" + std::to_string(i + 1))).string();
        for (std::size_t h = 0; h < st.a_dense.size(); ++h) {
            const std::string suffix = h == 0 ? "" : "_h" + std::to_string(h + 1);
            write_matrix_csv(base + "_dense" + suffix + ".csv", st.a_dense[h]);
            if (h < st.a_sparse.size())
                write_matrix_csv(base + "_sparse" + suffix + ".csv", st.a_sparse[h]);
            write_matrix_csv(base + "_mixed" + suffix + ".csv", st.a_mixed[h]);
        }
        if (st.g.defined()) write_matrix_csv(base + "_gate.csv", st.g);
    }
    for (std::size_t i = 0; i < csl_state.size(); ++i) {
        const CslPairState& st = csl_state[i];
        const std::string base = (fs::path(out_dir) / ("csl_s" + std::to_string(i + 1))).string();
        write_matrix_csv(base + "_dmat.csv", st.d_mat);
        write_matrix_csv(base + "_alpha1.csv", st.alpha1);
        write_matrix_csv(base + "_alpha2.csv", st.alpha2);
    }
    log_info("attention maps written to " + out_dir);
    return 0;
}

int cmd_export_embeddings(const std::string& checkpoint, const std::string& data_dir,
                          const std::string& out_path) {
    Model model = load_model(checkpoint);
    const RunConfig& cfg = model.config();
    if (!cfg.ablation.vles)
        throw ConfigInvalid("export-embeddings needs a model trained with ablation.vles=true");
    Dataset ds = load_dataset(data_dir, cfg.image_size, cfg.num_classes);

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    out << "id,label";
    for (std::size_t i = 0; i < cfg.d_clip; ++i) out << ",v" << i;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) out << ",s" << c;
    out << "\n";
    for (const ImageSample& img : ds.samples) {
        auto [v_m, sem] = model.embedding(img);
        out << img.id << "," << img.label;
        for (double v : v_m.values()) out << "," << fmt17(v);
        for (double s : sem.values()) out << "," << fmt17(s);
        out << "\n";
    }
    log_info("embeddings written to " + out_path);
    return 0;
}

}  // namespace lacovl::cli
