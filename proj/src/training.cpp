#include "lacovl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lacovl/log.hpp"

namespace lacovl {

namespace fs = std::filesystem;

PairBatch sample_pairs(const Dataset& ds, std::size_t batch_size, Rng& rng) {
    if (ds.samples.empty()) throw EmptyDataset("sample_pairs on empty dataset");
    const auto groups = ds.by_class();
    PairBatch batch;
    for (std::size_t b = 0; b < batch_size; ++b) {
        const std::size_t anchor_idx = rng.uniform_int(ds.samples.size());
        const ImageSample& anchor = ds.samples[anchor_idx];
        const auto& peers = groups[anchor.label];
        std::size_t pos_idx = anchor_idx;
        if (peers.size() > 1) {
            // draw from the class excluding the anchor itself
            std::size_t slot = static_cast<std::size_t>(rng.uniform_int(peers.size() - 1));
            std::size_t anchor_slot = 0;
            while (peers[anchor_slot] != anchor_idx) ++anchor_slot;
            if (slot >= anchor_slot) ++slot;
            pos_idx = peers[slot];
        }
        batch.anchors.push_back(anchor);
        batch.positives.push_back(ds.samples[pos_idx]);
        batch.labels.push_back(anchor.label);
    }
    return batch;
}

std::pair<Tensor, LossBreakdown> total_loss(const Model::TrainOutputs& logits,
                                            const std::vector<std::size_t>& labels, double lambda,
                                            bool has_semantic) {
    LossBreakdown bd;
    bd.lambda = lambda;
    Tensor ce_vis_a = cross_entropy_mean(logits.y_vis_a, labels);
    Tensor ce_vis_p = cross_entropy_mean(logits.y_vis_p, labels);
    bd.ce_vis_a = ce_vis_a.value();
    bd.ce_vis_p = ce_vis_p.value();
    Tensor total;
    if (has_semantic) {
        Tensor ce_sem_a = cross_entropy_mean(logits.y_sem_a, labels);
        Tensor ce_sem_p = cross_entropy_mean(logits.y_sem_p, labels);
        bd.ce_sem_a = ce_sem_a.value();
        bd.ce_sem_p = ce_sem_p.value();
        total = mul_scalar(add(add(ce_sem_a, mul_scalar(ce_vis_a, lambda)),
                               add(ce_sem_p, mul_scalar(ce_vis_p, lambda))),
                           0.25);
    } else {
        total = mul_scalar(add(mul_scalar(ce_vis_a, lambda), mul_scalar(ce_vis_p, lambda)), 0.5);
    }
    bd.total = total.value();
    return {total, bd};
}

EvalReport evaluate(const Model& model, const Dataset& ds) {
    EvalReport report;
    const std::size_t C = ds.num_classes;
    report.confusion.assign(C, std::vector<std::size_t>(C, 0));
    report.per_class.assign(C, 0.0);
    std::vector<std::size_t> support(C, 0);
    std::size_t correct = 0;
    for (const ImageSample& img : ds.samples) {
        const std::size_t pred = model.predict(img);
        report.confusion[img.label][pred] += 1;
        ++support[img.label];
        if (pred == img.label) ++correct;
    }
    report.total = ds.samples.size();
    report.accuracy = report.total ? static_cast<double>(correct) / report.total : 0.0;
    for (std::size_t c = 0; c < C; ++c)
        if (support[c])
            report.per_class[c] = static_cast<double>(report.confusion[c][c]) / support[c];
    return report;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const Dataset& ds, double val_fraction, Rng& rng) {
    std::vector<std::size_t> train_idx, val_idx;
    for (auto& group : ds.by_class()) {
        std::vector<std::size_t> idx = group;
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
        std::size_t n_val = static_cast<std::size_t>(
            std::floor(val_fraction * static_cast<double>(idx.size()) + 0.5));
        if (n_val >= idx.size()) n_val = idx.empty() ? 0 : idx.size() - 1;
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? val_idx : train_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {train_idx, val_idx};
}

namespace {

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.num_classes = ds.num_classes;
    for (std::size_t i : indices) out.samples.push_back(ds.samples[i]);
    return out;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Dataset& ds, Model& model) {
    cfg.validate();
    if (ds.samples.empty()) throw EmptyDataset("train called with empty dataset");
    if (cfg.out_dir.empty()) throw ConfigInvalid("out.dir must be set for training");
    fs::create_directories(cfg.out_dir);

    Rng split_rng = Rng(cfg.seed).split("valsplit");
    auto [train_idx, val_idx] = stratified_split(ds, cfg.val_fraction, split_rng);
    Dataset train_ds = subset(ds, train_idx);
    Dataset val_ds = subset(ds, val_idx);
    log_info("train split: " + std::to_string(train_ds.size()) + " train, " +
             std::to_string(val_ds.size()) + " val");

    Adam adam(AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
    Rng batch_rng = Rng(cfg.seed).split("batches");
    const KvConfig cfg_kv = cfg.to_kv();

    TrainResult result;
    result.final_checkpoint = (fs::path(cfg.out_dir) / "final.ckpt").string();
    result.best_checkpoint = (fs::path(cfg.out_dir) / "best.ckpt").string();
    result.log_path = (fs::path(cfg.out_dir) / "train.log").string();

    std::ofstream log(result.log_path);
    if (!log) throw IoError("cannot write " + result.log_path);

    const std::size_t steps_per_epoch =
        (train_ds.size() + cfg.batch_size - 1) / cfg.batch_size;
    double best_val = -1.0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double sum_total = 0.0, sum_sem_a = 0.0, sum_vis_a = 0.0;
        std::size_t seen = 0, correct = 0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            PairBatch batch = sample_pairs(train_ds, cfg.batch_size, batch_rng);
            model.registry().zero_grad();
            Model::TrainOutputs outputs = model.forward_train(batch, ForwardCtx::train());
            auto [loss, bd] = total_loss(outputs, batch.labels, cfg.lambda,
                                         model.has_semantic_branch());
            loss.backward();
            adam.step(model.registry());

            sum_total += bd.total;
            sum_sem_a += bd.ce_sem_a;
            sum_vis_a += bd.ce_vis_a;
            // train-mode anchor accuracy as a cheap convergence proxy
            const Tensor& score_rows =
                model.has_semantic_branch() ? outputs.y_sem_a : outputs.y_vis_a;
            const std::size_t C = score_rows.dim(1);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                std::size_t best_c = 0;
                for (std::size_t c = 1; c < C; ++c)
                    if (score_rows.values()[b * C + c] > score_rows.values()[b * C + best_c])
                        best_c = c;
                correct += best_c == batch.labels[b];
                ++seen;
            }
        }
        const double train_acc = seen ? static_cast<double>(correct) / seen : 0.0;
        const double val_acc = val_ds.size() ? evaluate(model, val_ds).accuracy : train_acc;

        log << epoch << "\t" << fmt(sum_total / steps_per_epoch) << "\t"
            << fmt(sum_sem_a / steps_per_epoch) << "\t" << fmt(sum_vis_a / steps_per_epoch) << "\t"
            << fmt(train_acc) << "\t" << fmt(val_acc) << "\n";
        log_debug("epoch " + std::to_string(epoch) + " loss " + fmt(sum_total / steps_per_epoch) +
                  " train_acc " + fmt(train_acc) + " val_acc " + fmt(val_acc));

        if (val_acc > best_val) {
            best_val = val_acc;
            save_checkpoint(result.best_checkpoint, model.registry(), &adam, cfg.seed, &cfg_kv);
        }
        result.epochs_run = epoch;

        if (cfg.early_stop_acc > 0.0 && train_acc >= cfg.early_stop_acc) {
            // confirm with an eval-mode pass before stopping
            const double eval_acc = evaluate(model, train_ds).accuracy;
            if (eval_acc >= cfg.early_stop_acc) {
                log_info("early stop at epoch " + std::to_string(epoch) + " (train acc " +
                         fmt(eval_acc) + ")");
                break;
            }
        }
    }

    save_checkpoint(result.final_checkpoint, model.registry(), &adam, cfg.seed, &cfg_kv);
    result.best_val_acc = best_val;
    result.final_train_acc = evaluate(model, train_ds).accuracy;
    log_info("finished " + std::to_string(result.epochs_run) + " epochs, train acc " +
             fmt(result.final_train_acc));
    return result;
}

}  // namespace lacovl
