#pragma once

#include <string>
#include <vector>

#include "lacovl/adam.hpp"
#include "lacovl/checkpoint.hpp"
#include "lacovl/dataset.hpp"
#include "lacovl/model.hpp"

namespace lacovl {

struct LossBreakdown {
    double total = 0.0;
    double ce_sem_a = 0.0;
    double ce_sem_p = 0.0;
    double ce_vis_a = 0.0;
    double ce_vis_p = 0.0;
    double lambda = 1.0;
};

// Uniform anchors; positive drawn from the same class, excluding the anchor
// whenever the class has another sample.
PairBatch sample_pairs(const Dataset& ds, std::size_t batch_size, Rng& rng);

// Joint objective: mean of the four cross-entropy terms with the visual
// terms weighted by lambda; without the semantic branch only the two visual
// terms are averaged. Returns the differentiable total plus the breakdown.
std::pair<Tensor, LossBreakdown> total_loss(const Model::TrainOutputs& logits,
                                            const std::vector<std::size_t>& labels, double lambda,
                                            bool has_semantic);

struct EvalReport {
    double accuracy = 0.0;
    std::vector<double> per_class;            // accuracy per class (0 for empty classes)
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::size_t total = 0;
};

EvalReport evaluate(const Model& model, const Dataset& ds);

struct TrainResult {
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::string log_path;
    double final_train_acc = 0.0;  // eval-mode accuracy on the train split
    double best_val_acc = 0.0;
    std::size_t epochs_run = 0;
};

// Full loop: stratified validation split, per-epoch pair sampling, Adam
// updates, tab-separated epoch log, best/final checkpoints. Deterministic
// under the config seed.
TrainResult train(const RunConfig& cfg, const Dataset& ds, Model& model);

// Deterministic 15%-style stratified split; returns (train, val) index sets.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const Dataset& ds, double val_fraction, Rng& rng);

}  // namespace lacovl
