#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lacovl/training.hpp"

using namespace lacovl;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_cfg() {
    RunConfig cfg;
    cfg.image_size = 8;
    cfg.scale_patches = {2, 4, 8};  // 16, 4, 1 tokens
    cfg.scale_channels = {8, 8, 8};
    cfg.d_model = 16;
    cfg.d_h = 8;
    cfg.d_e = 24;
    cfg.d_clip = 8;
    cfg.encoder_depth = 1;
    cfg.encoder_heads = 2;
    cfg.head_depth = 1;
    cfg.head_heads = 2;
    cfg.batch_size = 2;
    cfg.epochs = 2;
    cfg.val_fraction = 0.0;
    return cfg;
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("lacovl_train_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pair sampler: degenerate class, determinism, uniformity") {
    Dataset single;
    single.num_classes = 7;
    single.samples.push_back({std::vector<double>(3 * 64, 0.5), 8, 3, "only"});
    Rng rng(1);
    PairBatch b = sample_pairs(single, 4, rng);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(b.anchors[i].id == "only");
        CHECK(b.positives[i].id == "only");  // the only legal pair
        CHECK(b.labels[i] == 3);
    }

    Dataset ds = synth_dataset(4, 8, 11);
    Rng r1(7), r2(7);
    PairBatch p1 = sample_pairs(ds, 6, r1);
    PairBatch p2 = sample_pairs(ds, 6, r2);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(p1.anchors[i].id == p2.anchors[i].id);
        CHECK(p1.positives[i].id == p2.positives[i].id);
        CHECK(p1.labels[i] == p1.anchors[i].label);
        CHECK(p1.anchors[i].label == p1.positives[i].label);
        // classes have 4 samples, so the positive never equals the anchor
        CHECK(p1.anchors[i].id != p1.positives[i].id);
    }

    // chi-square style uniformity of anchor classes over 10k draws
    Dataset balanced = synth_dataset(10, 8, 13);
    Rng r3(23);
    std::vector<std::size_t> counts(7, 0);
    const std::size_t draws = 10000;
    for (std::size_t i = 0; i < draws / 10; ++i) {
        PairBatch batch = sample_pairs(balanced, 10, r3);
        for (std::size_t lab : batch.labels) counts[lab]++;
    }
    const double expect = static_cast<double>(draws) / 7.0;
    const double sigma = std::sqrt(draws * (1.0 / 7.0) * (6.0 / 7.0));
    for (std::size_t c = 0; c < 7; ++c)
        CHECK(std::fabs(static_cast<double>(counts[c]) - expect) < 3.0 * sigma);

    Dataset empty;
    empty.num_classes = 7;
    Rng r4(1);
    CHECK_THROWS_AS(sample_pairs(empty, 2, r4), EmptyDataset);
}

TEST_CASE("loss identity: equal terms, lambda scaling, uniform logits") {
    Model::TrainOutputs out;
    out.y_vis_a = Tensor::zeros({3, 7});
    out.y_vis_p = Tensor::zeros({3, 7});
    out.y_sem_a = Tensor::zeros({3, 7});
    out.y_sem_p = Tensor::zeros({3, 7});
    const std::vector<std::size_t> labels = {0, 2, 5};

    auto [loss, bd] = total_loss(out, labels, 1.0, true);
    const double ln7 = std::log(7.0);
    CHECK(bd.ce_sem_a == doctest::Approx(ln7).epsilon(1e-12));
    CHECK(bd.total == doctest::Approx(ln7).epsilon(1e-12));  // four equal terms average to one
    CHECK(bd.total ==
          doctest::Approx((bd.ce_sem_a + bd.lambda * bd.ce_vis_a + bd.ce_sem_p +
                           bd.lambda * bd.ce_vis_p) /
                          4.0)
              .epsilon(1e-12));

    auto [loss0, bd0] = total_loss(out, labels, 0.0, true);
    CHECK(bd0.total == doctest::Approx((bd0.ce_sem_a + bd0.ce_sem_p) / 4.0).epsilon(1e-12));

    auto [loss_v, bd_v] = total_loss(out, labels, 1.0, false);
    CHECK(bd_v.total == doctest::Approx((bd_v.ce_vis_a + bd_v.ce_vis_p) / 2.0).epsilon(1e-12));
    CHECK(bd_v.ce_sem_a == 0.0);
}

TEST_CASE("forward_train shapes and the a<->p swap symmetry") {
    RunConfig cfg = tiny_cfg();
    Model model(cfg);
    Dataset ds = synth_dataset(3, 8, 17);
    Rng rng(5);
    PairBatch batch = sample_pairs(ds, 2, rng);

    auto out = model.forward_train(batch, ForwardCtx::train_pure());
    CHECK(out.y_vis_a.shape() == Shape{2, 7});
    CHECK(out.y_vis_p.shape() == Shape{2, 7});
    CHECK(out.y_sem_a.shape() == Shape{2, 7});
    CHECK(out.y_sem_p.shape() == Shape{2, 7});

    PairBatch swapped;
    swapped.anchors = batch.positives;
    swapped.positives = batch.anchors;
    swapped.labels = batch.labels;
    auto out2 = model.forward_train(swapped, ForwardCtx::train_pure());
    for (std::size_t i = 0; i < out.y_vis_a.size(); ++i) {
        CHECK(out2.y_vis_a.values()[i] == doctest::Approx(out.y_vis_p.values()[i]).epsilon(1e-9));
        CHECK(out2.y_vis_p.values()[i] == doctest::Approx(out.y_vis_a.values()[i]).epsilon(1e-9));
        CHECK(out2.y_sem_a.values()[i] == doctest::Approx(out.y_sem_p.values()[i]).epsilon(1e-9));
        CHECK(out2.y_sem_p.values()[i] == doctest::Approx(out.y_sem_a.values()[i]).epsilon(1e-9));
    }
}

TEST_CASE("semantic-off model emits only visual logits and fewer parameters") {
    RunConfig full_cfg = tiny_cfg();
    Model full(full_cfg);

    RunConfig no_vles = tiny_cfg();
    no_vles.ablation.vles = false;
    Model visual_only(no_vles);

    CHECK(visual_only.registry().trainable_count() < full.registry().trainable_count());

    Dataset ds = synth_dataset(2, 8, 19);
    Rng rng(7);
    PairBatch batch = sample_pairs(ds, 2, rng);
    auto out = visual_only.forward_train(batch, ForwardCtx::train_pure());
    CHECK(out.y_vis_a.defined());
    CHECK_FALSE(out.y_sem_a.defined());
}

TEST_CASE("ablation ladder adds parameters at every rung") {
    auto count = [](bool lm, bool bgca, bool vles) {
        RunConfig cfg = tiny_cfg();
        cfg.ablation = {lm, bgca, vles};
        return Model(cfg).registry().trainable_count();
    };
    const auto baseline = count(false, false, false);
    const auto landmark = count(true, false, false);
    const auto landmark_bgca = count(true, true, false);
    const auto full = count(true, true, true);
    CHECK(baseline < landmark);
    CHECK(landmark < landmark_bgca);
    CHECK(landmark_bgca < full);
}

TEST_CASE("gradient flow boundary after one backward") {
    RunConfig cfg = tiny_cfg();
    Model model(cfg);
    Dataset ds = synth_dataset(2, 8, 23);
    Rng rng(9);
    PairBatch batch = sample_pairs(ds, 2, rng);
    model.registry().zero_grad();
    auto out = model.forward_train(batch, ForwardCtx::train_pure());
    auto [loss, bd] = total_loss(out, batch.labels, 1.0, true);
    loss.backward();
    for (const auto& [name, p] : model.registry().params()) {
        INFO(name);
        if (p.frozen) {
            CHECK_FALSE(p.tensor.has_grad());
        } else {
            REQUIRE(p.tensor.has_grad());
            bool any = false;
            for (double g : p.tensor.grad()) any = any || g != 0.0;
            CHECK(any);
        }
    }
}

TEST_CASE("one training epoch finishes with finite loss and valid log") {
    RunConfig cfg = tiny_cfg();
    cfg.epochs = 1;
    cfg.out_dir = temp_dir("smoke").string();
    Dataset ds = synth_dataset(2, 8, 29);
    Model model(cfg);
    TrainResult result = train(cfg, ds, model);
    CHECK(fs::exists(result.final_checkpoint));
    CHECK(fs::exists(result.best_checkpoint));
    std::ifstream log(result.log_path);
    std::string line;
    REQUIRE(std::getline(log, line));
    double epoch, total;
    CHECK(std::sscanf(line.c_str(), "%lf\t%lf", &epoch, &total) == 2);
    CHECK(std::isfinite(total));
}

TEST_CASE("two seeded runs produce byte-identical checkpoints") {
    auto run = [](const std::string& tag) {
        RunConfig cfg = tiny_cfg();
        cfg.epochs = 2;
        cfg.out_dir = temp_dir(tag).string();
        Dataset ds = synth_dataset(2, 8, 31);
        Model model(cfg);
        TrainResult r = train(cfg, ds, model);
        return file_bytes(r.final_checkpoint);
    };
    CHECK(run("det_a") == run("det_b"));
}

TEST_CASE("checkpoint roundtrip restores forward and optimizer state") {
    RunConfig cfg = tiny_cfg();
    Model model(cfg);
    Dataset ds = synth_dataset(2, 8, 37);
    Rng rng(11);
    PairBatch batch = sample_pairs(ds, 2, rng);
    Adam adam(AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
    for (int step = 0; step < 3; ++step) {
        model.registry().zero_grad();
        auto out = model.forward_train(batch, ForwardCtx::train());
        auto [loss, bd] = total_loss(out, batch.labels, 1.0, true);
        loss.backward();
        adam.step(model.registry());
    }
    fs::path dir = temp_dir("ckpt");
    const std::string path = (dir / "model.ckpt").string();
    KvConfig kv = cfg.to_kv();
    save_checkpoint(path, model.registry(), &adam, cfg.seed, &kv);

    Tensor before = model.scores(ds.samples[0]);

    Model fresh(cfg);
    Adam fresh_adam(adam.config());
    const std::uint64_t seed = load_checkpoint(path, fresh.registry(), &fresh_adam);
    CHECK(seed == cfg.seed);
    Tensor after = fresh.scores(ds.samples[0]);
    CHECK(before.values() == after.values());
    CHECK(fresh_adam.slots().size() == adam.slots().size());
    for (const auto& [name, slot] : adam.slots()) {
        CHECK(fresh_adam.slots().at(name).m == slot.m);
        CHECK(fresh_adam.slots().at(name).v == slot.v);
        CHECK(fresh_adam.slots().at(name).step == slot.step);
    }

    // a structurally different model rejects the file
    RunConfig other = tiny_cfg();
    other.d_model = 8;
    other.encoder_heads = 2;
    Model wrong(other);
    CHECK_THROWS_AS(load_checkpoint(path, wrong.registry(), nullptr), CheckpointMismatch);
}

TEST_CASE("predict: range, tie-break, and batch independence") {
    RunConfig cfg = tiny_cfg();
    Model model(cfg);
    Dataset ds = synth_dataset(2, 8, 41);
    for (const auto& img : ds.samples) {
        const std::size_t pred = model.predict(img);
        CHECK(pred < 7);
    }
    // the scores vector is identical no matter what was evaluated before
    Tensor alone = model.scores(ds.samples[3]);
    model.predict(ds.samples[9]);
    model.predict(ds.samples[0]);
    Tensor after_others = model.scores(ds.samples[3]);
    CHECK(alone.values() == after_others.values());

    // documented tie rule: lowest class index wins
    CHECK(argmax_lowest(Tensor::from_data({4}, {1.0, 7.0, 7.0, 2.0})) == 1);
}

TEST_CASE("stratified split is deterministic and respects the fraction") {
    Dataset ds = synth_dataset(10, 8, 43);
    Rng r1(3), r2(3);
    auto [t1, v1] = stratified_split(ds, 0.15, r1);
    auto [t2, v2] = stratified_split(ds, 0.15, r2);
    CHECK(t1 == t2);
    CHECK(v1 == v2);
    CHECK(t1.size() + v1.size() == 70);
    CHECK(v1.size() == 14);  // round(10*0.15)=2 held out per class
    // no overlap
    for (std::size_t v : v1)
        for (std::size_t t : t1) CHECK(v != t);
}

TEST_CASE("eval report: confusion rows sum to class support") {
    RunConfig cfg = tiny_cfg();
    Model model(cfg);
    Dataset ds = synth_dataset(3, 8, 47);
    EvalReport report = evaluate(model, ds);
    CHECK(report.total == 21);
    for (std::size_t c = 0; c < 7; ++c) {
        std::size_t row_sum = 0;
        for (std::size_t j = 0; j < 7; ++j) row_sum += report.confusion[c][j];
        CHECK(row_sum == 3);
    }
    std::size_t trace = 0;
    for (std::size_t c = 0; c < 7; ++c) trace += report.confusion[c][c];
    CHECK(report.accuracy == doctest::Approx(static_cast<double>(trace) / 21.0));
}
