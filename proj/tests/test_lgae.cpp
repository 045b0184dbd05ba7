#include <doctest.h>

#include <cmath>

#include "lacovl/gradcheck.hpp"
#include "lacovl/lgae.hpp"

using namespace lacovl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(numel(shape));
    for (double& v : data) v = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(data));
}

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
    return cfg;
}

}  // namespace

TEST_CASE("dense attention pinned rows") {
    Tensor a = dense_attention(Tensor::zeros({2, 2}));
    for (double v : a.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

    Tensor s = Tensor::from_data({1, 2}, {std::log(1.0), std::log(3.0)});
    Tensor d = dense_attention(s);
    CHECK(d.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(d.values()[1] == doctest::Approx(0.75).epsilon(1e-12));

    // shift invariance per row
    Rng rng(3);
    Tensor base = random_tensor({3, 4}, rng);
    Tensor shifted = base.detach();
    for (std::size_t j = 0; j < 4; ++j) shifted.values()[1 * 4 + j] += 11.5;
    Tensor da = dense_attention(base), db = dense_attention(shifted);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(da.values()[4 + j] == doctest::Approx(db.values()[4 + j]).epsilon(1e-12));
}

TEST_CASE("sparse attention pinned rows") {
    Tensor s = Tensor::from_data({1, 2}, {2, 1});
    Tensor a = sparse_attention(s, 1e-12);
    CHECK(a.values()[0] == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(a.values()[1] == doctest::Approx(0.2).epsilon(1e-9));

    Tensor neg = sparse_attention(Tensor::from_data({1, 3}, {-1, -2, -0.5}), 1e-6);
    for (double v : neg.values()) CHECK(v == 0.0);

    Tensor mixed = sparse_attention(Tensor::from_data({1, 2}, {1, -1}), 1e-6);
    CHECK(mixed.values()[0] == doctest::Approx(1.0 / (1.0 + 1e-6)).epsilon(1e-12));
    CHECK(mixed.values()[1] == 0.0);
}

TEST_CASE("gate saturation and midpoint") {
    Tensor a_dense = Tensor::from_data({1, 2}, {1, 0});
    Tensor a_sparse = Tensor::from_data({1, 2}, {0, 1});

    auto [g_hi, hi] = gated_fusion(a_dense, a_sparse, Tensor::from_data({1, 1}, {50.0}));
    CHECK(hi.values()[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(hi.values()[1] == doctest::Approx(0.0).epsilon(1e-9));

    auto [g_lo, lo] = gated_fusion(a_dense, a_sparse, Tensor::from_data({1, 1}, {-50.0}));
    CHECK(lo.values()[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(lo.values()[1] == doctest::Approx(1.0).epsilon(1e-9));

    auto [g_mid, mid] = gated_fusion(a_dense, a_sparse, Tensor::from_data({1, 1}, {0.0}));
    CHECK(g_mid.values()[0] == 0.5);
    CHECK(mid.values()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mid.values()[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("attention invariants over random inputs") {
    Rng rng(17);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t n = 1 + rng.uniform_int(6);
        Tensor s = random_tensor({n, n}, rng, -4.0, 4.0);
        Tensor logits = random_tensor({n, 1}, rng, -6.0, 6.0);
        Tensor dense = dense_attention(s);
        Tensor sparse = sparse_attention(s, 1e-6);
        auto [g, mixed] = gated_fusion(dense, sparse, logits);
        for (std::size_t i = 0; i < n; ++i) {
            double dsum = 0.0, ssum = 0.0, msum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dsum += dense.values()[i * n + j];
                const double sv = sparse.values()[i * n + j];
                CHECK(sv >= 0.0);
                ssum += sv;
                msum += mixed.values()[i * n + j];
            }
            const double gi = g.values()[i];
            CHECK(gi > 0.0);
            CHECK(gi < 1.0);
            CHECK(dsum == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(ssum <= 1.0);
            CHECK(msum == doctest::Approx(gi + (1.0 - gi) * ssum).epsilon(1e-9));
        }
    }
}

TEST_CASE("squaring sharpens contrast beyond linear relu normalization") {
    Rng rng(19);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + rng.uniform_int(5);
        std::vector<double> row(n);
        for (double& v : row) v = rng.uniform(0.1, 3.0);
        Tensor s = Tensor::from_data({1, n}, row);
        Tensor sq = sparse_attention(s, 1e-12);
        double mx = 0.0, mn = 1e300, lmx = 0.0, lmn = 1e300, lsum = 0.0;
        for (double v : row) lsum += v;
        for (std::size_t j = 0; j < n; ++j) {
            mx = std::max(mx, sq.values()[j]);
            mn = std::min(mn, sq.values()[j]);
            lmx = std::max(lmx, row[j] / lsum);
            lmn = std::min(lmn, row[j] / lsum);
        }
        CHECK(mx / mn >= lmx / lmn - 1e-9);
    }
}

TEST_CASE("bgca projection shapes and origin gate") {
    RunConfig cfg = tiny_cfg();
    cfg.d_h = 8;
    ParamRegistry reg;
    reg.set_seed(21);
    BgcaScale scale(reg, "b", 8, 4, cfg, /*gated=*/true);
    Rng rng(5);
    Tensor f_ir = random_tensor({4, 8}, rng);
    Tensor f_face = random_tensor({4, 8}, rng);
    BgcaProjections p = scale.project(f_ir, f_face);
    CHECK(p.q.shape() == Shape{4, 8});
    CHECK(p.gate_logits.shape() == Shape{4, 1});
    CHECK(p.k.shape() == Shape{4, 8});
    CHECK(p.v.shape() == Shape{4, 8});

    // zero appearance input with zero bias: gate logit 0 => g = 0.5
    BgcaProjections pz = scale.project(Tensor::zeros({4, 8}), f_face);
    for (double v : pz.gate_logits.values()) CHECK(v == 0.0);
    CHECK(sigmoid(pz.gate_logits).values()[0] == 0.5);

    CHECK_THROWS_AS(scale.project(Tensor::zeros({3, 8}), f_face), ShapeMismatch);
}

TEST_CASE("zero projection weights reduce bgca to the residual") {
    RunConfig cfg = tiny_cfg();
    ParamRegistry reg;
    reg.set_seed(22);
    BgcaScale scale(reg, "b", 8, 4, cfg, true);
    std::fill(scale.wproj.w.values().begin(), scale.wproj.w.values().end(), 0.0);
    Rng rng(6);
    Tensor f_ir = random_tensor({4, 8}, rng);
    Tensor f_face = random_tensor({4, 8}, rng);
    Tensor pre = scale.forward_pre_bn(f_ir, f_face);
    CHECK(pre.values() == f_ir.values());
}

TEST_CASE("bgca output invariant under geometry token permutation") {
    RunConfig cfg = tiny_cfg();
    ParamRegistry reg;
    reg.set_seed(23);
    BgcaScale scale(reg, "b", 8, 6, cfg, true);
    Rng rng(7);
    Tensor f_ir = random_tensor({6, 8}, rng);
    Tensor f_face = random_tensor({6, 8}, rng);
    Tensor out = scale.forward_pre_bn(f_ir, f_face);

    const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    std::vector<double> permuted(6 * 8);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 8; ++j) permuted[i * 8 + j] = f_face.values()[perm[i] * 8 + j];
    Tensor out_p = scale.forward_pre_bn(f_ir, Tensor::from_data({6, 8}, permuted));
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.values()[i] == doctest::Approx(out_p.values()[i]).epsilon(1e-12));
}

TEST_CASE("bgca parameters pass the finite-difference check") {
    RunConfig cfg = tiny_cfg();
    ParamRegistry reg;
    reg.set_seed(24);
    BgcaScale scale(reg, "b", 8, 4, cfg, true);
    Rng rng(8);
    const Tensor f_ir = random_tensor({4, 8}, rng);
    const Tensor f_face = random_tensor({4, 8}, rng);

    auto loss_value = [&]() {
        NoGradGuard ng;
        Tensor out = scale.forward_pre_bn(f_ir, f_face);
        return sum_all(mul(out, out)).value();
    };
    for (auto& [name, param] : reg.params()) {
        if (param.frozen || name.find(".bn.") != std::string::npos) continue;
        reg.zero_grad();
        Tensor out = scale.forward_pre_bn(f_ir, f_face);
        sum_all(mul(out, out)).backward();
        std::vector<double> analytic = param.tensor.has_grad()
                                           ? param.tensor.grad()
                                           : std::vector<double>(param.tensor.size(), 0.0);
        auto report = check_against_fd(param.tensor.values(), analytic, loss_value);
        INFO(name);
        CHECK(report.pass);
    }
}

TEST_CASE("lgae bundle shapes, determinism, and cls-token gradient") {
    RunConfig cfg;  // toy defaults: 32x32, 64+16+4 tokens, d_model 64
    ParamRegistry reg;
    reg.set_seed(cfg.seed);
    Lgae lgae(reg, "lgae", cfg);
    AppearanceEncoder app(reg, "app", cfg, false);
    AppearanceEncoder geo(reg, "geo", cfg, true);
    Dataset ds = synth_dataset(1, 32, 9);
    MultiScaleFeatureSet ms;
    ms.appearance = app.forward(ds.samples[0]);
    ms.geometry = geo.forward(ds.samples[0]);

    TokenBundle bundle = lgae.encode(ms, ForwardCtx::eval());
    CHECK(bundle.x.shape() == Shape{84, 64});
    CHECK(bundle.z_cls.shape() == Shape{64});

    TokenBundle again = lgae.encode(ms, ForwardCtx::eval());
    CHECK(bundle.x.values() == again.x.values());
    CHECK(bundle.z_cls.values() == again.z_cls.values());

    // gradient through the class token parameter
    Tensor cls = reg.at("lgae.cls").tensor;
    reg.zero_grad();
    TokenBundle b = lgae.encode(ms, ForwardCtx::train_pure());
    sum_all(b.z_cls).backward();
    std::vector<double> analytic = cls.grad();
    auto eval = [&]() {
        NoGradGuard ng;
        return sum_all(lgae.encode(ms, ForwardCtx::train_pure()).z_cls).value();
    };
    GradCheckOptions deep;
    deep.tol = 1e-3;
    auto report = check_against_fd(cls.values(), analytic, eval, deep);
    CHECK(report.pass);
}

TEST_CASE("per-head and per-element gating keep the mixing convex") {
    RunConfig cfg = tiny_cfg();
    cfg.bgca_heads = 2;
    cfg.gate_granularity = GateGranularity::PerHead;
    ParamRegistry reg;
    reg.set_seed(25);
    BgcaScale per_head(reg, "ph", 8, 4, cfg, true);
    Rng rng(10);
    Tensor f_ir = random_tensor({4, 8}, rng);
    Tensor f_face = random_tensor({4, 8}, rng);
    BgcaAttentionState st;
    per_head.forward_pre_bn(f_ir, f_face, &st);
    CHECK(st.g.shape() == Shape{4, 2});
    CHECK(st.a_mixed.size() == 2);

    cfg.bgca_heads = 1;
    cfg.gate_granularity = GateGranularity::PerElement;
    ParamRegistry reg2;
    reg2.set_seed(26);
    BgcaScale per_elem(reg2, "pe", 8, 4, cfg, true);
    BgcaAttentionState st2;
    per_elem.forward_pre_bn(f_ir, f_face, &st2);
    CHECK(st2.g.shape() == Shape{4, 4});
    for (std::size_t i = 0; i < 16; ++i) {
        const double m = st2.a_mixed[0].values()[i];
        const double lo = std::min(st2.a_dense[0].values()[i], st2.a_sparse[0].values()[i]);
        const double hi = std::max(st2.a_dense[0].values()[i], st2.a_sparse[0].values()[i]);
        CHECK(m >= lo - 1e-12);
        CHECK(m <= hi + 1e-12);
    }
}

TEST_CASE("separate gate head is selectable") {
    RunConfig cfg = tiny_cfg();
    cfg.gate_mode = GateMode::Separate;
    ParamRegistry reg;
    reg.set_seed(27);
    BgcaScale scale(reg, "sep", 8, 4, cfg, true);
    CHECK(reg.params().count("sep.wg.w") == 1);
    CHECK(scale.wq.w.shape() == Shape{8, 8});  // no fused gate column
    Rng rng(11);
    BgcaProjections p = scale.project(random_tensor({4, 8}, rng), random_tensor({4, 8}, rng));
    CHECK(p.gate_logits.shape() == Shape{4, 1});
}
