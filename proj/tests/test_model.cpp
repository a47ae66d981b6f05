#include <doctest.h>

#include <cmath>

#include "equivae/objectives.hpp"
#include "support/gradcheck.hpp"
#include "support/toy.hpp"

using namespace equivae;
using testsupport::check_gradients;
using testsupport::random_tensor;
using testsupport::toy_config;
using testsupport::zero_params_with_prefix;

TEST_SUITE_BEGIN("model");

TEST_CASE("encode_invariant: m=1 path equals the single-image inference path bit-exactly") {
    Rng rng(21);
    EquiVae model(toy_config(3), rng);
    Tensor x = random_tensor({3, 1, 4, 4}, rng, 0, 1, false);
    Tensor via_segments = model.encode_invariant(x, {1, 1, 1});
    Tensor via_inference = model.invariant_embedding(x);
    CHECK(via_segments.values() == via_inference.values());
}

TEST_CASE("encode_invariant is permutation-invariant over the complementary set") {
    Rng rng(22);
    EquiVae model(toy_config(2), rng);
    Tensor abc = random_tensor({3, 1, 4, 4}, rng, 0, 1, false);
    const auto& v = abc.values();
    // same three images, order reversed
    std::vector<double> reversed;
    for (int i = 2; i >= 0; --i) {
        reversed.insert(reversed.end(), v.begin() + i * 16, v.begin() + (i + 1) * 16);
    }
    Tensor cba = Tensor::from_values({3, 1, 4, 4}, std::move(reversed));

    Tensor r1 = model.encode_invariant(abc, {3});
    Tensor r2 = model.encode_invariant(cba, {3});
    for (int64_t d = 0; d < r1.size(); ++d) {
        CHECK(std::abs(r1.values()[static_cast<size_t>(d)] -
                       r2.values()[static_cast<size_t>(d)]) <= 1e-9);
    }
    CHECK_THROWS_AS(model.encode_invariant(abc, {}), ContractError);
}

TEST_CASE("encode_invariant pools by the arithmetic mean of per-image embeddings") {
    Rng rng(23);
    ModelConfig config = toy_config(2);
    EquiVae model(config, rng);
    const ParameterStore& store = model.params();
    Tensor pair = random_tensor({2, 1, 4, 4}, rng, 0, 1, false);

    // Manual composition through the primitive ops.
    auto embed_one = [&](int64_t i) {
        std::vector<double> px(pair.values().begin() + i * 16,
                               pair.values().begin() + (i + 1) * 16);
        Tensor x = Tensor::from_values({1, 16}, std::move(px));
        Tensor h = relu(add(matmul(x, store.get("inv/bb/l0/W")), store.get("inv/bb/l0/b")));
        return relu(add(matmul(h, store.get("inv/embed/W")), store.get("inv/embed/b")));
    };
    Tensor e1 = embed_one(0);
    Tensor e2 = embed_one(1);
    Tensor pooled = mul(add(e1, e2), Tensor::scalar(0.5));
    Tensor head = relu(add(matmul(pooled, store.get("inv/head/W")), store.get("inv/head/b")));
    Tensor manual = add(matmul(head, store.get("inv/out/W")), store.get("inv/out/b"));

    Tensor r = model.encode_invariant(pair, {2});
    for (int64_t d = 0; d < r.size(); ++d) {
        CHECK(r.values()[static_cast<size_t>(d)] ==
              doctest::Approx(manual.values()[static_cast<size_t>(d)]).epsilon(1e-12));
    }
}

TEST_CASE("encode_equivariant: zeroed sigma head gives sigma = 1, and it is pure") {
    Rng rng(24);
    EquiVae model(toy_config(2), rng);
    zero_params_with_prefix(model.params(), "cov/sigma");
    Tensor x = random_tensor({2, 1, 4, 4}, rng, 0, 1, false);
    Tensor r = random_tensor({2, 2}, rng, -1, 1, false);
    GaussianPosterior post = model.encode_equivariant(r, x);
    for (double s : post.sigma.values()) {
        CHECK(s == 1.0);  // exp(0)
    }
    GaussianPosterior again = model.encode_equivariant(r, x);
    CHECK(post.mu.values() == again.mu.values());
    CHECK(post.sigma.values() == again.sigma.values());

    CHECK_THROWS_AS(model.encode_equivariant(random_tensor({3, 2}, rng), x), ShapeError);
}

TEST_CASE("d(mu)/d(r) matches finite differences") {
    Rng rng(25);
    EquiVae model(toy_config(2), rng);
    Tensor x = random_tensor({2, 1, 4, 4}, rng, 0, 1, false);
    Tensor r = random_tensor({2, 2}, rng, -1, 1, true);
    const double err = check_gradients(
        {r}, [&] { return sum_all(square(model.encode_equivariant(r, x).mu)); });
    CHECK(err < 1e-4);
}

TEST_CASE("reparameterize: identity cases and Monte-Carlo mean") {
    GaussianPosterior post{Tensor::from_values({1, 2}, {0.3, -0.7}),
                           Tensor::from_values({1, 2}, {0.5, 1.5})};
    CHECK(EquiVae::reparameterize(post, Tensor::zeros({1, 2})).values() ==
          post.mu.values());

    GaussianPosterior degenerate{Tensor::from_values({1, 2}, {0.3, -0.7}),
                                 Tensor::zeros({1, 2})};
    Rng rng(26);
    Tensor eps = random_tensor({1, 2}, rng, -3, 3, false);
    CHECK(EquiVae::reparameterize(degenerate, eps).values() == degenerate.mu.values());

    const int n = 100000;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        Tensor e = Tensor::from_values({1, 1}, {rng.normal()});
        GaussianPosterior p{Tensor::from_values({1, 1}, {0.3}),
                            Tensor::from_values({1, 1}, {0.5})};
        total += EquiVae::reparameterize(p, e).values()[0];
    }
    CHECK(std::abs(total / n - 0.3) < 3.0 * 0.5 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("reparameterized draws have the posterior's diagonal covariance") {
    Rng rng(27);
    const double sigma0 = 0.8;
    const double sigma1 = 1.7;
    const int n = 1000000;
    double s00 = 0, s11 = 0, s01 = 0, m0 = 0, m1 = 0;
    for (int i = 0; i < n; ++i) {
        const double v0 = 0.2 + sigma0 * rng.normal();
        const double v1 = -0.4 + sigma1 * rng.normal();
        m0 += v0;
        m1 += v1;
        s00 += v0 * v0;
        s11 += v1 * v1;
        s01 += v0 * v1;
    }
    m0 /= n;
    m1 /= n;
    const double var0 = s00 / n - m0 * m0;
    const double var1 = s11 / n - m1 * m1;
    const double cov = s01 / n - m0 * m1;
    CHECK(std::abs(var0 / (sigma0 * sigma0) - 1.0) < 0.01);
    CHECK(std::abs(var1 / (sigma1 * sigma1) - 1.0) < 0.01);
    CHECK(std::abs(cov) < 0.01 * sigma0 * sigma1);
}

TEST_CASE("decode: zeroed decoder gives 0.5 Bernoulli means, output matches image shape") {
    Rng rng(28);
    EquiVae model(toy_config(2), rng);
    zero_params_with_prefix(model.params(), "dec/");
    Tensor r = random_tensor({2, 2}, rng, -1, 1, false);
    Tensor v = random_tensor({2, 2}, rng, -1, 1, false);
    Tensor out = model.decode(r, v);
    CHECK(out.shape() == Shape{2, 1, 4, 4});
    for (double p : out.values()) {
        CHECK(p == 0.5);  // sigmoid(0)
    }
}

TEST_CASE("conv decoder mirrors the encoder geometry") {
    ModelConfig config = toy_config(2);
    config.backbone = BackboneKind::Conv;
    config.height = 28;
    config.width = 28;
    Rng rng(29);
    EquiVae model(config, rng);
    Tensor r = random_tensor({1, 2}, rng, -1, 1, false);
    Tensor v = random_tensor({1, 2}, rng, -1, 1, false);
    CHECK(model.decode(r, v).shape() == Shape{1, 1, 28, 28});

    // odd spatial sizes must mirror exactly as well
    ModelConfig odd = toy_config(2);
    odd.backbone = BackboneKind::Conv;
    odd.height = 14;
    odd.width = 14;
    Rng rng2(30);
    EquiVae model2(odd, rng2);
    CHECK(model2.decode(r, v).shape() == Shape{1, 1, 14, 14});
}

TEST_CASE("decoder gradients pass finite differences through the reconstruction loss") {
    Rng rng(31);
    EquiVae model(toy_config(2), rng);
    Tensor r = random_tensor({2, 2}, rng, -1, 1, false);
    Tensor v = random_tensor({2, 2}, rng, -1, 1, false);
    Tensor target = random_tensor({2, 1, 4, 4}, rng, 0.1, 0.9, false);
    auto params = testsupport::params_of(model.params(),
                                         model.parameter_names({"dec"}));
    const double err = check_gradients(params, [&] {
        return reduce_sum(bernoulli_loglik(model.decode(r, v), target), {0});
    });
    CHECK(err < 1e-3);
}

TEST_CASE("label posterior: uniform at zero weights, rows sum to one") {
    Rng rng(32);
    EquiVae model(toy_config(4), rng);
    Tensor x = random_tensor({3, 1, 4, 4}, rng, 0, 1, false);

    zero_params_with_prefix(model.params(), "ypost/out");
    Tensor q = model.label_posterior(x, false, nullptr);
    for (double p : q.values()) {
        CHECK(p == 0.25);  // softmax of zeros
    }

    Rng rng2(33);
    EquiVae model2(toy_config(4), rng2);
    Tensor q2 = model2.label_posterior(x, false, nullptr);
    for (int64_t r = 0; r < 3; ++r) {
        double total = 0;
        for (int64_t j = 0; j < 4; ++j) {
            total += q2.values()[static_cast<size_t>(r * 4 + j)];
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("stop-gradient contract: label-posterior losses never touch the invariant encoder") {
    Rng rng(34);
    EquiVae model(toy_config(3), rng);
    Tensor x = random_tensor({4, 1, 4, 4}, rng, 0, 1, false);
    Tensor q = model.label_posterior(x, false, nullptr);
    backward(negate(reduce_sum(log_guarded(gather_cols(q, {0, 1, 2, 0})), {0})));

    for (const auto& name : model.parameter_names({"inv"})) {
        const Tensor& p = model.params().get(name);
        if (p.has_grad()) {
            for (double g : p.grad()) {
                CHECK(g == 0.0);
            }
        }
    }
    // and the head itself does learn
    bool ypost_has_grad = false;
    for (const auto& name : model.parameter_names({"ypost"})) {
        if (model.params().get(name).has_grad()) {
            ypost_has_grad = true;
        }
    }
    CHECK(ypost_has_grad);
    for (const auto& name : model.params().names()) {
        model.params().get(name).clear_grad();
    }
}

TEST_CASE("checkpoint rebind reproduces the exact forward pass") {
    Rng rng(35);
    ModelConfig config = toy_config(3);
    EquiVae model(config, rng);
    Tensor x = random_tensor({2, 1, 4, 4}, rng, 0, 1, false);
    Tensor before = model.invariant_embedding(x);

    EquiVae rebound(config, model.params());
    CHECK(rebound.invariant_embedding(x).values() == before.values());
}

TEST_SUITE_END();
