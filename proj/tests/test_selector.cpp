#include "testing.hpp"

#include <cmath>
#include <torch/torch.h>

#include "segadapt/selector.hpp"
#include "support.hpp"

using namespace segadapt;

namespace {

void set_decision(FeatureSelector& sel, double logit1, double logit2) {
    torch::NoGradGuard guard;
    auto params = sel->named_parameters();
    params["decision.weight"].zero_();
    params["decision.bias"].copy_(torch::tensor({logit1, logit2}));
}

}  // namespace

TEST_CASE("a fresh selector weighs both streams equally") {
    torch::manual_seed(300);
    FeatureSelector sel(32);
    const auto [w1, w2] = sel->select_weights(torch::randn({1, 32, 8, 8}));
    CHECK(w1.item<double>() == 0.5);  // softmax of two zero logits
    CHECK(w2.item<double>() == 0.5);
}

TEST_CASE("logit gap (ln 3, 0) produces weights (0.75, 0.25)") {
    FeatureSelector sel(16);
    set_decision(sel, std::log(3.0), 0.0);
    const auto [w1, w2] = sel->select_weights(torch::randn({1, 16, 8, 8}));
    CHECK(std::abs(w1.item<double>() - 0.75) < 1e-6);
    CHECK(std::abs(w2.item<double>() - 0.25) < 1e-6);
}

TEST_CASE("weights always sum to one") {
    torch::manual_seed(301);
    FeatureSelector sel(24);
    {
        torch::NoGradGuard guard;
        for (auto& p : sel->named_parameters()) {
            if (p.key().rfind("decision", 0) == 0) p.value().normal_(0.0, 2.0);
        }
    }
    for (int i = 0; i < 1000; ++i) {
        const auto [w1, w2] = sel->select_weights(torch::randn({1, 24, 8, 8}) * 3.0);
        CHECK(std::abs(w1.item<double>() + w2.item<double>() - 1.0) < 1e-6);
    }
}

TEST_CASE("the scalar fusion example evaluates to four") {
    FeatureSelector sel(8);  // init: w = (1/2, 1/2), b = (0, 1)
    const auto hf = torch::full({1, 8, 4, 4}, 2.0);
    const auto ms = torch::full({1, 8, 4, 4}, 4.0);
    const auto weights = std::make_pair(torch::tensor(0.5), torch::tensor(0.5));
    const auto fused = sel->fuse(hf, ms, weights);
    CHECK((fused - 4.0).abs().max().item<double>() == 0.0);
}

TEST_CASE("bias pair initializes to (0, 1) exactly") {
    FeatureSelector sel(8);
    CHECK(sel->bias1().item<double>() == 0.0);
    CHECK(sel->bias2().item<double>() == 1.0);
}

TEST_CASE("unit weight on one stream with zero bias reproduces it exactly") {
    torch::manual_seed(302);
    FeatureSelector sel(8);
    sel->freeze_bias_at_zero();
    const auto hf = torch::randn({1, 8, 4, 4});
    const auto ms = torch::randn({1, 8, 4, 4});
    const auto weights = std::make_pair(torch::tensor(1.0), torch::tensor(0.0));
    CHECK(torch::equal(sel->fuse(hf, ms, weights), hf));
}

TEST_CASE("identical streams with zero bias pass through unchanged") {
    torch::manual_seed(303);
    FeatureSelector sel(8);
    sel->freeze_bias_at_zero();
    const auto x = torch::randn({1, 8, 4, 4});
    const auto fused = sel->forward(torch::randn({1, 8, 4, 4}), x, x);
    CHECK((fused - x).abs().max().item<double>() < 1e-6);
}

TEST_CASE("a fresh selector computes half the sum plus the stream-two bias") {
    torch::manual_seed(304);
    FeatureSelector sel(16);
    const auto tap = torch::randn({1, 16, 8, 8});
    const auto hf = torch::randn({1, 16, 8, 8});
    const auto ms = torch::randn({1, 16, 8, 8});
    const auto fused = sel->forward(tap, hf, ms);
    CHECK((fused - (0.5 * hf + 0.5 * ms + 1.0)).abs().max().item<double>() < 1e-6);
}

TEST_CASE("each bias receives one gradient unit per output element") {
    torch::manual_seed(305);
    FeatureSelector sel(8);
    const auto tap = torch::randn({1, 8, 4, 4});
    const auto hf = torch::randn({1, 8, 4, 4});
    const auto ms = torch::randn({1, 8, 4, 4});
    sel->forward(tap, hf, ms).sum().backward();
    const double numel = 8.0 * 4.0 * 4.0;
    CHECK(sel->bias1().grad().item<double>() == doctest::Approx(numel));
    CHECK(sel->bias2().grad().item<double>() == doctest::Approx(numel));
}

TEST_CASE("shifting both decision logits leaves the weights unchanged") {
    FeatureSelector a(8);
    FeatureSelector b(8);
    set_decision(a, 0.4, -1.1);
    set_decision(b, 0.4 + 7.0, -1.1 + 7.0);
    const auto tap = torch::randn({1, 8, 4, 4});
    const auto [a1, a2] = a->select_weights(tap);
    const auto [b1, b2] = b->select_weights(tap);
    CHECK(std::abs(a1.item<double>() - b1.item<double>()) < 1e-6);
    CHECK(std::abs(a2.item<double>() - b2.item<double>()) < 1e-6);
}

TEST_CASE("bias ablation pins both biases at zero and stops their gradients") {
    torch::manual_seed(306);
    FeatureSelector sel(8);
    sel->freeze_bias_at_zero();
    CHECK(sel->bias1().item<double>() == 0.0);
    CHECK(sel->bias2().item<double>() == 0.0);
    CHECK_FALSE(sel->bias1().requires_grad());
    CHECK_FALSE(sel->bias2().requires_grad());

    const auto tap = torch::randn({1, 8, 4, 4});
    const auto hf = torch::randn({1, 8, 4, 4});
    const auto ms = torch::randn({1, 8, 4, 4});
    const auto [w1, w2] = sel->select_weights(tap);
    const auto expect = w1 * hf + w2 * ms;
    CHECK((sel->forward(tap, hf, ms) - expect).abs().max().item<double>() < 1e-6);
}

TEST_CASE("fusion is affine: scaling commutes once the biases are subtracted") {
    torch::manual_seed(307);
    FeatureSelector sel(8);
    const auto tap = torch::randn({1, 8, 4, 4});
    const auto weights = sel->select_weights(tap);
    const auto a = torch::randn({1, 8, 4, 4});
    const auto b = torch::randn({1, 8, 4, 4});
    const double b_total = sel->bias1().item<double>() + sel->bias2().item<double>();
    const double alpha = 3.0;
    const auto lhs = sel->fuse(alpha * a, alpha * b, weights) - b_total;
    const auto rhs = alpha * (sel->fuse(a, b, weights) - b_total);
    CHECK((lhs - rhs).abs().max().item<double>() < 1e-5);
}

TEST_CASE("non-finite layer features are rejected") {
    FeatureSelector sel(8);
    auto tap = torch::randn({1, 8, 4, 4});
    tap.index_put_({0, 3, 1, 2}, std::numeric_limits<float>::quiet_NaN());
    CHECK_THROWS_AS(sel->select_weights(tap), NonFiniteInput);
    tap.index_put_({0, 3, 1, 2}, std::numeric_limits<float>::infinity());
    CHECK_THROWS_AS(sel->select_weights(tap), NonFiniteInput);
    CHECK_THROWS_AS(sel->select_weights(torch::randn({8, 4, 4})), ShapeMismatch);
    CHECK_THROWS_AS(
        sel->fuse(torch::zeros({1, 8, 4, 4}), torch::zeros({1, 8, 2, 2}),
                  std::make_pair(torch::tensor(0.5), torch::tensor(0.5))),
        ShapeMismatch);
}

TEST_CASE("analytic selector gradients match difference quotients") {
    torch::manual_seed(308);
    FeatureSelector sel(8);
    {
        torch::NoGradGuard guard;
        sel->named_parameters()["decision.weight"].normal_(0.0, 0.5);
        sel->named_parameters()["decision.bias"].normal_(0.0, 0.5);
    }
    sel->to(torch::kFloat64);
    const auto tap = torch::randn({1, 8, 4, 4}, torch::kFloat64);
    const auto hf = torch::randn({1, 8, 4, 4}, torch::kFloat64);
    const auto ms = torch::randn({1, 8, 4, 4}, torch::kFloat64);
    const auto eval = [&]() {
        // a curved functional so the decision gradient is informative
        return sel->forward(tap, hf, ms).pow(2).sum().item<double>();
    };
    auto params = sel->named_parameters();
    for (const auto& name : {"decision.weight", "decision.bias", "b1", "b2"}) {
        auto p = params[name];
        sel->zero_grad();
        sel->forward(tap, hf, ms).pow(2).sum().backward();
        const int64_t idx = 0;
        const double analytic = p.grad().view(-1)[idx].item<double>();
        const double numeric = testutil::numeric_grad(eval, p, idx, 1e-6);
        CAPTURE(name);
        CHECK(testutil::rel_err(analytic, numeric) < 1e-4);
    }
}
