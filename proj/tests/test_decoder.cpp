#include "testing.hpp"

#include <torch/torch.h>

#include "segadapt/decoder.hpp"
#include "segadapt/prompts.hpp"
#include "support.hpp"

using namespace segadapt;

namespace {

BBox box_of(double x0, double y0, double x1, double y1) {
    BBox b;
    b.x0 = x0;
    b.y0 = y0;
    b.x1 = x1;
    b.y1 = y1;
    return b;
}

}  // namespace

TEST_CASE("the same box always encodes to the same tokens") {
    torch::manual_seed(400);
    BoxPromptEncoder enc(96, 64);
    const auto box = box_of(10.0, 20.0, 50.0, 60.0);
    CHECK(torch::equal(enc->forward(box), enc->forward(box)));

    // two encoders share the positional basis (fixed-seed buffer), so only
    // the learned corner vectors can differ
    torch::manual_seed(401);
    BoxPromptEncoder other(96, 64);
    const auto a = enc->forward(box);
    const auto b = other->forward(box);
    CHECK(a.sizes() == torch::IntArrayRef({1, 2, 96}));
    CHECK_FALSE(torch::equal(a, b));
}

TEST_CASE("different coarse rates encode to different tokens") {
    torch::manual_seed(402);
    BoxPromptEncoder enc(96, 64);
    const auto t1 = enc->forward(coarse_bbox(64, 64, 0.9));
    const auto t2 = enc->forward(coarse_bbox(64, 64, 0.8));
    CHECK((t1 - t2).abs().max().item<double>() > 0.0);
}

TEST_CASE("corner identity comes from learned type vectors") {
    torch::manual_seed(403);
    BoxPromptEncoder enc(96, 64);
    // a point box: both corners share the positional part, so any difference
    // between the two tokens is exactly the pair of type vectors
    const auto tokens = enc->forward(box_of(32.0, 32.0, 32.0, 32.0));
    CHECK((tokens.index({0, 0}) - tokens.index({0, 1})).abs().max().item<double>() > 0.0);

    // swapping the corner order is therefore visible
    const auto fwd = enc->forward(box_of(10.0, 20.0, 30.0, 40.0));
    const auto swapped = enc->forward(box_of(30.0, 40.0, 10.0, 20.0));
    CHECK((fwd - swapped).abs().max().item<double>() > 0.0);
}

TEST_CASE("coordinates outside the frame are rejected") {
    torch::manual_seed(404);
    BoxPromptEncoder enc(96, 64);
    CHECK_THROWS_AS(enc->forward(box_of(-1.0, 0.0, 32.0, 32.0)), OutOfFrame);
    CHECK_THROWS_AS(enc->forward(box_of(0.0, 0.0, 64.5, 32.0)), OutOfFrame);
    CHECK_NOTHROW(enc->forward(box_of(0.0, 0.0, 64.0, 64.0)));
}

TEST_CASE("the dense positional map matches the token encoder") {
    torch::manual_seed(405);
    PositionalEncoding pe(96);
    const auto dense = pe->dense(8);
    CHECK(dense.sizes() == torch::IntArrayRef({1, 96, 8, 8}));
    // cell (r, c) of the dense map encodes the cell-center coordinate
    const auto coords = torch::tensor({{(2 + 0.5) / 8.0, (5 + 0.5) / 8.0}});
    const auto direct = pe->encode(coords).squeeze(0);
    const auto from_map = dense.index({0, torch::indexing::Slice(), 5, 2});
    CHECK((direct - from_map).abs().max().item<double>() < 1e-6);
}

TEST_CASE("the decoder emits one logit map at the input resolution") {
    torch::manual_seed(406);
    const int64_t dim = 96, size = 64, grid = 8;
    MaskDecoder dec(dim, 3, size);
    BoxPromptEncoder prompt(dim, size);
    PositionalEncoding pe(dim);
    const auto features = torch::randn({1, dim, grid, grid});
    const auto tokens = prompt->forward(box_of(16.0, 16.0, 48.0, 48.0));
    const auto logits = dec->forward(features, tokens, pe->dense(grid));
    CHECK(logits.sizes() == torch::IntArrayRef({1, 1, size, size}));
    CHECK(torch::isfinite(logits).all().item<bool>());
}

TEST_CASE("the logit map responds to the prompt") {
    torch::manual_seed(407);
    MaskDecoder dec(96, 3, 64);
    BoxPromptEncoder prompt(96, 64);
    PositionalEncoding pe(96);
    const auto features = torch::randn({1, 96, 8, 8});
    const auto wide = dec->forward(features, prompt->forward(box_of(4, 4, 60, 60)), pe->dense(8));
    const auto tight = dec->forward(features, prompt->forward(box_of(24, 24, 40, 40)), pe->dense(8));
    CHECK((wide - tight).abs().max().item<double>() > 0.0);
}

TEST_CASE("decoder input validation") {
    torch::manual_seed(408);
    MaskDecoder dec(96, 3, 64);
    BoxPromptEncoder prompt(96, 64);
    PositionalEncoding pe(96);
    const auto tokens = prompt->forward(box_of(8, 8, 32, 32));
    CHECK_THROWS_AS(dec->forward(torch::randn({96, 8, 8}), tokens, pe->dense(8)), ShapeMismatch);
    CHECK_THROWS_AS(dec->forward(torch::randn({1, 96, 8, 8}), tokens, pe->dense(4)),
                    ShapeMismatch);
    CHECK_THROWS_AS(MaskDecoder(90, 3, 64), InvalidConfig);       // dim % 8 != 0
    CHECK_THROWS_AS(PositionalEncoding(95), InvalidConfig);      // odd dim
}

TEST_CASE("binarize thresholds logits monotonically") {
    const auto low = torch::full({1, 1, 4, 4}, -1.0);
    CHECK(binarize(low).sum().item<double>() == 0.0);
    CHECK(binarize(low, -std::numeric_limits<double>::infinity()).sum().item<double>() == 16.0);

    torch::manual_seed(409);
    const auto logits = torch::randn({1, 1, 16, 16});
    const auto loose = binarize(logits, -0.5);
    const auto mid = binarize(logits, 0.0);
    const auto tight = binarize(logits, 0.5);
    // raising the threshold can only remove pixels
    CHECK(((mid - tight) >= 0).all().item<bool>());
    CHECK(((loose - mid) >= 0).all().item<bool>());
    CHECK(loose.sum().item<double>() >= mid.sum().item<double>());
}

TEST_CASE("analytic decoder gradients match difference quotients") {
    torch::manual_seed(410);
    const int64_t dim = 32, size = 32, grid = 4;
    MaskDecoder dec(dim, 2, size);
    BoxPromptEncoder prompt(dim, size);
    PositionalEncoding pe(dim);
    dec->to(torch::kFloat64);
    prompt->to(torch::kFloat64);
    pe->to(torch::kFloat64);

    const auto features = torch::randn({1, dim, grid, grid}, torch::kFloat64);
    const auto box = box_of(8.0, 8.0, 24.0, 24.0);
    const auto image_pe = pe->dense(grid);

    const auto eval = [&]() {
        return dec->forward(features, prompt->forward(box), image_pe).mean().item<double>();
    };
    auto params = dec->named_parameters();
    for (const auto& name :
         {"mask_token", "head_fc1.weight", "up1.weight", "block2.cross_t2i.q_proj.weight"}) {
        auto p = params[name];
        dec->zero_grad();
        prompt->zero_grad();
        dec->forward(features, prompt->forward(box), image_pe).mean().backward();
        const int64_t idx = p.numel() / 2;
        const double analytic = p.grad().view(-1)[idx].item<double>();
        const double numeric = testutil::numeric_grad(eval, p, idx, 1e-5);
        CAPTURE(name);
        CHECK(testutil::rel_err(analytic, numeric) < 1e-4);
    }
    // the prompt side trains too: the corner vectors feed the same loss
    auto corner = prompt->named_parameters()["corner_type"];
    dec->zero_grad();
    prompt->zero_grad();
    dec->forward(features, prompt->forward(box), image_pe).mean().backward();
    const double analytic = corner.grad().view(-1)[3].item<double>();
    const double numeric = testutil::numeric_grad(eval, corner, 3, 1e-5);
    CHECK(testutil::rel_err(analytic, numeric) < 1e-4);
}
