// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest_torch.hpp"

#include <cmath>

#include "geotune/models/checkpoint.hpp"
#include "geotune/models/factory.hpp"
#include "geotune/random.hpp"
#include "support.hpp"

using namespace geotune;
using namespace geotune::models;
using geotune::testing::TempDir;
using geotune::testing::thrown_code;
using nlohmann::json;

namespace {

const std::vector<std::string> kHls{"B02", "B03", "B04", "B05", "B06", "B07"};
const std::vector<std::string> kS2{"B01", "B02", "B03", "B04", "B05", "B06", "B07",
                                   "B08", "B8A", "B09", "B10", "B11", "B12"};

ToyViTConfig small_vit(int64_t frames = 1, std::vector<std::string> bands = {"r", "g", "b"}) {
    ToyViTConfig c;
    c.img_size = 32;
    c.patch_size = 8;
    c.in_bands = std::move(bands);
    c.num_frames = frames;
    c.embed_dim = 16;
    c.depth = 4;
    c.num_heads = 2;
    c.out_indices = {0, 1, 2, 3};
    c.mlp_ratio = 2.0;
    return c;
}

FeatureMapSet grids(std::vector<std::array<int64_t, 3>> shapes, int64_t batch = 2) {
    FeatureMapSet s;
    for (const auto& [c, h, w] : shapes) {
        s.items.push_back({torch::randn({batch, c, h, w}), FeatureForm::Grid});
    }
    return s;
}

std::vector<FeatureSpec> specs_of(const FeatureMapSet& s) {
    std::vector<FeatureSpec> out;
    for (const auto& i : s.items) {
        out.push_back({FeatureForm::Grid, i.data.size(1), i.data.size(2), i.data.size(3), 1});
    }
    return out;
}

json vit_args(int64_t img = 32) {
    return json{{"img_size", img}, {"patch_size", 8}, {"num_frames", 1}, {"embed_dim", 16},
                {"depth", 4},      {"num_heads", 2},  {"out_indices", {0, 1, 2, 3}}, {"mlp_ratio", 2.0}};
}

ModelBuildSpec vit_pyramid_spec() {
    ModelBuildSpec s;
    s.backbone = {"toyvit", vit_args()};
    s.bands = {"r", "g", "b"};
    s.necks = {{"select_indices", json{{"indices", {0, 1, 2, 3}}}},
               {"reshape_tokens_to_image", json::object()},
               {"interpolate_to_pyramid", json::object()}};
    s.decoder = {"pyramid_fusion", json{{"channels", 16}}};
    s.head = {TaskKind::Segmentation, 2, 0.0};
    return s;
}

ModelBuildSpec conv_spec(TaskKind kind, const std::string& decoder) {
    ModelBuildSpec s;
    s.backbone = {"conv_pyramid", json{{"stage_channels", {8, 8, 16, 16}}, {"img_size", 32}}};
    s.bands = {"r", "g", "b"};
    s.decoder = {decoder, decoder == "identity" ? json::object() : json{{"channels", 16}}};
    if (decoder == "identity") {
        s.necks = {{"select_indices", json{{"indices", {3}}}}};
    }
    s.head = {kind, kind == TaskKind::Regression ? 1 : 3, 0.0};
    return s;
}

std::map<std::string, torch::Tensor> params_of(torch::nn::Module& m) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& p : m.named_parameters()) {
        out[p.key()] = p.value().detach().clone();
    }
    return out;
}

}  // namespace

TEST_SUITE("models") {
    TEST_CASE("toyvit token count law") {
        ToyViTConfig c;
        c.in_bands = kHls;
        torch::manual_seed(0);
        ToyViT vit(c);
        vit.eval();
        torch::NoGradGuard guard;
        auto out = vit.forward(torch::randn({2, 1, 6, 224, 224}));
        REQUIRE(out.size() == 4);
        for (const auto& item : out.items) {
            CHECK(item.form == FeatureForm::Token);
            CHECK(item.data.sizes() == torch::IntArrayRef({2, 196, 64}));
        }
        c.num_frames = 2;
        ToyViT vit2(c);
        auto out2 = vit2.forward(torch::randn({2, 2, 6, 224, 224}));
        CHECK(out2[0].data.sizes() == torch::IntArrayRef({2, 392, 64}));
        CHECK(vit2.output_specs().front() == FeatureSpec{FeatureForm::Token, 64, 14, 14, 2});
        CHECK(thrown_code([&] { vit2.forward(torch::randn({2, 1, 6, 224, 224})); }) == ErrorCode::ShapeMismatch);
        CHECK(thrown_code([&] { vit.forward(torch::randn({1, 1, 5, 224, 224})); }) == ErrorCode::ShapeMismatch);
    }

    TEST_CASE("toyvit gradients match finite differences") {
        torch::manual_seed(1);
        ToyViT vit(small_vit());
        vit.to(torch::kDouble);
        auto x = torch::randn({1, 1, 3, 32, 32}, torch::kDouble);
        std::vector<torch::Tensor> probes;
        {
            auto out = vit.forward(x);
            for (const auto& item : out.items) {
                probes.push_back(torch::randn_like(item.data));
            }
        }
        auto loss_of = [&] {
            auto out = vit.forward(x);
            auto loss = torch::zeros({}, torch::kDouble);
            for (std::size_t i = 0; i < out.size(); ++i) {
                loss = loss + (out[i].data * probes[i]).sum();
            }
            return loss;
        };
        vit.zero_grad();
        loss_of().backward();

        // Every block up to the last output index receives gradient.
        for (std::size_t b = 0; b < vit.blocks().size(); ++b) {
            double norm = 0.0;
            for (const auto& p : vit.blocks()[b]->parameters()) {
                norm += p.grad().norm().item<double>();
            }
            CHECK(norm > 0.0);
        }

        auto named = vit.named_parameters();
        Rng rng(5);
        for (const char* name : {"patch_embed.weight", "blocks.1.qkv.weight", "blocks.3.fc1.weight"}) {
            auto param = named[name];
            auto flat = param.view(-1);
            const auto idx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(flat.numel())));
            const double analytic = param.grad().view(-1)[idx].item<double>();
            const double h = 1e-6;
            torch::NoGradGuard guard;
            const double orig = flat[idx].item<double>();
            flat[idx] = orig + h;
            const double up = loss_of().item<double>();
            flat[idx] = orig - h;
            const double down = loss_of().item<double>();
            flat[idx] = orig;
            const double numeric = (up - down) / (2 * h);
            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            INFO(name << " analytic " << analytic << " numeric " << numeric);
            CHECK(rel < 1e-2);
        }
    }

    TEST_CASE("conv pyramid strides") {
        ConvPyramidConfig c;
        c.in_bands = kHls;
        c.stage_channels = {32, 64, 128, 256};
        c.img_size = 64;
        torch::manual_seed(0);
        ConvPyramid net(c);
        net.eval();
        torch::NoGradGuard guard;
        auto x = torch::randn({2, 6, 64, 64});
        auto out = net.forward(x);
        REQUIRE(out.size() == 4);
        const int64_t sizes[] = {16, 8, 4, 2};
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(out[i].data.sizes() == torch::IntArrayRef({2, c.stage_channels[i], sizes[i], sizes[i]}));
        }
        auto again = net.forward(x);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(torch::equal(out[i].data, again[i].data));
        }
        CHECK(thrown_code([&] { net.forward(torch::randn({1, 5, 64, 64})); }) == ErrorCode::ShapeMismatch);
        CHECK(thrown_code([&] { net.forward(torch::randn({1, 6, 48, 48})); }) == ErrorCode::ShapeMismatch);

        ConvPyramidConfig single;
        single.in_bands = {"pan"};
        single.img_size = 32;
        ConvPyramid mono(single);
        CHECK(mono.forward(torch::randn({1, 1, 32, 32})).size() == 4);
    }

    TEST_CASE("remap with identical bands is bitwise identity") {
        auto w = torch::randn({8, 6, 4, 4});
        CHECK(torch::equal(remap_patch_embedding(w, kHls, kHls, 3), w));
    }

    TEST_CASE("remap copies matching slices and draws new ones") {
        auto w = torch::randn({64, 6, 16, 16}) * 0.05;
        auto out = remap_patch_embedding(w, kHls, kS2, 42);
        REQUIRE(out.sizes() == torch::IntArrayRef({64, 13, 16, 16}));
        int copied = 0;
        std::vector<torch::Tensor> fresh;
        for (std::size_t i = 0; i < kS2.size(); ++i) {
            auto it = std::find(kHls.begin(), kHls.end(), kS2[i]);
            auto slice = out.select(1, static_cast<int64_t>(i));
            if (it != kHls.end()) {
                CHECK(torch::equal(slice, w.select(1, it - kHls.begin())));
                ++copied;
            } else {
                fresh.push_back(slice.reshape(-1));
            }
        }
        CHECK(copied == 6);
        CHECK(fresh.size() == 7);
        auto drawn = torch::cat(fresh).to(torch::kDouble);
        const double matched_std = w.to(torch::kDouble).std(false).item<double>();
        const double drawn_std = drawn.std(false).item<double>();
        CHECK(drawn.numel() >= 10000);
        CHECK(std::abs(drawn_std / matched_std - 1.0) < 0.10);
    }

    TEST_CASE("remap with disjoint bands falls back to std 0.02") {
        auto w = torch::randn({64, 3, 16, 16});
        auto out = remap_patch_embedding(w, {"x", "y", "z"}, {"a", "b", "c"}, 9).to(torch::kDouble);
        CHECK(out.numel() >= 10000);
        CHECK(std::abs(out.std(false).item<double>() / 0.02 - 1.0) < 0.10);
    }

    TEST_CASE("remap is idempotent and permutation equivariant") {
        auto w = torch::randn({4, 6, 2, 2});
        auto once = remap_patch_embedding(w, kHls, kS2, 7);
        CHECK(torch::equal(remap_patch_embedding(once, kS2, kS2, 99), once));

        auto permuted = kS2;
        std::reverse(permuted.begin(), permuted.end());
        auto out_p = remap_patch_embedding(w, kHls, permuted, 7);
        for (std::size_t i = 0; i < kS2.size(); ++i) {
            const auto j = static_cast<int64_t>(kS2.size() - 1 - i);
            CHECK(torch::equal(out_p.select(1, j), once.select(1, static_cast<int64_t>(i))));
        }
    }

    TEST_CASE("remap argument errors") {
        auto w = torch::randn({4, 6, 2, 2});
        CHECK(thrown_code([&] { remap_patch_embedding(w, kHls, {}, 1); }) == ErrorCode::EmptyTargetBands);
        CHECK(thrown_code([&] { remap_patch_embedding(w, kHls, {"B02", "B02"}, 1); }) == ErrorCode::DuplicateBand);
        CHECK(thrown_code([&] { remap_patch_embedding(w, {"a", "b"}, kHls, 1); }) == ErrorCode::ShapeMismatch);
    }

    TEST_CASE("select_indices") {
        FeatureMapSet twelve;
        for (int i = 0; i < 12; ++i) {
            twelve.items.push_back({torch::full({1, 2}, i), FeatureForm::Token});
        }
        auto four = select_indices(twelve, {2, 5, 8, 11});
        REQUIRE(four.size() == 4);
        CHECK(four[3].data[0][0].item<int>() == 11);
        auto one = grids({{2, 4, 4}});
        CHECK(torch::equal(select_indices(one, {0})[0].data, one[0].data));
        CHECK(thrown_code([&] { select_indices(twelve, {5, 2}); }) == ErrorCode::IndexOutOfRange);
        CHECK(thrown_code([&] { select_indices(twelve, {12}); }) == ErrorCode::IndexOutOfRange);
    }

    TEST_CASE("reshape tokens to image") {
        FeatureMapSet tokens;
        tokens.items.push_back({torch::randn({2, 196, 64}), FeatureForm::Token});
        auto grid = reshape_tokens_to_image(tokens, 14, 14, 1);
        CHECK(grid[0].form == FeatureForm::Grid);
        CHECK(grid[0].data.sizes() == torch::IntArrayRef({2, 64, 14, 14}));
        CHECK(torch::equal(flatten_grid_to_tokens(grid[0].data), tokens[0].data));
        // Token t of the sequence lands at (t / w, t % w).
        CHECK(torch::equal(grid[0].data.select(2, 3).select(2, 5), tokens[0].data.select(1, 3 * 14 + 5)));

        FeatureMapSet two;
        auto seq = torch::randn({2, 392, 64});
        two.items.push_back({seq, FeatureForm::Token});
        auto mean = reshape_tokens_to_image(two, 14, 14, 2, TemporalReduce::Mean);
        CHECK(mean[0].data.sizes() == torch::IntArrayRef({2, 64, 14, 14}));
        auto expected = (seq.narrow(1, 0, 196) + seq.narrow(1, 196, 196)) / 2;
        CHECK(torch::allclose(flatten_grid_to_tokens(mean[0].data), expected, 1e-6, 1e-6));

        auto concat = reshape_tokens_to_image(two, 14, 14, 2, TemporalReduce::ConcatChannels);
        CHECK(concat[0].data.sizes() == torch::IntArrayRef({2, 128, 14, 14}));
        CHECK(torch::equal(flatten_grid_to_tokens(concat[0].data.narrow(1, 64, 64)), seq.narrow(1, 196, 196)));

        CHECK(thrown_code([&] { reshape_tokens_to_image(tokens, 13, 14, 1); }) == ErrorCode::TokenCountMismatch);
        CHECK(thrown_code([&] { reshape_tokens_to_image(grid, 14, 14, 1); }) == ErrorCode::TokenCountMismatch);
    }

    TEST_CASE("interpolate to pyramid") {
        auto in = grids({{64, 14, 14}, {64, 14, 14}, {64, 14, 14}, {64, 14, 14}});
        InterpolateToPyramid neck(specs_of(in), {4, 2, 1, 0.5});
        auto out = neck.forward(in);
        const int64_t sizes[] = {56, 28, 14, 7};
        auto predicted = neck.output_specs(specs_of(in));
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(out[i].data.size(2) == sizes[i]);
            CHECK(out[i].data.size(3) == sizes[i]);
            CHECK(predicted[i].height == sizes[i]);
        }
        InterpolateToPyramid same(specs_of(in), {1, 1, 1, 1});
        auto unchanged = same.forward(in);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(unchanged[i].data.sizes() == in[i].data.sizes());
        }
        torch::Tensor loss = torch::zeros({});
        for (const auto& item : out.items) {
            loss = loss + item.data.pow(2).mean();
        }
        loss.backward();
        double norm = 0.0;
        for (const auto& p : neck.parameters()) {
            if (p.grad().defined()) {
                norm += p.grad().norm().item<double>();
            }
        }
        CHECK(norm > 0.0);
        CHECK(thrown_code([&] { InterpolateToPyramid(specs_of(in), {3, 1, 1, 1}); }) == ErrorCode::InvalidArgument);
        CHECK(thrown_code([&] { InterpolateToPyramid(specs_of(in), {1, 1, 1}); }) == ErrorCode::LengthMismatch);
    }

    TEST_CASE("neck pipeline equals applying necks one by one") {
        FeatureMapSet tokens;
        for (int i = 0; i < 4; ++i) {
            tokens.items.push_back({torch::randn({1, 16, 8}), FeatureForm::Token});
        }
        auto a = std::make_shared<SelectIndices>(std::vector<int64_t>{1, 3});
        auto b = std::make_shared<ReshapeTokensToImage>(4, 4, 1, TemporalReduce::Mean);
        NeckPipeline pipe;
        pipe.push_back(a);
        pipe.push_back(b);
        auto composed = pipe.forward(tokens);
        auto stepwise = b->forward(a->forward(tokens));
        REQUIRE(composed.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(torch::equal(composed[i].data, stepwise[i].data));
            CHECK(composed[i].data.size(0) == 1);
        }
    }

    TEST_CASE("pyramid fusion decoder") {
        auto in = grids({{64, 56, 56}, {64, 28, 28}, {64, 14, 14}, {64, 7, 7}});
        torch::manual_seed(3);
        PyramidFusionDecoder dec(specs_of(in), 128);
        dec.eval();
        torch::NoGradGuard guard;
        auto out = dec.forward(in);
        CHECK(out.data.sizes() == torch::IntArrayRef({2, 128, 56, 56}));
        CHECK(dec.output_spec() == FeatureSpec{FeatureForm::Grid, 128, 56, 56, 1});

        // Inputs arriving coarse-to-fine give the same result.
        FeatureMapSet reversed;
        for (auto it = in.items.rbegin(); it != in.items.rend(); ++it) {
            reversed.items.push_back(*it);
        }
        CHECK(torch::equal(dec.forward(reversed).data, out.data));

        for (std::size_t i = 0; i < 4; ++i) {
            auto perturbed = in;
            perturbed[i].data = torch::zeros_like(in[i].data);
            CHECK((dec.forward(perturbed).data - out.data).abs().max().item<double>() > 0.0);
        }
        auto three = grids({{64, 56, 56}, {64, 28, 28}, {64, 14, 14}});
        CHECK(thrown_code([&] { PyramidFusionDecoder(specs_of(three), 32); }) == ErrorCode::PyramidShapeError);
        auto uneven = grids({{64, 56, 56}, {64, 28, 28}, {64, 10, 10}, {64, 7, 7}});
        CHECK(thrown_code([&] { PyramidFusionDecoder(specs_of(uneven), 32); }) == ErrorCode::PyramidShapeError);
    }

    TEST_CASE("fcn decoder") {
        auto in = grids({{32, 16, 16}});
        FcnDecoder two(specs_of(in), 64, 2);
        auto out = two.forward(in);
        CHECK(out.data.sizes() == torch::IntArrayRef({2, 64, 16, 16}));
        out.data.pow(2).mean().backward();
        for (const auto& child : two.blocks()->children()) {
            double norm = 0.0;
            for (const auto& p : child->parameters()) {
                norm += p.grad().norm().item<double>();
            }
            if (!child->parameters().empty()) {
                CHECK(norm > 0.0);
            }
        }
        FcnDecoder zero(specs_of(in), 8, 0);
        CHECK(zero.forward(in).data.sizes() == torch::IntArrayRef({2, 8, 16, 16}));
        FeatureMapSet tok;
        tok.items.push_back({torch::randn({2, 16, 8}), FeatureForm::Token});
        std::vector<FeatureSpec> tok_spec{{FeatureForm::Token, 8, 4, 4, 1}};
        CHECK(thrown_code([&] { FcnDecoder(tok_spec, 8, 1); }) == ErrorCode::NoGridInput);
    }

    TEST_CASE("heads") {
        FeatureMap decoded{torch::randn({2, 128, 56, 56}), FeatureForm::Grid};
        FeatureSpec spec{FeatureForm::Grid, 128, 56, 56, 1};
        Head seg({TaskKind::Segmentation, 2, 0.0}, spec);
        auto logits = seg.forward(decoded, {512, 512});
        CHECK(logits.sizes() == torch::IntArrayRef({2, 2, 512, 512}));
        auto sums = torch::softmax(logits, 1).sum(1);
        CHECK((sums - 1.0).abs().max().item<double>() <= 1e-5);

        Head reg({TaskKind::Regression, 7, 0.0}, spec);
        CHECK(reg.forward(decoded, {56, 56}).size(1) == 1);

        FeatureMap tokens{torch::randn({2, 49, 16}), FeatureForm::Token};
        Head cls({TaskKind::Classification, 5, 0.0}, FeatureSpec{FeatureForm::Token, 16, 7, 7, 1});
        CHECK(cls.forward(tokens, {0, 0}).sizes() == torch::IntArrayRef({2, 5}));
        CHECK(thrown_code([&] { Head({TaskKind::Segmentation, 2, 0.0}, FeatureSpec{FeatureForm::Token, 16, 7, 7, 1}); }) ==
              ErrorCode::KindMismatch);
        CHECK(thrown_code([&] { Head({TaskKind::Segmentation, 1, 0.0}, spec); }) == ErrorCode::InvalidArgument);
    }

    TEST_CASE("factory builds the declared compositions") {
        auto vit = build_model(vit_pyramid_spec(), 0);
        vit->eval();
        torch::NoGradGuard guard;
        CHECK(vit->forward(torch::randn({2, 1, 3, 32, 32})).sizes() == torch::IntArrayRef({2, 2, 32, 32}));

        ModelBuildSpec cls;
        cls.backbone = {"toy_toyvit", vit_args()};
        cls.bands = {"r", "g", "b"};
        cls.necks = {{"select_indices", json{{"indices", {3}}}}};
        cls.decoder = {"identity", json::object()};
        cls.head = {TaskKind::Classification, 4, 0.0};
        CHECK(build_model(cls, 0)->forward(torch::randn({2, 1, 3, 32, 32})).sizes() == torch::IntArrayRef({2, 4}));

        auto reg = build_model(conv_spec(TaskKind::Regression, "fcn"), 0);
        CHECK(reg->forward(torch::randn({3, 3, 32, 32})).sizes() == torch::IntArrayRef({3, 1, 32, 32}));
    }

    TEST_CASE("factory errors") {
        auto missing_necks = vit_pyramid_spec();
        missing_necks.necks.clear();
        CHECK(thrown_code([&] { build_model(missing_necks, 0); }) == ErrorCode::ShapeIncompatibility);
        auto unknown = vit_pyramid_spec();
        unknown.decoder.name = "upernet";
        CHECK(thrown_code([&] { build_model(unknown, 0); }) == ErrorCode::ResolveError);
        auto bad_arg = vit_pyramid_spec();
        bad_arg.decoder.args["chanels"] = 3;
        CHECK(thrown_code([&] { build_model(bad_arg, 0); }) == ErrorCode::UnknownKey);
    }

    TEST_CASE("same spec and seed give bitwise-identical parameters") {
        auto a = params_of(*build_model(vit_pyramid_spec(), 5));
        auto b = params_of(*build_model(vit_pyramid_spec(), 5));
        auto c = params_of(*build_model(vit_pyramid_spec(), 6));
        REQUIRE(a.size() == b.size());
        bool any_diff = false;
        for (const auto& [name, t] : a) {
            CHECK(torch::equal(t, b.at(name)));
            any_diff = any_diff || !torch::equal(t, c.at(name));
        }
        CHECK(any_diff);
    }

    TEST_CASE("wrapping a prebuilt backbone matches build_model") {
        const auto spec = conv_spec(TaskKind::Segmentation, "pyramid_fusion");
        auto built = build_model(spec, 11);
        auto wrapped = build_from_components(build_backbone(spec, 11), spec, 11);
        built->eval();
        wrapped->eval();
        torch::NoGradGuard guard;
        auto x = torch::randn({2, 3, 32, 32});
        CHECK(torch::equal(built->forward(x), wrapped->forward(x)));
    }

    TEST_CASE("a token backbone cannot feed the pyramid decoder directly") {
        auto spec = vit_pyramid_spec();
        auto backbone = build_backbone(spec, 0);
        spec.necks.clear();
        CHECK(thrown_code([&] { build_from_components(backbone, spec, 0); }) == ErrorCode::ShapeIncompatibility);
    }

    TEST_CASE("frozen backbone parameters stay bitwise unchanged") {
        auto spec = conv_spec(TaskKind::Segmentation, "fcn");
        spec.freeze_backbone = true;
        auto model = build_model(spec, 2);
        auto before = params_of(*model->backbone());
        auto head_before = params_of(*model->head());
        torch::optim::AdamW opt(model->trainable_parameters(), torch::optim::AdamWOptions(1e-2));
        for (int step = 0; step < 3; ++step) {
            opt.zero_grad();
            model->forward(torch::randn({2, 3, 32, 32})).pow(2).mean().backward();
            opt.step();
        }
        for (const auto& [name, t] : params_of(*model->backbone())) {
            CHECK(torch::equal(t, before.at(name)));
        }
        bool head_moved = false;
        for (const auto& [name, t] : params_of(*model->head())) {
            head_moved = head_moved || !torch::equal(t, head_before.at(name));
        }
        CHECK(head_moved);
    }

    TEST_CASE("checkpoint round trip") {
        TempDir dir;
        Checkpoint ck;
        ck.tensors["a.weight"] = torch::randn({3, 4});
        ck.tensors["b.bias"] = torch::arange(5, torch::kLong);
        ck.tensors["c.half"] = torch::randn({2}).to(torch::kDouble);
        ck.metadata = json{{"bands", {"red", "nir"}}, {"note", "x"}};
        save_checkpoint(dir / "ck.safetensors", ck);
        auto back = load_checkpoint(dir / "ck.safetensors");
        CHECK(back.metadata == ck.metadata);
        REQUIRE(back.tensors.size() == 3);
        for (const auto& [name, t] : ck.tensors) {
            CHECK(back.tensors.at(name).dtype() == t.dtype());
            CHECK(torch::equal(back.tensors.at(name), t));
        }
        geotune::testing::write_text(dir / "bad.ckpt", "not a checkpoint");
        CHECK(thrown_code([&] { load_checkpoint(dir / "bad.ckpt"); }) == ErrorCode::CheckpointFormat);
        CHECK(thrown_code([&] { load_checkpoint(dir / "absent.ckpt"); }) == ErrorCode::CheckpointMissing);
    }

    TEST_CASE("model weights survive save and load") {
        TempDir dir;
        const auto spec = conv_spec(TaskKind::Segmentation, "pyramid_fusion");
        auto a = build_model(spec, 1);
        auto b = build_model(spec, 2);
        save_model(dir / "m.ckpt", *a);
        load_model_weights(dir / "m.ckpt", *b);
        for (const auto& [name, t] : params_of(*a)) {
            CHECK(torch::equal(t, params_of(*b).at(name)));
        }
        auto meta = load_checkpoint(dir / "m.ckpt").metadata;
        CHECK(meta.at("bands") == json(spec.bands));
    }

    TEST_CASE("pretrained backbone is remapped by band name") {
        TempDir dir;
        ModelBuildSpec pre = conv_spec(TaskKind::Segmentation, "fcn");
        pre.bands = kHls;
        auto source = build_model(pre, 4);
        save_model(dir / "pre.ckpt", *source);

        ModelBuildSpec target = pre;
        target.bands = {"B04", "NEW", "B02"};
        target.pretrained = dir / "pre.ckpt";
        auto model = build_model(target, 8);
        auto src = source->backbone()->named_parameters()["stem.0.weight"];
        auto dst = model->backbone()->named_parameters()["stem.0.weight"];
        CHECK(torch::equal(dst.select(1, 0), src.select(1, 2)));
        CHECK(torch::equal(dst.select(1, 2), src.select(1, 0)));
        auto later_src = source->backbone()->named_parameters()["stage3.0.weight"];
        auto later_dst = model->backbone()->named_parameters()["stage3.0.weight"];
        CHECK(torch::equal(later_src, later_dst));

        Checkpoint bare = load_checkpoint(dir / "pre.ckpt");
        bare.metadata.erase("bands");
        save_checkpoint(dir / "bare.ckpt", bare);
        target.pretrained = dir / "bare.ckpt";
        CHECK(thrown_code([&] { build_model(target, 8); }) == ErrorCode::CheckpointBandMismatch);
    }
}
