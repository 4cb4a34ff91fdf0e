#include <doctest.h>

#include <cmath>

#include "coea/encoder.hpp"
#include "support/gradcheck.hpp"

using namespace coea;

namespace {

EncoderShape small_shape() {
    EncoderShape s;
    s.d = 8;
    s.layers = 2;
    s.heads = 2;
    s.t_max = 6;
    s.n_age = 3;
    s.n_gender = 3;
    s.n_occupation = 4;
    return s;
}

Vocab small_items() { return Vocab({"i0", "i1", "i2", "i3", "i4", "i5"}); }

EncoderExample example(const std::vector<ItemId>& items, int age, Gender g, int occ) {
    EncoderExample ex;
    ex.filtered.user_id = "u";
    ex.filtered.items = items;
    ex.attrs = {"u", age, g, occ};
    return ex;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("init shapes follow the config") {
    Rng rng(1);
    EncoderShape s = small_shape();
    EncoderParams p = init_encoder(small_items(), s, rng);
    CHECK(p.w_emb.rows() == s.d);
    CHECK(p.w_emb.cols() == 6);
    CHECK(p.positions.rows() == s.t_max + 1);
    CHECK(p.positions.cols() == s.d);
    REQUIRE(p.layers.size() == s.layers);
    CHECK(p.layers[0].w_q.size() == s.heads);
    CHECK(p.layers[0].w_q[0].rows() == s.d);
    CHECK(p.layers[0].w_q[0].cols() == s.d / s.heads);
    CHECK(p.layers[0].w_o.rows() == s.d);
    CHECK(p.layers[0].ln_gain.size() == s.d);

    EncoderParams p2 = init_encoder(small_items(), s, rng);
    CHECK(p2.w_emb.rows() == s.d);  // distinct rng state, same shapes
}

TEST_CASE("same seed initializes identical parameters") {
    Rng a(5), b(5);
    EncoderParams pa = init_encoder(small_items(), small_shape(), a);
    EncoderParams pb = init_encoder(small_items(), small_shape(), b);
    CHECK(pa.w_emb == pb.w_emb);
    CHECK(pa.layers[1].w_o == pb.layers[1].w_o);
}

TEST_CASE("embedding prepends the attribute token and truncates to t_max") {
    Rng rng(2);
    EncoderParams p = init_encoder(small_items(), small_shape(), rng);
    FilteredLongSequence f{"u", {"i1", "i2", "i3"}};
    UserAttributes attrs{"u", 1, Gender::male, 2};
    Matrix in = embed_sequence(f, attrs, p);
    REQUIRE(in.rows() == 4);
    // Row 0 = age + gender + occupation embeddings + position 0.
    for (size_t j = 0; j < p.shape.d; ++j) {
        double expect = p.age_emb(1, j) + p.gender_emb(1, j) + p.occ_emb(2, j) +
                        p.positions(0, j);
        CHECK(in(0, j) == doctest::Approx(expect).epsilon(1e-15));
    }
    // Row t = item embedding column + position t.
    int idx = p.items.require("i2");
    for (size_t j = 0; j < p.shape.d; ++j)
        CHECK(in(2, j) == doctest::Approx(p.w_emb(j, idx) + p.positions(2, j)).epsilon(1e-15));

    // Longer than t_max keeps the most recent t_max items.
    FilteredLongSequence longf{"u", {"i0", "i1", "i2", "i3", "i4", "i5", "i0", "i1"}};
    Matrix big = embed_sequence(longf, attrs, p);
    CHECK(big.rows() == p.shape.t_max + 1);
    int last = p.items.require("i1");
    size_t t = p.shape.t_max;
    for (size_t j = 0; j < p.shape.d; ++j)
        CHECK(big(t, j) == doctest::Approx(p.w_emb(j, last) + p.positions(t, j)).epsilon(1e-15));
}

TEST_CASE("attention is causal") {
    Rng rng(3);
    EncoderParams p = init_encoder(small_items(), small_shape(), rng);
    Matrix h(5, p.shape.d);
    for (double& v : h.raw()) v = rng.next_gaussian();
    Matrix out = causal_attention_forward(h, p.layers[0], p.shape.ln_eps);
    Matrix h2 = h;
    h2(3, 0) += 10.0;  // perturb a later row
    Matrix out2 = causal_attention_forward(h2, p.layers[0], p.shape.ln_eps);
    for (size_t t = 0; t < 3; ++t)
        for (size_t j = 0; j < p.shape.d; ++j)
            CHECK(out(t, j) == out2(t, j));
    // The perturbed row itself must change.
    double diff = 0.0;
    for (size_t j = 0; j < p.shape.d; ++j) diff += std::abs(out(3, j) - out2(3, j));
    CHECK(diff > 0.0);
}

TEST_CASE("layer norm rows are standardized before gain") {
    Rng rng(4);
    EncoderParams p = init_encoder(small_items(), small_shape(), rng);
    Matrix h(4, p.shape.d);
    for (double& v : h.raw()) v = rng.next_gaussian() * 3.0;
    CsaLayerCache cache;
    (void)causal_attention_forward(h, p.layers[0], p.shape.ln_eps, &cache);
    for (size_t t = 0; t < cache.xhat.rows(); ++t) {
        double mean = 0.0, var = 0.0;
        for (size_t j = 0; j < p.shape.d; ++j) mean += cache.xhat(t, j);
        mean /= static_cast<double>(p.shape.d);
        for (size_t j = 0; j < p.shape.d; ++j) {
            double dv = cache.xhat(t, j) - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(p.shape.d);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts variance slightly
    }
}

TEST_CASE("u_long is the final output row") {
    Rng rng(5);
    EncoderParams p = init_encoder(small_items(), small_shape(), rng);
    FilteredLongSequence f{"u", {"i0", "i3", "i5"}};
    UserAttributes attrs{"u", 0, Gender::female, 1};
    EncoderCache cache;
    Matrix out = encoder_forward(f, attrs, p, &cache);
    LongTermRepresentation rep = encode_long_term(f, attrs, p);
    REQUIRE(rep.u_long.size() == p.shape.d);
    for (size_t j = 0; j < p.shape.d; ++j)
        CHECK(rep.u_long[j] == out(out.rows() - 1, j));
}

TEST_CASE("next-item gradient matches finite differences") {
    Rng rng(6);
    EncoderParams p = init_encoder(small_items(), small_shape(), rng);
    std::vector<EncoderExample> batch{
        example({"i0", "i2", "i4", "i1"}, 0, Gender::female, 1),
        example({"i5", "i3"}, 2, Gender::male, 3),
        example({"i1", "i1", "i2"}, 1, Gender::unknown, 0)};
    EncoderParams grads = zeros_like(p);
    double loss = next_item_loss_and_grad(p, batch, &grads);
    CHECK(loss > 0.0);
    auto res = test::finite_difference_check(
        param_views(p), param_views(grads),
        [&]() { return next_item_loss_and_grad(p, batch, nullptr); });
    CAPTURE(res.worst);
    CHECK(res.max_rel < 1e-4);
    CHECK(res.checked > 500);
}

TEST_CASE("full-batch training reduces the loss") {
    Rng rng(7);
    EncoderParams p = init_encoder(small_items(), small_shape(), rng);
    std::vector<EncoderExample> batch{
        example({"i0", "i1", "i2", "i3"}, 0, Gender::female, 1),
        example({"i0", "i1", "i2", "i3"}, 1, Gender::male, 2),
        example({"i4", "i5", "i4", "i5"}, 2, Gender::male, 0)};
    EncoderTrainConfig cfg;
    cfg.steps = 30;
    cfg.lr = 0.05;
    TrainTrace trace = train_encoder(p, batch, cfg);
    REQUIRE(trace.loss.size() == cfg.steps + 1);
    CHECK(trace.loss.back() < trace.loss.front());
}

}  // TEST_SUITE
