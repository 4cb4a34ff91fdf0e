#include <doctest.h>

#include <cmath>

#include "coea/errors.hpp"
#include "coea/quantizer.hpp"
#include "support/gradcheck.hpp"

using namespace coea;

namespace {

RqVaeShape small_shape() {
    RqVaeShape s;
    s.d = 6;
    s.d_h = 5;
    s.d_z = 4;
    s.levels = 3;
    s.codebook_size = 4;
    return s;
}

std::vector<Vec> random_batch(size_t n, size_t d, Rng& rng) {
    std::vector<Vec> batch(n, Vec(d));
    for (auto& v : batch)
        for (double& x : v) x = rng.next_gaussian();
    return batch;
}

}  // namespace

TEST_SUITE("quantizer") {

TEST_CASE("residual recurrence telescopes exactly") {
    Rng rng(1);
    RqVaeShape s = small_shape();
    RqVaeParams p = init_rqvae(s, rng);
    Vec z(s.d_z);
    for (double& v : z) v = rng.next_gaussian();
    QuantizationResult q = residual_quantize(z, p.codebooks);
    REQUIRE(q.indices.size() == s.levels);
    REQUIRE(q.residuals.size() == s.levels + 1);
    CHECK(q.residuals[0] == z);
    for (size_t k = 0; k < s.levels; ++k) {
        const Matrix& cb = p.codebooks[k];
        for (size_t j = 0; j < s.d_z; ++j) {
            double expect = q.residuals[k][j] - cb(q.indices[k], j);
            CHECK(q.residuals[k + 1][j] == expect);  // exact, no tolerance
        }
    }
    // zhat is the sum of the selected codewords.
    for (size_t j = 0; j < s.d_z; ++j) {
        double sum = 0.0;
        for (size_t k = 0; k < s.levels; ++k) sum += p.codebooks[k](q.indices[k], j);
        CHECK(q.zhat[j] == sum);
    }
}

TEST_CASE("argmin scan picks the nearest codeword with lowest-index ties") {
    Matrix cb(3, 2);
    cb(0, 0) = 1.0; cb(0, 1) = 0.0;
    cb(1, 0) = 0.0; cb(1, 1) = 1.0;
    cb(2, 0) = 1.0; cb(2, 1) = 0.0;  // duplicate of row 0
    Vec z{0.9, 0.1};
    QuantizationResult q = residual_quantize(z, {cb});
    CHECK(q.indices[0] == 0);  // rows 0 and 2 tie, lowest index wins

    Vec z2{0.1, 0.9};
    CHECK(residual_quantize(z2, {cb}).indices[0] == 1);
}

TEST_CASE("nearest-neighbor optimality against exhaustive scan") {
    Rng rng(2);
    RqVaeShape s = small_shape();
    RqVaeParams p = init_rqvae(s, rng);
    for (int trial = 0; trial < 50; ++trial) {
        Vec z(s.d_z);
        for (double& v : z) v = rng.next_gaussian();
        QuantizationResult q = residual_quantize(z, p.codebooks);
        Vec r = z;
        for (size_t k = 0; k < s.levels; ++k) {
            const Matrix& cb = p.codebooks[k];
            double best = l2_distance_sq(r.data(), cb.row(q.indices[k]), s.d_z);
            for (size_t c = 0; c < cb.rows(); ++c)
                CHECK(l2_distance_sq(r.data(), cb.row(c), s.d_z) >= best);
            for (size_t j = 0; j < s.d_z; ++j) r[j] -= cb(q.indices[k], j);
        }
    }
}

TEST_CASE("quantization is idempotent") {
    Rng rng(3);

    SUBCASE("single level, arbitrary codebook") {
        // K_q = 1: zhat is itself a codeword, so re-quantizing finds distance
        // zero and the tie rule re-picks the same (lowest equal) index.
        Matrix cb(6, 4);
        for (size_t i = 0; i < cb.rows(); ++i)
            for (size_t j = 0; j < cb.cols(); ++j) cb(i, j) = rng.next_gaussian();
        for (int t = 0; t < 50; ++t) {
            Vec z(4);
            for (double& v : z) v = rng.next_gaussian();
            QuantizationResult q1 = residual_quantize(z, {cb});
            QuantizationResult q2 = residual_quantize(q1.zhat, {cb});
            CHECK(q2.indices == q1.indices);
            CHECK(q2.zhat == q1.zhat);
        }
    }

    SUBCASE("multi level with scale-separated codebooks") {
        // Later levels are orders of magnitude finer than the codeword gaps
        // of earlier ones, so the perturbation the later codewords add to
        // zhat can never flip an earlier argmin.
        std::vector<Matrix> codebooks;
        double scale = 1.0;
        for (size_t level = 0; level < 3; ++level) {
            Matrix cb(4, 4);
            for (size_t i = 0; i < cb.rows(); ++i)
                for (size_t j = 0; j < cb.cols(); ++j) cb(i, j) = scale * rng.next_gaussian();
            codebooks.push_back(cb);
            scale *= 0.01;
        }
        for (int t = 0; t < 50; ++t) {
            Vec z(4);
            for (double& v : z) v = rng.next_gaussian();
            QuantizationResult q1 = residual_quantize(z, codebooks);
            QuantizationResult q2 = residual_quantize(q1.zhat, codebooks);
            CHECK(q2.indices == q1.indices);
            CHECK(q2.zhat == q1.zhat);
        }
    }
}

TEST_CASE("csid string round trip") {
    GroupCSID csid{3, 0, 15, 7};
    CHECK(csid_to_string(csid) == "3-0-15-7");
    CHECK(csid_from_string("3-0-15-7") == csid);
    CHECK_THROWS_AS((void)csid_from_string("3-x-1"), DataError);
    CHECK_THROWS_AS((void)csid_from_string(""), DataError);
}

TEST_CASE("assign_csid is deterministic and in range") {
    Rng rng(4);
    RqVaeShape s = small_shape();
    RqVaeParams p = init_rqvae(s, rng);
    Vec u(s.d);
    for (double& v : u) v = rng.next_gaussian();
    GroupCSID a = assign_csid(p, u);
    GroupCSID b = assign_csid(p, u);
    CHECK(a == b);
    REQUIRE(a.size() == s.levels);
    for (int idx : a) {
        CHECK(idx >= 0);
        CHECK(idx < static_cast<int>(s.codebook_size));
    }
}

TEST_CASE("non-quantized gradient matches finite differences") {
    Rng rng(5);
    RqVaeShape s = small_shape();
    RqVaeParams p = init_rqvae(s, rng);
    auto batch = random_batch(4, s.d, rng);
    RqVaeParams grads = rqvae_zeros_like(p);
    double loss = rqvae_loss_and_grad(p, batch, false, &grads);
    CHECK(loss > 0.0);
    auto res = test::finite_difference_check(
        rqvae_param_views(p), rqvae_param_views(grads),
        [&]() { return rqvae_loss_and_grad(p, batch, false, nullptr); });
    CAPTURE(res.worst);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("quantized loss includes codebook and commitment terms") {
    Rng rng(6);
    RqVaeShape s = small_shape();
    RqVaeParams p = init_rqvae(s, rng);
    auto batch = random_batch(4, s.d, rng);
    double with_q = rqvae_loss_and_grad(p, batch, true, nullptr);
    CHECK(std::isfinite(with_q));
    CHECK(with_q > 0.0);
}

TEST_CASE("training drives reconstruction down and seeds codebooks from the batch") {
    Rng rng(7);
    RqVaeShape s = small_shape();
    s.levels = 2;
    auto batch = random_batch(12, s.d, rng);
    RqVaeTrainConfig cfg;
    cfg.epochs = 120;
    cfg.lr = 0.01;
    RqVaeTrainResult result = train_rqvae(batch, s, cfg, rng);
    REQUIRE(result.loss.size() == cfg.epochs + 1);
    CHECK(result.loss.back() < result.loss.front());
    CHECK(result.params.codebooks.size() == s.levels);
}

TEST_CASE("training refuses a batch smaller than the codebook") {
    Rng rng(8);
    RqVaeShape s = small_shape();
    auto batch = random_batch(s.codebook_size - 1, s.d, rng);
    RqVaeTrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS((void)train_rqvae(batch, s, cfg, rng), DataError);
}

TEST_CASE("encode and decode shapes") {
    Rng rng(9);
    RqVaeShape s = small_shape();
    RqVaeParams p = init_rqvae(s, rng);
    Vec u(s.d, 0.5);
    Vec z = rqvae_encode(p, u);
    CHECK(z.size() == s.d_z);
    Vec back = rqvae_decode(p, z);
    CHECK(back.size() == s.d);
}

}  // TEST_SUITE
