// Microbenchmarks for the hot paths: encoder forward/backward at the paper
// shape, residual quantization, policy updates and store lookups.

#include <benchmark/benchmark.h>

#include <vector>

#include "coea/encoder.hpp"
#include "coea/pco.hpp"
#include "coea/quantizer.hpp"
#include "coea/rng.hpp"
#include "coea/store.hpp"
#include "coea/training.hpp"

using namespace coea;

namespace {

Vocab bench_items(size_t n) {
    std::vector<std::string> names;
    for (size_t i = 0; i < n; ++i) names.push_back("item" + std::to_string(i));
    return Vocab(names);
}

Vocab bench_categories(size_t n) {
    std::vector<std::string> names;
    for (size_t i = 0; i < n; ++i) names.push_back("cat" + std::to_string(i));
    return Vocab(names);
}

EncoderExample bench_example(const Vocab& items, size_t len, Rng& rng) {
    EncoderExample ex;
    ex.filtered.user_id = "u0";
    for (size_t t = 0; t < len; ++t)
        ex.filtered.items.push_back(items.name(rng.bounded(items.size())));
    ex.attrs.user_id = "u0";
    ex.attrs.age_bucket = 2;
    ex.attrs.gender = Gender::female;
    ex.attrs.occupation = 4;
    return ex;
}

void BM_EncoderForward(benchmark::State& state) {
    Rng rng(1);
    Vocab items = bench_items(200);
    EncoderShape shape;  // paper defaults: d=128, 4 layers, 4 heads
    EncoderParams params = init_encoder(items, shape, rng);
    EncoderExample ex = bench_example(items, static_cast<size_t>(state.range(0)), rng);
    for (auto _ : state) {
        Matrix out = encoder_forward(ex.filtered, ex.attrs, params);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_EncoderForward)->Arg(10)->Arg(50);

void BM_EncoderLossAndGrad(benchmark::State& state) {
    Rng rng(2);
    Vocab items = bench_items(200);
    EncoderShape shape;
    EncoderParams params = init_encoder(items, shape, rng);
    std::vector<EncoderExample> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(bench_example(items, 30, rng));
    EncoderParams grads = zeros_like(params);
    for (auto _ : state) {
        double loss = next_item_loss_and_grad(params, batch, &grads);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(BM_EncoderLossAndGrad);

void BM_ResidualQuantize(benchmark::State& state) {
    Rng rng(3);
    RqVaeShape shape;  // S_cb=16, K_q=4
    RqVaeParams params = init_rqvae(shape, rng);
    Vec z(shape.d_z);
    for (double& v : z) v = rng.next_gaussian();
    for (auto _ : state) {
        QuantizationResult q = residual_quantize(z, params.codebooks);
        benchmark::DoNotOptimize(q);
    }
}
BENCHMARK(BM_ResidualQuantize);

void BM_DpoStep(benchmark::State& state) {
    Rng rng(4);
    Vocab cats = bench_categories(60);
    NoveltyPolicy policy = init_policy(10, cats);
    NoveltyPolicy ref = policy;
    std::vector<PreferencePair> batch;
    for (int i = 0; i < 64; ++i) {
        PreferencePair pr;
        pr.context.group = i % 10;
        pr.context.recent = {static_cast<int>(rng.bounded(60)),
                             static_cast<int>(rng.bounded(60))};
        pr.c_pos = static_cast<int>(rng.bounded(60));
        pr.c_neg = static_cast<int>((pr.c_pos + 1 + rng.bounded(59)) % 60);
        batch.push_back(pr);
    }
    NoveltyPolicy grads = policy_zeros_like(policy);
    for (auto _ : state) {
        double loss = total_loss_and_grad(policy, ref, batch, 0.1, 0.4, &grads);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(BM_DpoStep);

void BM_StoreLookup(benchmark::State& state) {
    std::string path = "/tmp/coea_bench_store.jsonl";
    std::remove(path.c_str());
    Store store(path);
    std::vector<std::string> keys;
    for (int i = 0; i < 500; ++i) {
        StoreRecord rec;
        rec.key = make_key({i % 16, (i / 16) % 16}, {"cat" + std::to_string(i % 40)}).str();
        rec.categories = {{"cat" + std::to_string(i % 40), 0.5 + 0.001 * (i % 400)}};
        rec.cycle = i % 7;
        store.put(rec);
        keys.push_back(rec.key);
    }
    size_t i = 0;
    for (auto _ : state) {
        auto rec = store.get(keys[i++ % keys.size()]);
        benchmark::DoNotOptimize(rec);
    }
    std::remove(path.c_str());
}
BENCHMARK(BM_StoreLookup);

}  // namespace

BENCHMARK_MAIN();
