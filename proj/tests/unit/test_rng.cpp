#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "coea/rng.hpp"
#include "support/oracles.hpp"

using namespace coea;

TEST_SUITE("rng") {

TEST_CASE("same seed reproduces the stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds and forks diverge") {
    Rng a(1), b(2);
    size_t same = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);

    Rng parent(7);
    Rng f1 = parent.fork(1), f2 = parent.fork(2), f1b = Rng(7).fork(1);
    CHECK(f1.next_u64() != f2.next_u64());
    Rng f1c = Rng(7).fork(1);
    CHECK(f1b.next_u64() == f1c.next_u64());
}

TEST_CASE("fork does not advance the parent") {
    Rng a(9), b(9);
    (void)a.fork(3);
    CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("next_double in [0,1)") {
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        double v = rng.next_double();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("bounded stays in range and covers small ranges") {
    Rng rng(11);
    std::set<uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        uint64_t v = rng.bounded(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    for (int i = 0; i < 100; ++i) CHECK(rng.bounded(1) == 0);
}

TEST_CASE("gaussian moments are sane") {
    Rng rng(13);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = rng.next_gaussian();
        sum += v;
        sq += v * v;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("shuffle permutes") {
    Rng rng(17);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> orig = v;
    rng.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == orig);
}

TEST_CASE("sample_without_replacement yields k distinct in-range draws") {
    Rng rng(19);
    auto picks = rng.sample_without_replacement(50, 20);
    CHECK(picks.size() == 20);
    std::set<size_t> uniq(picks.begin(), picks.end());
    CHECK(uniq.size() == 20);
    for (size_t p : picks) CHECK(p < 50);

    auto all = rng.sample_without_replacement(5, 5);
    std::set<size_t> s(all.begin(), all.end());
    CHECK(s == std::set<size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("fnv1a64 matches an independent implementation") {
    for (const std::string& s :
         {std::string(""), std::string("a"), std::string("hello"),
          std::string("catA,catB,catC"), std::string("0-1-2-3|deadbeefdeadbeef"),
          std::string(200, 'x')}) {
        CHECK(fnv1a64(s) == test::oracle_fnv1a64(s));
    }
}

TEST_CASE("fnv1a64 published vectors") {
    // Offset basis and the classic single-byte vector.
    CHECK(fnv1a64("") == 14695981039346656037ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("fnv1a64_hex is 16 lowercase hex chars") {
    std::string h = fnv1a64_hex("hello");
    CHECK(h.size() == 16);
    for (char c : h) CHECK(((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(test::oracle_fnv1a64("hello")));
    CHECK(h == buf);
}

}  // TEST_SUITE
