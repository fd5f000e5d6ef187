#include <doctest.h>

#include "oracles.hpp"

#include "dban/error.hpp"
#include "dban/tensor.hpp"

using namespace dban;

namespace {

TensorD rand_t(Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return oracle::random_tensor(s, rng);
}

} // namespace

TEST_CASE("tensor construction enforces the element count") {
    CHECK(TensorD(Shape{2, 3, 4, 5}).size() == 120);
    CHECK_THROWS_AS(TensorD(Shape{1, 2, 2, 2}, std::vector<double>(7)), ShapeError);
    const Tensor d;
    CHECK(d.shape() == Shape{1, 1, 1, 1});
    CHECK(d.size() == 1);
}

TEST_CASE("concat of a single tensor is a bitwise copy") {
    const TensorD a = rand_t({1, 3, 4, 4}, 1);
    CHECK(concat_channels(std::vector<TensorD>{a}) == a);
}

TEST_CASE("concat places channel blocks in list order") {
    const TensorD a = rand_t({1, 16, 4, 4}, 2);
    const TensorD b = rand_t({1, 16, 4, 4}, 3);
    const TensorD c = concat_channels(std::vector<TensorD>{a, b});
    REQUIRE(c.shape() == Shape{1, 32, 4, 4});
    for (int ch = 0; ch < 16; ++ch)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                CHECK(c(0, ch, y, x) == a(0, ch, y, x));
                CHECK(c(0, 16 + ch, y, x) == b(0, ch, y, x));
            }
}

TEST_CASE("concat then slice round-trips exactly for random partitions") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const int parts = std::uniform_int_distribution<int>(1, 4)(rng);
        const int n = std::uniform_int_distribution<int>(1, 2)(rng);
        std::vector<TensorD> in;
        for (int p = 0; p < parts; ++p)
            in.push_back(oracle::random_tensor({n, std::uniform_int_distribution<int>(1, 5)(rng), 3, 2}, rng));
        const TensorD cat = concat_channels(in);
        int off = 0;
        for (const auto& t : in) {
            CHECK(slice_channels(cat, off, off + t.c()) == t);
            off += t.c();
        }
        CHECK(off == cat.c());
    }
}

TEST_CASE("concat is associative up to flattening") {
    const TensorD a = rand_t({2, 2, 3, 3}, 5), b = rand_t({2, 1, 3, 3}, 6), c = rand_t({2, 3, 3, 3}, 7);
    const TensorD ab = concat_channels(std::vector<TensorD>{a, b});
    CHECK(concat_channels(std::vector<TensorD>{ab, c}) == concat_channels(std::vector<TensorD>{a, b, c}));
}

TEST_CASE("concat rejects mismatched extents and names the index") {
    const TensorD a = rand_t({1, 2, 4, 4}, 8);
    const TensorD b = rand_t({1, 2, 4, 5}, 9);
    try {
        (void)concat_channels(std::vector<TensorD>{a, a, b});
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
    CHECK_THROWS_AS(concat_channels(std::vector<TensorD>{}), ShapeError);
}

TEST_CASE("hadamard identities and loop oracle") {
    const TensorD a = rand_t({1, 2, 3, 3}, 10);
    const TensorD b = rand_t({1, 2, 3, 3}, 11);
    CHECK(hadamard(a, TensorD::ones(a.shape())) == a);
    CHECK(hadamard(a, TensorD::zeros(a.shape())) == TensorD::zeros(a.shape()));
    const TensorD h = hadamard(a, b);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x)
                CHECK(h(0, c, y, x) == a(0, c, y, x) * b(0, c, y, x));
    CHECK(hadamard(a, b) == hadamard(b, a));
    CHECK_THROWS_AS(hadamard(a, rand_t({1, 2, 3, 4}, 12)), ShapeError);
}

TEST_CASE("pixelwise add identities and loop oracle") {
    const TensorD a = rand_t({2, 3, 2, 2}, 13);
    const TensorD b = rand_t({2, 3, 2, 2}, 14);
    CHECK(pixelwise_add(a, TensorD::zeros(a.shape())) == a);
    TensorD neg = a;
    for (auto& v : neg.values())
        v = -v;
    CHECK(pixelwise_add(a, neg) == TensorD::zeros(a.shape()));
    const TensorD s = pixelwise_add(a, b);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(s[i] == a[i] + b[i]);
    CHECK(pixelwise_add(a, b) == pixelwise_add(b, a));
    CHECK_THROWS_AS(pixelwise_add(a, rand_t({1, 3, 2, 2}, 15)), ShapeError);
}

TEST_CASE("slice channels") {
    const TensorD t = rand_t({1, 4, 3, 3}, 16);
    CHECK(slice_channels(t, 0, t.c()) == t);
    const TensorD s = slice_channels(t, 1, 3);
    REQUIRE(s.c() == 2);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x)
                CHECK(s(0, c, y, x) == t(0, c + 1, y, x));
    CHECK_THROWS_AS(slice_channels(t, 2, 2), BoundsError);
    CHECK_THROWS_AS(slice_channels(t, -1, 2), BoundsError);
    CHECK_THROWS_AS(slice_channels(t, 0, 5), BoundsError);
}

TEST_CASE("finite inputs stay finite") {
    const TensorD a = rand_t({1, 3, 5, 5}, 17);
    CHECK(hadamard(a, a).all_finite());
    TensorD bad = a;
    bad[3] = std::nan("");
    CHECK_FALSE(bad.all_finite());
}
