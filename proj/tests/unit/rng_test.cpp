#include <gtest/gtest.h>

#include "reldetr/rng.hpp"

using reldetr::Rng;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        EXPECT_EQ(x, b.uniform());
        EXPECT_NE(x, c.uniform());
    }
}

TEST(Rng, NamedStreamsAreIndependentOfUse) {
    Rng root(7);
    const auto before = root.split("weights").seed();
    root.uniform();
    root.normal();
    EXPECT_EQ(root.split("weights").seed(), before);
    EXPECT_NE(root.split("weights").seed(), root.split("data").seed());
    EXPECT_NE(root.split(0).seed(), root.split(1).seed());
    EXPECT_EQ(Rng(7).split("a").split(3).seed(), Rng(7).split("a").split(3).seed());
}

TEST(Rng, Ranges) {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform(-2.0, 3.0);
        EXPECT_GE(u, -2.0);
        EXPECT_LT(u, 3.0);
        const auto k = r.integer(1, 6);
        EXPECT_GE(k, 1);
        EXPECT_LE(k, 6);
    }
}

TEST(Hashes, KnownValues) {
    EXPECT_EQ(reldetr::fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(reldetr::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(reldetr::splitmix64(0), 0xe220a8397b1dcdafULL);
}
