#include <doctest.h>

#include "lacovl/rng.hpp"

using namespace lacovl;

TEST_CASE("same seed reproduces the stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("splits are independent of sibling consumption") {
    Rng root(7);
    Rng c1 = root.split("alpha");
    Rng c2 = root.split("beta");
    const auto first_c2 = Rng(7).split("beta").next_u64();
    c1.next_u64();
    c1.next_u64();
    CHECK(c2.next_u64() == first_c2);
    CHECK(Rng(7).split("alpha").next_u64() != Rng(7).split("beta").next_u64());
}

TEST_CASE("uniform stays in range") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const auto v = rng.uniform_int(7);
        CHECK(v < 7);
    }
}

TEST_CASE("normal produces both signs") {
    Rng rng(9);
    int neg = 0, pos = 0;
    for (int i = 0; i < 200; ++i) (rng.normal() < 0 ? neg : pos)++;
    CHECK(neg > 20);
    CHECK(pos > 20);
}
