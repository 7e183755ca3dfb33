#include <doctest.h>

#include "poseidon/error.hpp"
#include "poseidon/payl.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace poseidon;

namespace {

std::vector<std::uint8_t> random_payload(std::mt19937_64& rng, std::size_t max_len = 300) {
    std::vector<std::uint8_t> p(1 + rng() % max_len);
    // Skewed alphabet so some byte values vary and most stay at zero.
    const int span = 1 + static_cast<int>(rng() % 40);
    for (auto& b : p)
        b = static_cast<std::uint8_t>(60 + rng() % span);
    return p;
}

/// Counts bytes directly; no shared code with byte_frequency.
std::array<double, 256> count_freq(const std::vector<std::uint8_t>& p) {
    std::array<double, 256> f{};
    for (auto b : p)
        f[b] += 1.0;
    for (auto& x : f)
        x /= static_cast<double>(p.size());
    return f;
}

struct Batch {
    std::array<double, 256> mean{};
    std::array<double, 256> sd{};
};

/// Two-pass mean and population standard deviation.
Batch batch_stats(const std::vector<std::vector<std::uint8_t>>& set) {
    Batch out;
    std::vector<std::array<double, 256>> freqs;
    for (const auto& p : set)
        freqs.push_back(count_freq(p));
    const double n = static_cast<double>(freqs.size());
    for (std::size_t b = 0; b < 256; ++b) {
        double s = 0;
        for (const auto& f : freqs)
            s += f[b];
        out.mean[b] = s / n;
        double v = 0;
        for (const auto& f : freqs)
            v += (f[b] - out.mean[b]) * (f[b] - out.mean[b]);
        out.sd[b] = std::sqrt(v / n);
    }
    return out;
}

FeatureVector build(const std::vector<std::vector<std::uint8_t>>& set) {
    FeatureVector fv;
    for (const auto& p : set)
        fv.update(p);
    return fv;
}

void check_matches_batch(const FeatureVector& fv, const std::vector<std::vector<std::uint8_t>>& set) {
    auto ref = batch_stats(set);
    CHECK(fv.count == set.size());
    double worst = 0;
    for (std::size_t b = 0; b < 256; ++b) {
        worst = std::max(worst, std::fabs(fv.mean[b] - ref.mean[b]));
        worst = std::max(worst, std::fabs(fv.std_dev(b) - ref.sd[b]));
    }
    CHECK(worst <= 1e-9);
}

FeatureVector from_frequency(std::initializer_list<std::pair<std::size_t, double>> comps) {
    ByteFrequency f{};
    for (auto [b, v] : comps)
        f[b] = v;
    FeatureVector fv;
    fv.update(f);
    return fv;
}

}  // namespace

TEST_CASE("byte_frequency") {
    auto f = byte_frequency(std::vector<std::uint8_t>{0x41, 0x41});
    CHECK(f[0x41] == 1.0);
    for (std::size_t b = 0; b < 256; ++b)
        if (b != 0x41)
            CHECK(f[b] == 0.0);

    f = byte_frequency(std::vector<std::uint8_t>{0, 1, 2, 3});
    for (std::size_t b = 0; b < 4; ++b)
        CHECK(f[b] == 0.25);

    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        auto p = random_payload(rng, 2000);
        auto g = byte_frequency(p);
        CHECK(g == count_freq(p));
        double s = 0;
        for (double x : g)
            s += x;
        CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(byte_frequency(std::vector<std::uint8_t>{}), std::invalid_argument);
}

TEST_CASE("update") {
    FeatureVector fv;
    fv.update(std::vector<std::uint8_t>{0x41, 0x41});
    CHECK(fv.count == 1);
    CHECK(fv.mean[0x41] == 1.0);
    for (std::size_t b = 0; b < 256; ++b)
        CHECK(fv.std_dev(b) == 0.0);

    FeatureVector same;
    std::vector<std::uint8_t> p{1, 2, 2, 9, 200};
    for (int i = 0; i < 37; ++i)
        same.update(p);
    CHECK(same.count == 37);
    for (std::size_t b = 0; b < 256; ++b)
        CHECK(same.std_dev(b) == 0.0);

    std::mt19937_64 rng(2);
    std::vector<std::vector<std::uint8_t>> set;
    for (int i = 0; i < 1000; ++i)
        set.push_back(random_payload(rng));
    auto built = build(set);
    check_matches_batch(built, set);
    double sum = 0;
    for (double m : built.mean) {
        CHECK_UNARY(m >= 0.0);
        CHECK_UNARY(m <= 1.0);
        sum += m;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
}

TEST_CASE("distance") {
    std::vector<std::uint8_t> p{5, 5, 6, 7};
    FeatureVector single;
    single.update(p);
    CHECK(single.distance(p) == 0.0);

    // All stdDev zero: distance reduces to the L1 gap over the smoothing.
    std::vector<std::uint8_t> q{5, 8, 8, 8};
    double l1 = 0;
    auto fp = count_freq(p), fq = count_freq(q);
    for (std::size_t b = 0; b < 256; ++b)
        l1 += std::fabs(fp[b] - fq[b]);
    CHECK(single.distance(q, 0.001) == doctest::Approx(l1 / 0.001).epsilon(1e-12));
    CHECK(single.distance(q, 0.5) == doctest::Approx(l1 / 0.5).epsilon(1e-12));

    std::mt19937_64 rng(3);
    for (int t = 0; t < 30; ++t) {
        std::vector<std::vector<std::uint8_t>> set;
        for (int i = 0; i < 20; ++i)
            set.push_back(random_payload(rng));
        auto fv = build(set);
        auto x = random_payload(rng);
        auto fx = count_freq(x);
        double oracle = 0;
        for (std::size_t b = 0; b < 256; ++b)
            oracle += std::fabs(fx[b] - fv.mean[b]) / (std::sqrt(fv.m2[b] / static_cast<double>(fv.count)) + 0.001);
        CHECK(fv.distance(x) == oracle);
        CHECK_UNARY(fv.distance(x) >= 0.0);
        // Larger smoothing never increases the distance.
        CHECK_UNARY(fv.distance(x, 0.01) <= fv.distance(x, 0.001));
        CHECK_UNARY(fv.distance(x, 1.0) <= fv.distance(x, 0.01));
    }

    FeatureVector empty;
    try {
        (void)empty.distance(p);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoModel);
    }
    CHECK_THROWS_AS((void)single.distance(p, 0.0), std::invalid_argument);
}

TEST_CASE("merge") {
    std::mt19937_64 rng(4);
    std::vector<std::vector<std::uint8_t>> s1, s2, s3;
    for (int i = 0; i < 120; ++i)
        s1.push_back(random_payload(rng));
    for (int i = 0; i < 75; ++i)
        s2.push_back(random_payload(rng));
    for (int i = 0; i < 33; ++i)
        s3.push_back(random_payload(rng));
    auto a = build(s1), b = build(s2), c = build(s3);

    CHECK(merge(a, FeatureVector{}) == a);
    CHECK(merge(FeatureVector{}, a) == a);
    CHECK_THROWS_AS(merge(FeatureVector{}, FeatureVector{}), Error);

    std::vector<std::uint8_t> p{1, 1, 3};
    FeatureVector one;
    one.update(p);
    auto two = merge(one, one);
    CHECK(two.count == 2);
    CHECK(two.mean == one.mean);
    for (std::size_t i = 0; i < 256; ++i)
        CHECK(two.std_dev(i) == 0.0);

    auto u = s1;
    u.insert(u.end(), s2.begin(), s2.end());
    check_matches_batch(merge(a, b), u);

    auto left = merge(merge(a, b), c), right = merge(a, merge(b, c));
    CHECK(left.count == right.count);
    double worst = 0;
    for (std::size_t i = 0; i < 256; ++i) {
        worst = std::max(worst, std::fabs(left.mean[i] - right.mean[i]));
        worst = std::max(worst, std::fabs(left.std_dev(i) - right.std_dev(i)));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("cluster_length_models") {
    std::mt19937_64 rng(5);
    std::vector<LengthModel> models;
    for (std::uint32_t len : {10u, 11u, 40u, 41u, 90u}) {
        std::vector<std::vector<std::uint8_t>> set;
        for (int i = 0; i < 10; ++i)
            set.push_back(random_payload(rng));
        models.push_back({len, build(set)});
    }

    SUBCASE("threshold zero keeps every model") {
        auto out = cluster_length_models(models, 0.0);
        REQUIRE(out.size() == models.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i].first_len == models[i].len);
            CHECK(out[i].last_len == models[i].len);
            CHECK(out[i].fv == models[i].fv);
        }
    }
    SUBCASE("infinite threshold merges everything") {
        auto out = cluster_length_models(models, std::numeric_limits<double>::infinity());
        REQUIRE(out.size() == 1);
        CHECK(out[0].first_len == 10);
        CHECK(out[0].last_len == 90);
        CHECK(out[0].fv.count == 50);
    }
    SUBCASE("fixed point at intermediate thresholds") {
        for (double t : {0.05, 0.2, 0.4, 0.8}) {
            auto out = cluster_length_models(models, t);
            std::uint64_t total = 0;
            for (std::size_t i = 0; i < out.size(); ++i) {
                total += out[i].fv.count;
                if (i + 1 < out.size()) {
                    CHECK_UNARY(mean_l1(out[i].fv, out[i + 1].fv) >= t);
                    CHECK(out[i].last_len < out[i + 1].first_len);
                }
            }
            CHECK(total == 50);
        }
    }
    SUBCASE("unsorted input is rejected") {
        std::swap(models[0], models[1]);
        CHECK_THROWS_AS(cluster_length_models(models, 0.1), std::invalid_argument);
    }
}

TEST_CASE("three-model merge trace") {
    // Gaps: A-B = 0.01, B-C = 0.9. After A and B merge the pooled mean is
    // (0.9975, 0.0025), still 0.905 away from C.
    auto a = from_frequency({{0, 1.0}});
    auto b = from_frequency({{0, 0.995}, {1, 0.005}});
    auto c = from_frequency({{0, 0.545}, {1, 0.455}});
    CHECK(mean_l1(a, b) == doctest::Approx(0.01));
    CHECK(mean_l1(b, c) == doctest::Approx(0.9));

    auto out = cluster_length_models({{100, a}, {101, b}, {102, c}}, 0.1);
    REQUIRE(out.size() == 2);
    CHECK(out[0].first_len == 100);
    CHECK(out[0].last_len == 101);
    CHECK(out[0].fv.count == 2);
    CHECK(out[0].fv.mean[0] == doctest::Approx(0.9975).epsilon(1e-12));
    CHECK(out[0].fv.mean[1] == doctest::Approx(0.0025).epsilon(1e-12));
    CHECK(out[0].fv.std_dev(1) == doctest::Approx(0.0025).epsilon(1e-12));
    CHECK(out[1].first_len == 102);
    CHECK(out[1].last_len == 102);
    CHECK(out[1].fv == c);
}
