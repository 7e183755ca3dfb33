#include <doctest.h>

#include "poseidon/error.hpp"
#include "poseidon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

using namespace poseidon;

namespace {

std::array<double, 256> pooled_frequencies(const std::vector<PacketRecord>& packets) {
    std::array<double, 256> f{};
    double total = 0;
    for (const auto& p : packets) {
        for (auto b : p.payload)
            f[b] += 1.0;
        total += static_cast<double>(p.payload.size());
    }
    for (auto& x : f)
        x /= total;
    return f;
}

TrafficSpec letters_spec() {
    // Uppercase letters, A..M three times as likely as N..Z.
    TrafficSpec s;
    s.ports[0].bytes.fill(0.0);
    for (int b = 'A'; b <= 'Z'; ++b)
        s.ports[0].bytes[static_cast<std::size_t>(b)] = b <= 'M' ? 3.0 : 1.0;
    s.ports[0].min_len = 20;
    s.ports[0].max_len = 80;
    s.packet_count = 10000;
    s.seed = 5;
    return s;
}

}  // namespace

TEST_CASE("english distribution is normalised and letter-heavy") {
    auto d = english_byte_distribution();
    double sum = 0, lower = 0;
    for (std::size_t b = 0; b < 256; ++b) {
        CHECK_UNARY(d[b] >= 0.0);
        sum += d[b];
        if (b >= 'a' && b <= 'z')
            lower += d[b];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lower == doctest::Approx(0.74).epsilon(1e-9));
    CHECK(d[' '] == doctest::Approx(0.15).epsilon(1e-9));
    CHECK(d['e'] > d['z']);
}

TEST_CASE("generation is deterministic per seed") {
    TrafficSpec s;
    s.packet_count = 300;
    s.attacks = {{AnomalyKind::UniformRandomBytes, 5, 128}};
    auto a = build_corpus(s), b = build_corpus(s);
    CHECK(a.packets == b.packets);
    CHECK(a.truth == b.truth);
    s.seed = 2;
    auto c = build_corpus(s);
    CHECK(c.packets != a.packets);
}

TEST_CASE("normal traffic follows the spec") {
    auto s = letters_spec();
    auto packets = gen_normal(s);
    REQUIRE(packets.size() == 10000);
    auto f = pooled_frequencies(packets);
    const double total_weight = 13 * 3.0 + 13 * 1.0;
    double worst = 0;
    for (std::size_t b = 0; b < 256; ++b) {
        double expect = (b >= 'A' && b <= 'Z') ? s.ports[0].bytes[b] / total_weight : 0.0;
        worst = std::max(worst, std::fabs(f[b] - expect));
    }
    CHECK(worst < 0.01);

    for (std::size_t i = 0; i < packets.size(); ++i) {
        const auto& p = packets[i];
        CHECK_UNARY(p.payload.size() >= 20);
        CHECK_UNARY(p.payload.size() <= 80);
        CHECK(p.dst_port == 80);
        CHECK(p.dst_ip == s.dst_hosts[0]);
        CHECK(p.timestamp.total_micros() == s.start.total_micros() + i * s.interval_us);
    }
}

TEST_CASE("pcap round trip") {
    TrafficSpec s;
    s.packet_count = 400;
    s.ports.push_back(PortTraffic{25, english_byte_distribution(), 10, 1460});
    s.attacks = {{AnomalyKind::SingleByteFlood, 3, 128}, {AnomalyKind::ShiftedAlphabet, 4, 100}};
    auto corpus = build_corpus(s);
    auto dir = std::filesystem::temp_directory_path() / "poseidon_synth_test";
    std::filesystem::create_directories(dir);
    write_corpus(corpus, dir / "c.pcap", dir / "c.csv");
    CHECK(read_pcap(dir / "c.pcap") == corpus.packets);
    CHECK(load_truth_csv(dir / "c.csv") == corpus.truth);
    std::filesystem::remove_all(dir);

    CHECK(std::is_sorted(corpus.packets.begin(), corpus.packets.end(),
                         [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }));
}

TEST_CASE("attacks") {
    TrafficSpec s;
    s.packet_count = 100;

    SUBCASE("single-byte flood is a point mass") {
        auto c = gen_attacks(s, {AnomalyKind::SingleByteFlood, 20, 0}, 9);
        REQUIRE(c.packets.size() == 20);
        for (const auto& p : c.packets) {
            auto f = byte_frequency(p.payload);
            CHECK(*std::max_element(f.begin(), f.end()) == 1.0);
            CHECK(s.ports[0].bytes[p.payload[0]] == 0.0);
        }
    }
    SUBCASE("uniform bytes at length 1000") {
        s.ports[0].min_len = s.ports[0].max_len = 1000;
        auto c = gen_attacks(s, {AnomalyKind::UniformRandomBytes, 100, 0}, 10);
        auto f = pooled_frequencies(c.packets);
        for (double x : f)
            CHECK(std::fabs(x - 1.0 / 256) < 0.0015);
    }
    SUBCASE("shifted alphabet moves mass by the shift") {
        auto d = anomaly_distribution(s.ports[0].bytes, {AnomalyKind::ShiftedAlphabet, 1, 128});
        CHECK(d['a' + 128] == doctest::Approx(s.ports[0].bytes['a'] / 1.0));
        CHECK(d['a'] == 0.0);
        CHECK(l1_gap(d, s.ports[0].bytes) == doctest::Approx(2.0));
    }
    SUBCASE("labels cover exactly count instances") {
        s.attacks = {{AnomalyKind::UniformRandomBytes, 7, 0}, {AnomalyKind::SingleByteFlood, 2, 0}};
        auto c = build_corpus(s);
        CHECK(c.truth.size() == 9);
        CHECK(c.packets.size() == 109);
        auto labels = label_packets(c.packets, c.truth);
        std::size_t attack_packets = 0;
        for (std::size_t p = 0; p < c.packets.size(); ++p)
            if (labels.is_attack(p)) {
                ++attack_packets;
                CHECK(labels.packet_instances[p].size() == 1);
            }
        CHECK(attack_packets == 9);
        std::map<std::string, int> names;
        for (const auto& r : c.truth)
            ++names[r.attack_name];
        CHECK(names.size() == 9);
    }

    // Separation margin between normal and random traffic is large.
    CHECK(l1_gap(english_byte_distribution(),
                 anomaly_distribution(english_byte_distribution(), {AnomalyKind::UniformRandomBytes, 1, 0})) >
          1.5);
}

TEST_CASE("spec parsing and validation") {
    auto s = parse_traffic_spec(R"({
        "seed": 9, "packets": 50, "interval_us": 200, "start_time": 100.5,
        "src_hosts": ["10.0.0.1", "10.0.0.2"], "dst_hosts": ["172.16.0.5"],
        "ports": [
            {"port": 80, "bytes": "english", "length": {"min": 5, "max": 9}},
            {"port": 21, "bytes": {"ranges": [[65, 90, 1.0]]}},
            {"port": 23, "bytes": "uniform"}
        ],
        "attacks": [{"kind": "shifted-alphabet", "count": 2, "shift": 7}]
    })");
    CHECK(s.seed == 9);
    CHECK(s.packet_count == 50);
    CHECK(s.interval_us == 200);
    CHECK(s.start == Timestamp{100, 500000});
    CHECK(s.src_hosts.size() == 2);
    REQUIRE(s.ports.size() == 3);
    CHECK(s.ports[0].min_len == 5);
    CHECK(s.ports[1].bytes['A'] > 0.0);
    CHECK(s.ports[1].bytes['a'] == 0.0);
    CHECK(s.ports[2].bytes[0] == s.ports[2].bytes[255]);
    REQUIRE(s.attacks.size() == 1);
    CHECK(s.attacks[0].shift == 7);

    CHECK_THROWS_AS(parse_traffic_spec(R"({"packets": 0})"), Error);
    CHECK_THROWS_AS(parse_traffic_spec(R"({"bogus": 1})"), Error);
    CHECK_THROWS_AS(parse_traffic_spec(R"({"ports": [{"port": 80, "length": {"min": 9, "max": 5}}]})"), Error);
    CHECK_THROWS_AS(parse_traffic_spec(R"({"attacks": [{"kind": "worm", "count": 1}]})"), Error);
    CHECK_THROWS_AS(parse_traffic_spec("{"), Error);

    TrafficSpec bad;
    bad.ports[0].bytes.fill(0.0);
    CHECK_THROWS_AS(bad.validate(), Error);
}
