#include <doctest.h>

#include "poseidon/detector.hpp"
#include "poseidon/error.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

using namespace poseidon;

namespace {

const Ipv4Address kServer = Ipv4Address::parse("172.16.112.50");
const Ipv4Address kOther = Ipv4Address::parse("172.16.112.51");

PacketRecord packet(Ipv4Address dst, std::uint16_t port, Payload payload, std::uint32_t sec = 1) {
    PacketRecord p;
    p.timestamp = {sec, 0};
    p.src_ip = Ipv4Address::parse("192.168.1.30");
    p.dst_ip = dst;
    p.src_port = 40000;
    p.dst_port = port;
    p.tcp_flags = tcp_flag::psh | tcp_flag::ack;
    p.payload = std::move(payload);
    return p;
}

Payload text_payload(std::mt19937_64& rng, std::size_t len) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz     etaoin";
    Payload p(len);
    for (auto& b : p)
        b = static_cast<std::uint8_t>(alphabet[rng() % alphabet.size()]);
    return p;
}

std::vector<PacketRecord> text_traffic(std::uint64_t seed, std::size_t n, std::uint16_t port = 80,
                                       std::size_t min_len = 20, std::size_t max_len = 60) {
    std::mt19937_64 rng(seed);
    std::vector<PacketRecord> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(packet(kServer, port, text_payload(rng, min_len + rng() % (max_len - min_len + 1)),
                             static_cast<std::uint32_t>(i)));
    return out;
}

DetectorConfig small_config(Mode mode = Mode::Poseidon) {
    DetectorConfig c;
    c.mode = mode;
    c.som.rows = 4;
    c.som.cols = 4;
    c.som.max_payload_len = 64;
    return c;
}

std::set<std::uint64_t> over_threshold(const std::vector<Alert>& alerts) {
    std::set<std::uint64_t> s;
    for (const auto& a : alerts)
        if (a.reason == AlertReason::OverThreshold)
            s.insert(a.ordinal);
    return s;
}

}  // namespace

TEST_CASE("mode and policy names") {
    CHECK(std::string(to_string(Mode::Poseidon)) == "poseidon");
    CHECK(parse_mode("payl") == Mode::PaylBaseline);
    CHECK(parse_unseen_policy("ignore") == UnseenPolicy::Ignore);
    CHECK(std::string(to_string(AlertReason::NoModel)) == "no-model");
    CHECK_THROWS_AS(parse_mode("som"), Error);
}

TEST_CASE("config validation") {
    auto c = small_config();
    c.filter.require_payload = false;
    CHECK_THROWS_AS(c.validate(), Error);
    c = small_config();
    c.smoothing = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = small_config();
    c.cluster_threshold = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = small_config();
    c.som.rows = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK_NOTHROW(small_config().validate());
}

TEST_CASE("POSEIDON model count is bounded by the neuron count") {
    DetectorConfig cfg;  // default 12x8 map
    auto packets = text_traffic(1, 1000, 80, 10, 400);
    auto store = train_store(packets, cfg);
    CHECK(store.soms().size() == 1);
    CHECK(store.soms().at(80).trained());
    CHECK(store.class_count(kServer, 80) <= 96);
    CHECK(store.profile_count() <= 96);
    std::uint64_t total = 0;
    for (const auto& [key, entry] : store.models()) {
        CHECK(key.class_index < 96);
        total += entry.fv.count;
    }
    CHECK(total == packets.size());
}

TEST_CASE("baseline keeps one model per distinct length") {
    std::mt19937_64 rng(2);
    std::vector<PacketRecord> packets;
    for (std::size_t len = 1; len <= 500; ++len)
        for (int rep = 0; rep < 2; ++rep)
            packets.push_back(packet(kServer, 80, text_payload(rng, len)));
    std::shuffle(packets.begin(), packets.end(), rng);
    auto store = train_store(packets, small_config(Mode::PaylBaseline));
    CHECK(store.class_count(kServer, 80) == 500);
    CHECK(store.profile_count() == 500);
    CHECK(store.soms().empty());
    for (const auto& [key, entry] : store.models()) {
        CHECK(entry.class_last == key.class_index);
        CHECK(entry.fv.count == 2);
    }

    auto clustered_cfg = small_config(Mode::PaylBaseline);
    clustered_cfg.cluster_threshold = std::numeric_limits<double>::infinity();
    auto clustered = train_store(packets, clustered_cfg);
    REQUIRE(clustered.profile_count() == 1);
    const auto& only = *clustered.models().begin();
    CHECK(only.first.class_index == 1);
    CHECK(only.second.class_last == 500);
    // Every length resolves to the merged model.
    CHECK(clustered.find(kServer, 80, 1) != nullptr);
    CHECK(clustered.find(kServer, 80, 250) != nullptr);
    CHECK(clustered.find(kServer, 80, 500) != nullptr);
    CHECK(clustered.find(kServer, 80, 501) == nullptr);
}

TEST_CASE("training preconditions") {
    CHECK_THROWS_AS(train_store(std::vector<PacketRecord>{}, small_config()), Error);
    std::vector<PacketRecord> bad{packet(Ipv4Address::parse("10.0.0.1"), 80, Payload{1, 2, 3})};
    CHECK_THROWS_AS(train_store(bad, small_config()), std::invalid_argument);
}

TEST_CASE("training is deterministic") {
    auto packets = text_traffic(3, 300);
    auto a = train_store(packets, small_config());
    auto b = train_store(packets, small_config());
    CHECK(a == b);
    CHECK(serialize_store(a) == serialize_store(b));
    auto cfg = small_config();
    cfg.som.seed = 77;
    CHECK(serialize_store(train_store(packets, cfg)) != serialize_store(a));
}

TEST_CASE("detect") {
    auto packets = text_traffic(4, 200);
    for (auto mode : {Mode::Poseidon, Mode::PaylBaseline}) {
        CAPTURE(to_string(mode));
        auto store = train_store(packets, small_config(mode));

        SUBCASE("sole training payload scores zero") {
            std::vector<PacketRecord> one{packet(kServer, 80, Payload{'a', 'b', 'c', 'a'})};
            auto s = train_store(one, small_config(mode));
            CHECK_FALSE(detect(one[0], 0, s, 1.0));
            auto sc = score_packet(one[0], s);
            CHECK(sc.has_model);
            CHECK(sc.distance == 0.0);
        }
        SUBCASE("threshold zero alerts on everything") {
            auto alerts = detect_all(packets, store, 0.0);
            CHECK(alerts.size() == packets.size());
            for (std::size_t i = 0; i < alerts.size(); ++i) {
                CHECK(alerts[i].ordinal == i);
                CHECK(alerts[i].reason == AlertReason::OverThreshold);
                CHECK_UNARY(alerts[i].distance >= alerts[i].threshold);
            }
        }
        SUBCASE("unseen destination is a no-model alert") {
            auto p = packet(kOther, 80, Payload{'x', 'y'});
            auto a = detect(p, 9, store, 1e300);
            REQUIRE(a);
            CHECK(a->reason == AlertReason::NoModel);
            CHECK(a->ordinal == 9);
            auto q = packet(kServer, 443, Payload{'x', 'y'});
            auto b = detect(q, 0, store, 1e300);
            REQUIRE(b);
            CHECK(b->reason == AlertReason::NoModel);

            auto cfg = small_config(mode);
            cfg.unseen = UnseenPolicy::Ignore;
            auto quiet = train_store(packets, cfg);
            CHECK_FALSE(detect(p, 9, quiet, 1e300));
            CHECK(detection_score(score_packet(p, quiet), UnseenPolicy::Ignore) ==
                  -std::numeric_limits<double>::infinity());
            CHECK(detection_score(score_packet(p, store), UnseenPolicy::Alert) ==
                  std::numeric_limits<double>::infinity());
        }
        SUBCASE("packet failing the filter is rejected") {
            auto p = packet(Ipv4Address::parse("8.8.8.8"), 80, Payload{'x'});
            CHECK_THROWS_AS(detect(p, 0, store, 1.0), std::invalid_argument);
            auto empty = packet(kServer, 80, Payload{});
            CHECK_THROWS_AS(score_packet(empty, store), std::invalid_argument);
        }
    }
}

TEST_CASE("alerts are nested in the threshold and independent of order") {
    auto train = text_traffic(5, 300);
    auto test = text_traffic(6, 200);
    std::mt19937_64 rng(6);
    for (int i = 0; i < 20; ++i) {
        Payload p(40);
        for (auto& b : p)
            b = static_cast<std::uint8_t>(rng());
        test.push_back(packet(kServer, 80, p));
    }
    test.push_back(packet(kOther, 80, Payload{'q'}));
    auto store = train_store(train, small_config());

    std::vector<double> thresholds;
    for (int i = 0; i <= 20; ++i)
        thresholds.push_back(i * 25.0);
    std::set<std::uint64_t> prev;
    bool first = true;
    for (double t : thresholds) {
        auto alerts = detect_all(test, store, t);
        auto cur = over_threshold(alerts);
        if (!first)
            CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
        first = false;
        prev = cur;
        // The no-model alert is present at every threshold.
        CHECK(std::count_if(alerts.begin(), alerts.end(),
                            [](const Alert& a) { return a.reason == AlertReason::NoModel; }) == 1);
    }

    // Permuting the batch permutes the scores and nothing else.
    const auto snapshot = serialize_store(store);
    auto base = score_all(test, store);
    std::vector<std::size_t> order(test.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<PacketRecord> permuted;
    for (auto i : order)
        permuted.push_back(test[i]);
    auto perm = score_all(permuted, store, 4);
    for (std::size_t i = 0; i < order.size(); ++i) {
        CHECK(perm[i].distance == base[order[i]].distance);
        CHECK(perm[i].key == base[order[i]].key);
    }
    CHECK(serialize_store(store) == snapshot);

    auto single = detect_all(test, store, 100.0, 1);
    auto multi = detect_all(test, store, 100.0, 3);
    CHECK(single == multi);
}

TEST_CASE("calibrate_threshold") {
    std::vector<double> d;
    for (int i = 1; i <= 100; ++i)
        d.push_back(i);
    CHECK(calibrate_threshold(d, 0.01) == 100.0);
    CHECK(calibrate_threshold(d, 0.05) == 96.0);
    CHECK(calibrate_threshold(d, 0.5) == 51.0);

    // Sorting oracle: smallest observed value v with count(>= v) <= target * n.
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 50);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> s(1 + rng() % 300);
        for (auto& x : s)
            x = std::floor(u(rng) * 4) / 4;  // force ties
        double target = 0.01 + 0.98 * (static_cast<double>(rng() % 1000) / 1000.0);
        auto sorted = s;
        std::sort(sorted.begin(), sorted.end());
        double expected = std::nextafter(sorted.back(), std::numeric_limits<double>::infinity());
        for (double v : sorted) {
            auto ge = static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), v));
            if (ge <= target * static_cast<double>(s.size())) {
                expected = v;
                break;
            }
        }
        double t = calibrate_threshold(s, target);
        CHECK(t == expected);
        auto alerts = std::count_if(s.begin(), s.end(), [&](double x) { return x >= t; });
        CHECK_UNARY(static_cast<double>(alerts) <= target * static_cast<double>(s.size()));
    }

    // All equal: any threshold at the common value alerts on everything, so
    // the result sits just above it.
    std::vector<double> same(50, 3.5);
    double t = calibrate_threshold(same, 1.0 - 1e-9);
    CHECK(t == std::nextafter(3.5, std::numeric_limits<double>::infinity()));

    CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{}, 0.01), Error);
    CHECK_THROWS_AS(calibrate_threshold(d, 0.0), Error);
    CHECK_THROWS_AS(calibrate_threshold(d, 1.0), Error);

    auto train = text_traffic(8, 300);
    auto calib = text_traffic(9, 400);
    auto store = train_store(train, small_config());
    double th = calibrate_threshold(store, calib, 0.01);
    auto alerts = detect_all(calib, store, th);
    CHECK_UNARY(static_cast<double>(alerts.size()) <= 0.01 * static_cast<double>(calib.size()));
}

TEST_CASE("store round trip and load errors") {
    auto packets = text_traffic(10, 250);
    auto cfg = small_config();
    cfg.som_overrides[443] = cfg.som;
    cfg.som_overrides[443].rows = 3;
    cfg.port_groups[25] = 80;
    auto more = text_traffic(11, 100, 443);
    packets.insert(packets.end(), more.begin(), more.end());
    auto alt = text_traffic(12, 50, 25);
    packets.insert(packets.end(), alt.begin(), alt.end());

    auto store = train_store(packets, cfg);
    CHECK(store.soms().size() == 2);
    CHECK(store.soms().at(443).config().rows == 3);

    auto dir = std::filesystem::temp_directory_path() / "poseidon_detector_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "store.txt";
    save_store(store, path);
    auto loaded = load_store(path);
    CHECK(loaded == store);
    CHECK(serialize_store(loaded) == serialize_store(store));

    auto base_cfg = small_config(Mode::PaylBaseline);
    base_cfg.cluster_threshold = 0.3;
    auto base = train_store(packets, base_cfg);
    CHECK(parse_store(serialize_store(base)) == base);

    auto kind_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return std::make_pair(e.kind(), std::string(e.what()));
        }
        return std::make_pair(ErrorKind::Io, std::string("no error"));
    };

    {
        std::ofstream(dir / "empty.txt").close();
        auto [k, msg] = kind_of([&] { load_store(dir / "empty.txt"); });
        CHECK(k == ErrorKind::StoreFormat);
    }
    auto text = serialize_store(store);
    {
        auto bumped = text;
        bumped.replace(bumped.find(" 1\n"), 3, " 2\n");
        auto [k, msg] = kind_of([&] { parse_store(bumped); });
        CHECK(k == ErrorKind::StoreVersion);
    }
    {
        auto cut = text.substr(0, text.find("[models]") + 40);
        auto [k, msg] = kind_of([&] { parse_store(cut); });
        CHECK(k == ErrorKind::StoreFormat);
        CHECK(msg.find("[models]") != std::string::npos);
    }
    {
        auto cut = text.substr(0, text.find("[soms]") + 30);
        auto [k, msg] = kind_of([&] { parse_store(cut); });
        CHECK(k == ErrorKind::StoreFormat);
        CHECK(msg.find("[soms]") != std::string::npos);
    }
    {
        auto [k, msg] = kind_of([&] { load_store(dir / "missing.txt"); });
        CHECK(k == ErrorKind::Io);
    }
    std::filesystem::remove_all(dir);
}
