#include "poseidon/synth.hpp"

#include "poseidon/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>

namespace poseidon {

namespace {

/// mt19937_64 is fully specified by the standard; the samplers below are
/// spelled out so output does not depend on the library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    std::uint64_t below(std::uint64_t n) {
        return std::min(n - 1, static_cast<std::uint64_t>(uniform() * static_cast<double>(n)));
    }

    std::uint32_t between(std::uint32_t lo, std::uint32_t hi) {
        return lo + static_cast<std::uint32_t>(below(std::uint64_t{hi} - lo + 1));
    }

private:
    std::mt19937_64 gen_;
};

class ByteSampler {
public:
    explicit ByteSampler(const ByteDistribution& dist) {
        double total = std::accumulate(dist.begin(), dist.end(), 0.0);
        double run = 0.0;
        for (std::size_t b = 0; b < kByteValues; ++b) {
            run += dist[b] / total;
            cdf_[b] = run;
        }
        cdf_.back() = 1.0;
    }

    std::uint8_t operator()(Rng& rng) const {
        double u = rng.uniform();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        // Skip zero-probability entries sharing the same cdf value.
        return static_cast<std::uint8_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), 255));
    }

private:
    std::array<double, kByteValues> cdf_{};
};

ByteDistribution normalized(const ByteDistribution& d) {
    ByteDistribution out = d;
    double total = std::accumulate(d.begin(), d.end(), 0.0);
    for (auto& v : out)
        v /= total;
    return out;
}

constexpr std::uint64_t kAttackSeedSalt = 0x9E3779B97F4A7C15ull;

}  // namespace

ByteDistribution english_byte_distribution() {
    // Relative letter frequencies (percent) for a..z.
    constexpr double letters[26] = {8.17, 1.49, 2.78, 4.25, 12.70, 2.23, 2.02, 6.09, 6.97,
                                    0.15, 0.77, 4.03, 2.41, 6.75,  7.51, 1.93, 0.10, 5.99,
                                    6.33, 9.06, 2.76, 0.98, 2.36,  0.15, 1.97, 0.07};
    const double letter_total = std::accumulate(std::begin(letters), std::end(letters), 0.0);
    ByteDistribution d{};
    for (int i = 0; i < 26; ++i) {
        d['a' + i] += 0.74 * letters[i] / letter_total;
        d['A' + i] += 0.04 * letters[i] / letter_total;
    }
    d[' '] = 0.15;
    for (int i = 0; i < 10; ++i)
        d['0' + i] = 0.02 / 10;
    const char punct[] = {'.', ',', ':', '/', '-', '\r', '\n'};
    for (char c : punct)
        d[static_cast<unsigned char>(c)] = 0.05 / std::size(punct);
    return normalized(d);
}

const char* to_string(AnomalyKind kind) {
    switch (kind) {
    case AnomalyKind::UniformRandomBytes: return "uniform-random-bytes";
    case AnomalyKind::ShiftedAlphabet: return "shifted-alphabet";
    case AnomalyKind::SingleByteFlood: return "single-byte-flood";
    }
    return "unknown";
}

AnomalyKind parse_anomaly_kind(std::string_view text) {
    for (auto k : {AnomalyKind::UniformRandomBytes, AnomalyKind::ShiftedAlphabet,
                   AnomalyKind::SingleByteFlood})
        if (text == to_string(k))
            return k;
    throw Error(ErrorKind::Config, "unknown anomaly kind '" + std::string(text) + "'");
}

void TrafficSpec::validate() const {
    if (packet_count == 0)
        throw Error(ErrorKind::Config, "traffic spec must generate at least one packet");
    if (ports.empty())
        throw Error(ErrorKind::Config, "traffic spec needs at least one port");
    if (src_hosts.empty() || dst_hosts.empty())
        throw Error(ErrorKind::Config, "traffic spec needs source and destination hosts");
    if (interval_us < 2)
        throw Error(ErrorKind::Config, "interval_us must be >= 2");
    for (const auto& p : ports) {
        if (p.port == 0)
            throw Error(ErrorKind::Config, "port 0 is not a valid service port");
        if (p.min_len < 1 || p.min_len > p.max_len || p.max_len > kMaxTcpPayload)
            throw Error(ErrorKind::Config, "port " + std::to_string(p.port) +
                                               ": need 1 <= min_len <= max_len <= " +
                                               std::to_string(kMaxTcpPayload));
        double total = 0.0;
        for (double w : p.bytes) {
            if (!(w >= 0.0) || !std::isfinite(w))
                throw Error(ErrorKind::Config, "port " + std::to_string(p.port) +
                                                   ": byte weights must be finite and >= 0");
            total += w;
        }
        if (!(total > 0.0))
            throw Error(ErrorKind::Config,
                        "port " + std::to_string(p.port) + ": byte weights sum to zero");
    }
    for (const auto& a : attacks)
        if (a.count == 0)
            throw Error(ErrorKind::Config, "attack entries need count > 0");
}

namespace {

ByteDistribution parse_bytes(const nlohmann::json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "english")
            return english_byte_distribution();
        if (j.get<std::string>() == "uniform") {
            ByteDistribution d;
            d.fill(1.0 / kByteValues);
            return d;
        }
        throw Error(ErrorKind::Config, "unknown byte preset '" + j.get<std::string>() + "'");
    }
    ByteDistribution d{};
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        if (!w.is_array() || w.size() != kByteValues)
            throw Error(ErrorKind::Config, "'weights' must list 256 numbers");
        for (std::size_t b = 0; b < kByteValues; ++b)
            d[b] = w[b].get<double>();
        return d;
    }
    if (j.contains("ranges")) {
        for (const auto& r : j.at("ranges")) {
            if (!r.is_array() || r.size() != 3)
                throw Error(ErrorKind::Config, "each range is [first_byte, last_byte, weight]");
            int lo = r[0].get<int>(), hi = r[1].get<int>();
            double w = r[2].get<double>();
            if (lo < 0 || hi > 255 || lo > hi)
                throw Error(ErrorKind::Config, "byte range out of 0..255");
            for (int b = lo; b <= hi; ++b)
                d[static_cast<std::size_t>(b)] += w / (hi - lo + 1);
        }
        return d;
    }
    throw Error(ErrorKind::Config, "'bytes' must be a preset name, {weights} or {ranges}");
}

}  // namespace

TrafficSpec parse_traffic_spec(std::string_view json_text) {
    TrafficSpec spec;
    try {
        auto j = nlohmann::json::parse(json_text);
        for (const auto& [k, v] : j.items())
            if (k != "seed" && k != "packets" && k != "interval_us" && k != "start_time" &&
                k != "src_hosts" && k != "dst_hosts" && k != "ports" && k != "attacks")
                throw Error(ErrorKind::Config, "unknown traffic spec key '" + k + "'");
        spec.seed = j.value("seed", spec.seed);
        spec.packet_count = j.value("packets", spec.packet_count);
        spec.interval_us = j.value("interval_us", spec.interval_us);
        if (j.contains("start_time")) {
            const auto& t = j.at("start_time");
            if (t.is_number()) {
                double sec = t.get<double>();
                if (!(sec >= 0.0) || sec > 4294967295.0)
                    throw Error(ErrorKind::Config, "start_time out of range");
                spec.start = Timestamp::from_micros(static_cast<std::uint64_t>(std::llround(sec * 1e6)));
            } else {
                spec.start = Timestamp::parse(t.get<std::string>());
            }
        }
        if (j.contains("src_hosts")) {
            spec.src_hosts.clear();
            for (const auto& h : j.at("src_hosts"))
                spec.src_hosts.push_back(Ipv4Address::parse(h.get<std::string>()));
        }
        if (j.contains("dst_hosts")) {
            spec.dst_hosts.clear();
            for (const auto& h : j.at("dst_hosts"))
                spec.dst_hosts.push_back(Ipv4Address::parse(h.get<std::string>()));
        }
        if (j.contains("ports")) {
            spec.ports.clear();
            for (const auto& p : j.at("ports")) {
                PortTraffic t;
                t.port = p.at("port").get<std::uint16_t>();
                if (p.contains("bytes"))
                    t.bytes = parse_bytes(p.at("bytes"));
                if (p.contains("length")) {
                    t.min_len = p.at("length").value("min", t.min_len);
                    t.max_len = p.at("length").value("max", t.max_len);
                }
                spec.ports.push_back(t);
            }
        }
        if (j.contains("attacks")) {
            for (const auto& a : j.at("attacks")) {
                AttackSpec at;
                at.kind = parse_anomaly_kind(a.at("kind").get<std::string>());
                at.count = a.value("count", std::size_t{0});
                at.shift = a.value("shift", at.shift);
                spec.attacks.push_back(at);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, std::string("traffic spec: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw Error(ErrorKind::Config, std::string("traffic spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

TrafficSpec load_traffic_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open traffic spec '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_traffic_spec(text);
}

std::vector<PacketRecord> gen_normal(const TrafficSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::vector<ByteSampler> samplers;
    for (const auto& p : spec.ports)
        samplers.emplace_back(p.bytes);

    std::vector<PacketRecord> out;
    out.reserve(spec.packet_count);
    const std::uint64_t t0 = spec.start.total_micros();
    for (std::size_t i = 0; i < spec.packet_count; ++i) {
        std::size_t pi = rng.below(spec.ports.size());
        const auto& port = spec.ports[pi];
        PacketRecord p;
        p.timestamp = Timestamp::from_micros(t0 + i * std::uint64_t{spec.interval_us});
        p.src_ip = spec.src_hosts[rng.below(spec.src_hosts.size())];
        p.dst_ip = spec.dst_hosts[rng.below(spec.dst_hosts.size())];
        p.src_port = static_cast<std::uint16_t>(rng.between(1025, 65535));
        p.dst_port = port.port;
        p.tcp_flags = tcp_flag::psh | tcp_flag::ack;
        p.payload.resize(rng.between(port.min_len, port.max_len));
        for (auto& b : p.payload)
            b = samplers[pi](rng);
        out.push_back(std::move(p));
    }
    return out;
}

ByteDistribution anomaly_distribution(const ByteDistribution& normal, const AttackSpec& attack) {
    ByteDistribution d{};
    switch (attack.kind) {
    case AnomalyKind::UniformRandomBytes:
        d.fill(1.0 / kByteValues);
        break;
    case AnomalyKind::ShiftedAlphabet: {
        auto n = normalized(normal);
        for (std::size_t b = 0; b < kByteValues; ++b)
            d[(b + attack.shift) % kByteValues] = n[b];
        break;
    }
    case AnomalyKind::SingleByteFlood: {
        // The least likely byte under normal traffic (lowest index on ties).
        auto it = std::min_element(normal.begin(), normal.end());
        d[static_cast<std::size_t>(it - normal.begin())] = 1.0;
        break;
    }
    }
    return d;
}

Corpus gen_attacks(const TrafficSpec& spec, const AttackSpec& attack, std::uint64_t seed) {
    return gen_attacks(spec, attack, seed, spec.interval_us / 2);
}

Corpus gen_attacks(const TrafficSpec& spec, const AttackSpec& attack, std::uint64_t seed,
                   std::uint32_t offset_us) {
    spec.validate();
    if (attack.count > spec.packet_count)
        throw Error(ErrorKind::Config, "attack count exceeds the number of traffic slots");
    if (offset_us == 0 || offset_us >= spec.interval_us)
        throw Error(ErrorKind::Config, "attack offset must fall strictly inside the interval");
    Rng rng(seed);
    std::set<std::uint64_t> used;
    Corpus c;
    const std::uint64_t t0 = spec.start.total_micros();
    for (std::size_t i = 0; i < attack.count; ++i) {
        std::size_t pi = rng.below(spec.ports.size());
        const auto& port = spec.ports[pi];
        PacketRecord p;
        std::uint64_t slot = rng.below(spec.packet_count);
        while (!used.insert(slot).second)
            slot = rng.below(spec.packet_count);
        p.timestamp = Timestamp::from_micros(t0 + slot * std::uint64_t{spec.interval_us} + offset_us);
        p.src_ip = spec.src_hosts[rng.below(spec.src_hosts.size())];
        p.dst_ip = spec.dst_hosts[rng.below(spec.dst_hosts.size())];
        p.src_port = static_cast<std::uint16_t>(rng.between(1025, 65535));
        p.dst_port = port.port;
        p.tcp_flags = tcp_flag::psh | tcp_flag::ack;
        p.payload.resize(rng.between(port.min_len, port.max_len));
        ByteSampler sampler(anomaly_distribution(port.bytes, attack));
        for (auto& b : p.payload)
            b = sampler(rng);
        c.truth.push_back({p.dst_ip, p.dst_port, p.timestamp, p.timestamp,
                           std::string(to_string(attack.kind)) + "-" + std::to_string(i)});
        c.packets.push_back(std::move(p));
    }
    return c;
}

Corpus build_corpus(const TrafficSpec& spec) {
    const std::size_t kinds = spec.attacks.size();
    if (kinds > 0 && spec.interval_us <= kinds)
        throw Error(ErrorKind::Config, "interval_us must exceed the number of attack entries");
    Corpus c;
    c.packets = gen_normal(spec);
    for (std::size_t k = 0; k < kinds; ++k) {
        // Each entry gets its own sub-slot offset, so instances never share a timestamp.
        auto offset = static_cast<std::uint32_t>(std::uint64_t{spec.interval_us} * (k + 1) / (kinds + 1));
        auto a = gen_attacks(spec, spec.attacks[k], spec.seed ^ (kAttackSeedSalt * (k + 1)), offset);
        std::move(a.packets.begin(), a.packets.end(), std::back_inserter(c.packets));
        std::move(a.truth.begin(), a.truth.end(), std::back_inserter(c.truth));
    }
    std::stable_sort(c.packets.begin(), c.packets.end(),
                     [](const PacketRecord& x, const PacketRecord& y) { return x.timestamp < y.timestamp; });
    return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& pcap,
                  const std::filesystem::path& truth_csv) {
    write_pcap(pcap, corpus.packets);
    std::ofstream out(truth_csv, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::Io, "cannot write truth file '" + truth_csv.string() + "'");
    out << format_truth_csv(corpus.truth);
}

double l1_gap(const ByteDistribution& a, const ByteDistribution& b) {
    auto na = normalized(a), nb = normalized(b);
    double sum = 0.0;
    for (std::size_t i = 0; i < kByteValues; ++i)
        sum += std::fabs(na[i] - nb[i]);
    return sum;
}

}  // namespace poseidon
