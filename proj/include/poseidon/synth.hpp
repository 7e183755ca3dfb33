#pragma once

#include "poseidon/eval.hpp"
#include "poseidon/ingest.hpp"
#include "poseidon/payl.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace poseidon {

using ByteDistribution = std::array<double, kByteValues>;

/// Letter-biased distribution resembling English text protocols: lowercase
/// letters at their usual frequencies, spaces, some capitals, digits and
/// line punctuation. Sums to 1.
ByteDistribution english_byte_distribution();

struct PortTraffic {
    std::uint16_t port = 80;
    ByteDistribution bytes = english_byte_distribution();
    std::uint32_t min_len = 64;  ///< payload length ~ uniform [min_len, max_len]
    std::uint32_t max_len = 512;
};

enum class AnomalyKind { UniformRandomBytes, ShiftedAlphabet, SingleByteFlood };

const char* to_string(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(std::string_view text);

struct AttackSpec {
    AnomalyKind kind = AnomalyKind::UniformRandomBytes;
    std::size_t count = 0;
    std::uint8_t shift = 128;  ///< ShiftedAlphabet only
};

struct TrafficSpec {
    std::vector<PortTraffic> ports{PortTraffic{}};
    std::vector<Ipv4Address> src_hosts{Ipv4Address::parse("192.168.1.30")};
    std::vector<Ipv4Address> dst_hosts{Ipv4Address::parse("172.16.112.50")};
    std::size_t packet_count = 1000;
    std::uint64_t seed = 1;
    Timestamp start{900000000, 0};
    std::uint32_t interval_us = 1000;  ///< normal packets are evenly spaced
    std::vector<AttackSpec> attacks;

    /// Throws Error(Config). Byte distributions must be non-negative with a
    /// positive sum; they are normalised by gen_normal.
    void validate() const;
};

/// Key set documented in the README. Throws Error(Config).
TrafficSpec parse_traffic_spec(std::string_view json_text);
TrafficSpec load_traffic_spec(const std::filesystem::path& path);

/// Normal traffic, one packet every interval_us; port, hosts, length and
/// bytes drawn i.i.d. from the spec.
std::vector<PacketRecord> gen_normal(const TrafficSpec& spec);

struct Corpus {
    std::vector<PacketRecord> packets;
    std::vector<TruthRow> truth;
};

/// `count` single-packet attack instances in distinct slots. Timestamps sit
/// `offset_us` (default half an interval) after a normal slot, so they
/// never collide with normal packets.
Corpus gen_attacks(const TrafficSpec& spec, const AttackSpec& attack, std::uint64_t seed);
Corpus gen_attacks(const TrafficSpec& spec, const AttackSpec& attack, std::uint64_t seed,
                   std::uint32_t offset_us);

/// Normal traffic plus every attack in spec.attacks, merged by timestamp.
Corpus build_corpus(const TrafficSpec& spec);

void write_corpus(const Corpus& corpus, const std::filesystem::path& pcap,
                  const std::filesystem::path& truth_csv);

/// Distribution an anomaly draws its bytes from (the flood's is a point mass).
ByteDistribution anomaly_distribution(const ByteDistribution& normal, const AttackSpec& attack);

/// L1 distance between normalised distributions.
double l1_gap(const ByteDistribution& a, const ByteDistribution& b);

}  // namespace poseidon
