#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace poseidon {

/// IPv4 address held in host byte order.
struct Ipv4Address {
    std::uint32_t value = 0;

    static Ipv4Address parse(std::string_view dotted);
    std::string to_string() const;

    auto operator<=>(const Ipv4Address&) const = default;
};

struct Timestamp {
    std::uint32_t seconds = 0;
    std::uint32_t micros = 0;

    std::uint64_t total_micros() const {
        return std::uint64_t{seconds} * 1'000'000u + micros;
    }
    static Timestamp from_micros(std::uint64_t us) {
        return {static_cast<std::uint32_t>(us / 1'000'000u),
                static_cast<std::uint32_t>(us % 1'000'000u)};
    }
    /// "SECONDS.UUUUUU", always six fractional digits.
    std::string to_string() const;
    static Timestamp parse(std::string_view text);

    auto operator<=>(const Timestamp&) const = default;
};

namespace tcp_flag {
inline constexpr std::uint8_t fin = 0x01;
inline constexpr std::uint8_t syn = 0x02;
inline constexpr std::uint8_t rst = 0x04;
inline constexpr std::uint8_t psh = 0x08;
inline constexpr std::uint8_t ack = 0x10;
}  // namespace tcp_flag

using Payload = std::vector<std::uint8_t>;

inline constexpr std::size_t kMaxTcpPayload = 65495;

struct PacketRecord {
    Timestamp timestamp;
    Ipv4Address src_ip;
    Ipv4Address dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t tcp_flags = 0;
    Payload payload;

    bool operator==(const PacketRecord&) const = default;
};

struct Cidr {
    Ipv4Address network;
    int prefix_len = 0;

    /// "a.b.c.d/n"; host bits are masked off.
    static Cidr parse(std::string_view text);
    std::string to_string() const;
    bool contains(Ipv4Address addr) const;

    bool operator==(const Cidr&) const = default;
};

struct PortRange {
    std::uint16_t lo = 1;
    std::uint16_t hi = 1024;

    /// Throws std::invalid_argument unless 1 <= lo <= hi <= 65535.
    static PortRange make(int lo, int hi);
    bool contains(std::uint16_t port) const { return port >= lo && port <= hi; }

    bool operator==(const PortRange&) const = default;
};

struct TrafficFilter {
    Cidr home_network = Cidr::parse("172.16.0.0/16");
    PortRange port_range;
    bool require_payload = true;

    bool operator==(const TrafficFilter&) const = default;
};

/// Inbound = destination inside the home network; there is no interface
/// direction in offline captures.
bool apply_filter(const PacketRecord& packet, const TrafficFilter& filter);

std::vector<PacketRecord> filter_packets(std::span<const PacketRecord> packets,
                                         const TrafficFilter& filter);

/// Classic libpcap reader, Ethernet link type only. Frames that are not
/// IPv4/TCP, or that are non-first IP fragments, are skipped.
class PcapReader {
public:
    explicit PcapReader(const std::filesystem::path& path);
    /// Parses from memory; `name` is used in error messages.
    PcapReader(std::vector<std::uint8_t> bytes, std::string name);

    /// Next IPv4/TCP record, or nullopt at a clean end of file.
    std::optional<PacketRecord> next();

    std::uint64_t frames_read() const { return frames_; }
    bool swapped() const { return swapped_; }

private:
    void parse_global_header();
    std::uint32_t u32_at(std::size_t off) const;
    std::uint16_t u16_at(std::size_t off) const;
    std::optional<PacketRecord> decode_frame(std::span<const std::uint8_t> frame,
                                             Timestamp ts) const;

    std::vector<std::uint8_t> bytes_;
    std::string name_;
    std::size_t pos_ = 0;
    bool swapped_ = false;
    bool nanosecond_ = false;
    std::uint64_t frames_ = 0;
};

std::vector<PacketRecord> read_pcap(const std::filesystem::path& path);

/// Writes records as Ethernet/IPv4/TCP frames (20-byte IP and TCP headers,
/// little-endian file, microsecond timestamps). Used by the synthetic corpus
/// generator and by round-trip tests.
std::vector<std::uint8_t> encode_pcap(std::span<const PacketRecord> packets);
void write_pcap(const std::filesystem::path& path, std::span<const PacketRecord> packets);

}  // namespace poseidon
