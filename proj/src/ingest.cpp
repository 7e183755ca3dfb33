#include "poseidon/ingest.hpp"

#include "poseidon/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace poseidon {

namespace {

constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
constexpr std::uint32_t kLinkTypeEthernet = 1;
constexpr std::size_t kGlobalHeaderLen = 24;
constexpr std::size_t kRecordHeaderLen = 16;
constexpr std::uint32_t kMaxRecordLen = 256 * 1024;

constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
constexpr std::uint16_t kEtherTypeVlan = 0x8100;
constexpr std::uint16_t kEtherTypeQinQ = 0x88A8;
constexpr std::size_t kEthernetHeaderLen = 14;
constexpr std::uint8_t kIpProtoTcp = 6;

std::uint32_t bswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

std::uint16_t be16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
           (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

int parse_int(std::string_view text, int lo, int hi, std::string_view what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || v < lo || v > hi)
        throw std::invalid_argument("bad " + std::string(what) + ": '" + std::string(text) + "'");
    return v;
}

}  // namespace

Ipv4Address Ipv4Address::parse(std::string_view dotted) {
    std::uint32_t value = 0;
    int parts = 0;
    while (true) {
        auto dot = dotted.find('.');
        auto part = dotted.substr(0, dot);
        value = (value << 8) | static_cast<std::uint32_t>(parse_int(part, 0, 255, "IPv4 address"));
        ++parts;
        if (dot == std::string_view::npos)
            break;
        dotted.remove_prefix(dot + 1);
    }
    if (parts != 4)
        throw std::invalid_argument("bad IPv4 address: expected four octets");
    return Ipv4Address{value};
}

std::string Ipv4Address::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", (value >> 24) & 0xFF, (value >> 16) & 0xFF,
                  (value >> 8) & 0xFF, value & 0xFF);
    return buf;
}

std::string Timestamp::to_string() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%u.%06u", seconds, micros);
    return buf;
}

Timestamp Timestamp::parse(std::string_view text) {
    auto dot = text.find('.');
    auto whole = text.substr(0, dot);
    std::uint64_t sec = 0;
    auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), sec);
    if (ec != std::errc{} || p != whole.data() + whole.size() || sec > 0xFFFFFFFFull)
        throw std::invalid_argument("bad timestamp: '" + std::string(text) + "'");
    std::uint32_t us = 0;
    if (dot != std::string_view::npos) {
        auto frac = text.substr(dot + 1);
        if (frac.empty() || frac.size() > 6)
            throw std::invalid_argument("bad timestamp fraction: '" + std::string(text) + "'");
        for (std::size_t i = 0; i < 6; ++i) {
            int digit = 0;
            if (i < frac.size()) {
                if (frac[i] < '0' || frac[i] > '9')
                    throw std::invalid_argument("bad timestamp: '" + std::string(text) + "'");
                digit = frac[i] - '0';
            }
            us = us * 10 + static_cast<std::uint32_t>(digit);
        }
    }
    return {static_cast<std::uint32_t>(sec), us};
}

Cidr Cidr::parse(std::string_view text) {
    auto slash = text.find('/');
    if (slash == std::string_view::npos)
        throw std::invalid_argument("bad CIDR prefix (missing '/'): '" + std::string(text) + "'");
    Cidr c;
    c.network = Ipv4Address::parse(text.substr(0, slash));
    c.prefix_len = parse_int(text.substr(slash + 1), 0, 32, "prefix length");
    std::uint32_t mask = c.prefix_len == 0 ? 0u : ~0u << (32 - c.prefix_len);
    c.network.value &= mask;
    return c;
}

std::string Cidr::to_string() const {
    return network.to_string() + "/" + std::to_string(prefix_len);
}

bool Cidr::contains(Ipv4Address addr) const {
    std::uint32_t mask = prefix_len == 0 ? 0u : ~0u << (32 - prefix_len);
    return (addr.value & mask) == network.value;
}

PortRange PortRange::make(int lo, int hi) {
    if (lo < 1 || hi > 65535 || lo > hi)
        throw std::invalid_argument("port range must satisfy 1 <= lo <= hi <= 65535");
    return {static_cast<std::uint16_t>(lo), static_cast<std::uint16_t>(hi)};
}

bool apply_filter(const PacketRecord& packet, const TrafficFilter& filter) {
    return filter.home_network.contains(packet.dst_ip) &&
           filter.port_range.contains(packet.dst_port) &&
           (!filter.require_payload || !packet.payload.empty());
}

std::vector<PacketRecord> filter_packets(std::span<const PacketRecord> packets,
                                         const TrafficFilter& filter) {
    std::vector<PacketRecord> out;
    std::copy_if(packets.begin(), packets.end(), std::back_inserter(out),
                 [&](const PacketRecord& p) { return apply_filter(p, filter); });
    return out;
}

PcapReader::PcapReader(const std::filesystem::path& path) : name_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open capture '" + name_ + "'");
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    parse_global_header();
}

PcapReader::PcapReader(std::vector<std::uint8_t> bytes, std::string name)
    : bytes_(std::move(bytes)), name_(std::move(name)) {
    parse_global_header();
}

std::uint32_t PcapReader::u32_at(std::size_t off) const {
    std::uint32_t v = std::uint32_t{bytes_[off]} | (std::uint32_t{bytes_[off + 1]} << 8) |
                      (std::uint32_t{bytes_[off + 2]} << 16) |
                      (std::uint32_t{bytes_[off + 3]} << 24);
    return swapped_ ? bswap32(v) : v;
}

std::uint16_t PcapReader::u16_at(std::size_t off) const {
    auto v = static_cast<std::uint16_t>(bytes_[off] | (bytes_[off + 1] << 8));
    return swapped_ ? static_cast<std::uint16_t>((v >> 8) | (v << 8)) : v;
}

void PcapReader::parse_global_header() {
    if (bytes_.size() < 4)
        throw Error(ErrorKind::UnsupportedFormat, name_ + ": not a pcap file (too short for magic)");
    swapped_ = false;
    std::uint32_t magic = u32_at(0);
    if (magic == kMagicMicros || magic == kMagicNanos) {
        nanosecond_ = magic == kMagicNanos;
    } else if (bswap32(magic) == kMagicMicros || bswap32(magic) == kMagicNanos) {
        swapped_ = true;
        nanosecond_ = bswap32(magic) == kMagicNanos;
    } else {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0x%08X", magic);
        throw Error(ErrorKind::UnsupportedFormat,
                    name_ + ": unsupported capture format (magic " + buf + ")");
    }
    if (bytes_.size() < kGlobalHeaderLen)
        throw Error(ErrorKind::CorruptCapture,
                    name_ + ": truncated global header at byte offset " + std::to_string(bytes_.size()));
    if (u16_at(4) != 2)
        throw Error(ErrorKind::UnsupportedFormat,
                    name_ + ": unsupported pcap major version " + std::to_string(u16_at(4)));
    std::uint32_t linktype = u32_at(20) & 0x0FFFFFFFu;
    if (linktype != kLinkTypeEthernet)
        throw Error(ErrorKind::UnsupportedFormat,
                    name_ + ": unsupported link type " + std::to_string(linktype));
    pos_ = kGlobalHeaderLen;
}

std::optional<PacketRecord> PcapReader::next() {
    while (pos_ < bytes_.size()) {
        std::size_t remaining = bytes_.size() - pos_;
        if (remaining < kRecordHeaderLen)
            throw Error(ErrorKind::CorruptCapture,
                        name_ + ": truncated record header at byte offset " + std::to_string(pos_));
        std::uint32_t ts_sec = u32_at(pos_);
        std::uint32_t ts_frac = u32_at(pos_ + 4);
        std::uint32_t incl_len = u32_at(pos_ + 8);
        if (incl_len > kMaxRecordLen)
            throw Error(ErrorKind::CorruptCapture,
                        name_ + ": implausible record length " + std::to_string(incl_len) +
                            " at byte offset " + std::to_string(pos_));
        if (remaining - kRecordHeaderLen < incl_len)
            throw Error(ErrorKind::CorruptCapture,
                        name_ + ": truncated record data at byte offset " + std::to_string(pos_));
        std::span<const std::uint8_t> frame(bytes_.data() + pos_ + kRecordHeaderLen, incl_len);
        pos_ += kRecordHeaderLen + incl_len;
        ++frames_;
        Timestamp ts{ts_sec, nanosecond_ ? ts_frac / 1000u : ts_frac};
        if (auto rec = decode_frame(frame, ts))
            return rec;
    }
    return std::nullopt;
}

std::optional<PacketRecord> PcapReader::decode_frame(std::span<const std::uint8_t> frame,
                                                     Timestamp ts) const {
    if (frame.size() < kEthernetHeaderLen)
        return std::nullopt;
    std::size_t off = 12;
    std::uint16_t ethertype = be16(&frame[off]);
    off += 2;
    while (ethertype == kEtherTypeVlan || ethertype == kEtherTypeQinQ) {
        if (frame.size() < off + 4)
            return std::nullopt;
        ethertype = be16(&frame[off + 2]);
        off += 4;
    }
    if (ethertype != kEtherTypeIpv4)
        return std::nullopt;

    auto ip = frame.subspan(off);
    if (ip.size() < 20 || (ip[0] >> 4) != 4)
        return std::nullopt;
    std::size_t ihl = std::size_t{ip[0] & 0x0Fu} * 4;
    std::size_t total_len = be16(&ip[2]);
    std::uint16_t frag_offset = be16(&ip[6]) & 0x1FFFu;
    if (ihl < 20 || total_len < ihl || ip[9] != kIpProtoTcp || frag_offset != 0)
        return std::nullopt;
    if (ip.size() < ihl + 20)
        return std::nullopt;

    auto tcp = ip.subspan(ihl);
    std::size_t tcp_hlen = static_cast<std::size_t>(tcp[12] >> 4) * 4;
    if (tcp_hlen < 20 || total_len < ihl + tcp_hlen || tcp.size() < tcp_hlen)
        return std::nullopt;

    PacketRecord rec;
    rec.timestamp = ts;
    rec.src_ip = Ipv4Address{be32(&ip[12])};
    rec.dst_ip = Ipv4Address{be32(&ip[16])};
    rec.src_port = be16(&tcp[0]);
    rec.dst_port = be16(&tcp[2]);
    rec.tcp_flags = tcp[13];
    // Ethernet trailer padding lies beyond the IP total length; a short snaplen
    // cuts the payload to what was captured.
    std::size_t payload_len = total_len - ihl - tcp_hlen;
    std::size_t captured = tcp.size() - tcp_hlen;
    auto data = tcp.subspan(tcp_hlen, std::min(payload_len, captured));
    rec.payload.assign(data.begin(), data.end());
    return rec;
}

std::vector<PacketRecord> read_pcap(const std::filesystem::path& path) {
    PcapReader reader(path);
    std::vector<PacketRecord> out;
    while (auto rec = reader.next())
        out.push_back(std::move(*rec));
    return out;
}

namespace {

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    put_be16(out, static_cast<std::uint16_t>(v >> 16));
    put_be16(out, static_cast<std::uint16_t>(v));
}

std::uint32_t ones_complement_sum(std::span<const std::uint8_t> data, std::uint32_t sum = 0) {
    for (std::size_t i = 0; i + 1 < data.size(); i += 2)
        sum += be16(&data[i]);
    if (data.size() % 2)
        sum += std::uint32_t{data.back()} << 8;
    return sum;
}

std::uint16_t fold_checksum(std::uint32_t sum) {
    while (sum >> 16)
        sum = (sum & 0xFFFFu) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum);
}

}  // namespace

std::vector<std::uint8_t> encode_pcap(std::span<const PacketRecord> packets) {
    std::vector<std::uint8_t> out;
    put_le32(out, kMagicMicros);
    put_le16(out, 2);
    put_le16(out, 4);
    put_le32(out, 0);        // thiszone
    put_le32(out, 0);        // sigfigs
    put_le32(out, 65535);    // snaplen
    put_le32(out, kLinkTypeEthernet);

    std::uint16_t ip_id = 0;
    for (const auto& p : packets) {
        if (p.payload.size() > kMaxTcpPayload)
            throw std::invalid_argument("payload exceeds maximum IPv4/TCP payload size");
        std::vector<std::uint8_t> frame;
        frame.reserve(kEthernetHeaderLen + 40 + p.payload.size());
        const std::uint8_t dst_mac[6] = {0x00, 0x00, 0x5e, 0x00, 0x01, 0x02};
        const std::uint8_t src_mac[6] = {0x00, 0x00, 0x5e, 0x00, 0x01, 0x01};
        frame.insert(frame.end(), std::begin(dst_mac), std::end(dst_mac));
        frame.insert(frame.end(), std::begin(src_mac), std::end(src_mac));
        put_be16(frame, kEtherTypeIpv4);

        std::size_t ip_start = frame.size();
        auto total_len = static_cast<std::uint16_t>(40 + p.payload.size());
        frame.push_back(0x45);
        frame.push_back(0x00);
        put_be16(frame, total_len);
        put_be16(frame, ip_id++);
        put_be16(frame, 0x4000);  // DF
        frame.push_back(64);
        frame.push_back(kIpProtoTcp);
        put_be16(frame, 0);
        put_be32(frame, p.src_ip.value);
        put_be32(frame, p.dst_ip.value);
        std::uint16_t ip_sum =
            fold_checksum(ones_complement_sum(std::span(frame).subspan(ip_start, 20)));
        frame[ip_start + 10] = static_cast<std::uint8_t>(ip_sum >> 8);
        frame[ip_start + 11] = static_cast<std::uint8_t>(ip_sum);

        std::size_t tcp_start = frame.size();
        put_be16(frame, p.src_port);
        put_be16(frame, p.dst_port);
        put_be32(frame, 0);  // seq
        put_be32(frame, 0);  // ack
        frame.push_back(0x50);
        frame.push_back(p.tcp_flags);
        put_be16(frame, 65535);
        put_be16(frame, 0);  // checksum
        put_be16(frame, 0);  // urgent
        frame.insert(frame.end(), p.payload.begin(), p.payload.end());

        auto tcp_len = static_cast<std::uint32_t>(frame.size() - tcp_start);
        std::uint32_t pseudo = (p.src_ip.value >> 16) + (p.src_ip.value & 0xFFFFu) +
                               (p.dst_ip.value >> 16) + (p.dst_ip.value & 0xFFFFu) +
                               kIpProtoTcp + tcp_len;
        std::uint16_t tcp_sum =
            fold_checksum(ones_complement_sum(std::span(frame).subspan(tcp_start), pseudo));
        frame[tcp_start + 16] = static_cast<std::uint8_t>(tcp_sum >> 8);
        frame[tcp_start + 17] = static_cast<std::uint8_t>(tcp_sum);

        put_le32(out, p.timestamp.seconds);
        put_le32(out, p.timestamp.micros);
        put_le32(out, static_cast<std::uint32_t>(frame.size()));
        put_le32(out, static_cast<std::uint32_t>(frame.size()));
        out.insert(out.end(), frame.begin(), frame.end());
    }
    return out;
}

void write_pcap(const std::filesystem::path& path, std::span<const PacketRecord> packets) {
    auto bytes = encode_pcap(packets);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::Io, "cannot write capture '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error(ErrorKind::Io, "write failed for capture '" + path.string() + "'");
}

}  // namespace poseidon
