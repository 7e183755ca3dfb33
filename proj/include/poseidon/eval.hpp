#pragma once

#include "poseidon/detector.hpp"
#include "poseidon/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace poseidon {

/// One attack instance: packets to dst_ip:dst_port with start <= ts <= end.
/// Packets matched by no row are normal.
struct TruthRow {
    Ipv4Address dst_ip;
    std::uint16_t dst_port = 0;
    Timestamp start;
    Timestamp end;
    std::string attack_name;

    bool operator==(const TruthRow&) const = default;
};

inline constexpr std::string_view kTruthCsvHeader = "dst_ip,dst_port,start_ts,end_ts,attack_name";

/// Throws Error(Truth) naming the offending line.
std::vector<TruthRow> parse_truth_csv(std::string_view text, const std::string& source = "truth");
std::vector<TruthRow> load_truth_csv(const std::filesystem::path& path);
std::string format_truth_csv(std::span<const TruthRow> rows);

struct Labeling {
    std::vector<TruthRow> instances;
    /// Instance indices matched by each packet of the universe.
    std::vector<std::vector<std::uint32_t>> packet_instances;

    bool is_attack(std::size_t packet) const { return !packet_instances[packet].empty(); }
};

Labeling label_packets(std::span<const PacketRecord> universe, std::span<const TruthRow> truth);

struct PortMetrics {
    std::uint16_t port = 0;
    std::size_t attack_instances = 0;
    std::size_t detected = 0;
    std::size_t normal_packets = 0;
    std::size_t false_positives = 0;

    double detection_rate() const;
    double fp_rate() const;

    bool operator==(const PortMetrics&) const = default;
};

struct RunMetrics {
    std::vector<PortMetrics> per_port;  ///< ascending port
    PortMetrics overall;
    std::map<Ipv4Address, std::size_t> fp_by_source;

    bool operator==(const RunMetrics&) const = default;
};

/// An instance counts as detected when at least one of its packets
/// alerts. Throws Error(InvalidArgument) for an ordinal outside the
/// universe.
RunMetrics score_run(std::span<const std::uint64_t> alert_ordinals, const Labeling& labels,
                     std::span<const PacketRecord> universe);
RunMetrics score_run(std::span<const Alert> alerts, const Labeling& labels,
                     std::span<const PacketRecord> universe);

struct RocPoint {
    double threshold = 0.0;
    double detection_rate = 0.0;
    double false_positive_rate = 0.0;

    bool operator==(const RocPoint&) const = default;
};

/// Sweeps every distinct score as a threshold (plus one just above the
/// largest finite score). Points are ordered by ascending FP rate and DR.
/// Scores of -inf never alert. `port` restricts the sweep to one service.
std::vector<RocPoint> roc_sweep(std::span<const double> scores, const Labeling& labels,
                                std::span<const PacketRecord> universe,
                                std::optional<std::uint16_t> port = std::nullopt);

struct RunSummary {
    std::string name;
    RunMetrics metrics;
    std::size_t profile_count = 0;
    std::uint64_t capture_digest = 0;
};

struct ComparisonRow {
    std::string label;  ///< port number or "all"
    double dr_a = 0, fp_a = 0, dr_b = 0, fp_b = 0;

    bool operator==(const ComparisonRow&) const = default;
};

struct Comparison {
    std::string name_a, name_b;
    std::vector<ComparisonRow> rows;
    std::size_t profiles_a = 0, profiles_b = 0;
};

/// Side-by-side DR/FP per port plus profile counts. Throws
/// Error(InvalidArgument) when the runs cover different captures.
Comparison compare_modes(const RunSummary& a, const RunSummary& b);

/// FNV-1a over timestamps, addresses, ports and payloads.
std::uint64_t capture_digest(std::span<const PacketRecord> packets);

// CSV output. Reals use 17 significant digits; infinities print as "inf".
std::string format_real(double v);
std::string format_alerts_csv(std::span<const Alert> alerts);
std::vector<Alert> parse_alerts_csv(std::string_view text, const std::string& source = "alerts");
std::string format_metrics_csv(const RunMetrics& m);
std::string format_fp_sources_csv(const RunMetrics& m);
std::string format_roc_csv(std::span<const RocPoint> points);
std::string format_comparison_csv(const Comparison& c);

inline constexpr std::string_view kAlertsCsvHeader =
    "ordinal,timestamp,ip,port,class_index,distance,reason";
inline constexpr std::string_view kRocCsvHeader = "threshold,fp_rate,detection_rate";
inline constexpr std::string_view kMetricsCsvHeader =
    "port,attack_instances,detected,detection_rate,normal_packets,false_positives,fp_rate";

}  // namespace poseidon
