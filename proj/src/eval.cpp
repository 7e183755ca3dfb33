#include "poseidon/eval.hpp"

#include "poseidon/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

namespace poseidon {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (true) {
        auto c = line.find(',', i);
        out.push_back(line.substr(i, c == std::string_view::npos ? std::string_view::npos : c - i));
        if (c == std::string_view::npos)
            break;
        i = c + 1;
    }
    return out;
}

/// Lines without trailing '\r'; a final unterminated line is kept.
std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t i = 0;
    while (i < text.size()) {
        auto nl = text.find('\n', i);
        auto l = text.substr(i, nl == std::string_view::npos ? std::string_view::npos : nl - i);
        if (!l.empty() && l.back() == '\r')
            l.remove_suffix(1);
        lines.push_back(l);
        if (nl == std::string_view::npos)
            break;
        i = nl + 1;
    }
    return lines;
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<TruthRow> parse_truth_csv(std::string_view text, const std::string& source) {
    auto lines = split_lines(text);
    if (lines.empty() || lines[0] != kTruthCsvHeader)
        throw Error(ErrorKind::Truth, source + " line 1: expected header '" +
                                          std::string(kTruthCsvHeader) + "'");
    std::vector<TruthRow> rows;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (lines[n].empty())
            continue;
        const std::string where = source + " line " + std::to_string(n + 1) + ": ";
        auto f = split_csv(lines[n]);
        if (f.size() != 5)
            throw Error(ErrorKind::Truth, where + "expected 5 fields, got " + std::to_string(f.size()));
        TruthRow r;
        try {
            r.dst_ip = Ipv4Address::parse(f[0]);
            int port = 0;
            auto [p, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), port);
            if (ec != std::errc{} || p != f[1].data() + f[1].size() || port < 0 || port > 65535)
                throw std::invalid_argument("bad port '" + std::string(f[1]) + "'");
            r.dst_port = static_cast<std::uint16_t>(port);
            r.start = Timestamp::parse(f[2]);
            r.end = Timestamp::parse(f[3]);
        } catch (const std::invalid_argument& e) {
            throw Error(ErrorKind::Truth, where + e.what());
        }
        if (r.end < r.start)
            throw Error(ErrorKind::Truth, where + "end_ts precedes start_ts");
        if (f[4].empty())
            throw Error(ErrorKind::Truth, where + "empty attack_name");
        r.attack_name = std::string(f[4]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<TruthRow> load_truth_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open truth file '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_truth_csv(text, path.string());
}

std::string format_truth_csv(std::span<const TruthRow> rows) {
    std::string out(kTruthCsvHeader);
    out += '\n';
    for (const auto& r : rows)
        out += r.dst_ip.to_string() + ',' + std::to_string(r.dst_port) + ',' + r.start.to_string() +
               ',' + r.end.to_string() + ',' + r.attack_name + '\n';
    return out;
}

Labeling label_packets(std::span<const PacketRecord> universe, std::span<const TruthRow> truth) {
    Labeling l;
    l.instances.assign(truth.begin(), truth.end());
    l.packet_instances.resize(universe.size());
    // Rows per (ip, port), so each packet only checks its own service.
    std::map<std::pair<Ipv4Address, std::uint16_t>, std::vector<std::uint32_t>> index;
    for (std::uint32_t i = 0; i < truth.size(); ++i)
        index[{truth[i].dst_ip, truth[i].dst_port}].push_back(i);
    for (std::size_t p = 0; p < universe.size(); ++p) {
        auto it = index.find({universe[p].dst_ip, universe[p].dst_port});
        if (it == index.end())
            continue;
        for (auto i : it->second)
            if (truth[i].start <= universe[p].timestamp && universe[p].timestamp <= truth[i].end)
                l.packet_instances[p].push_back(i);
    }
    return l;
}

double PortMetrics::detection_rate() const {
    return ratio(detected, attack_instances);
}

double PortMetrics::fp_rate() const {
    return ratio(false_positives, normal_packets);
}

RunMetrics score_run(std::span<const std::uint64_t> alert_ordinals, const Labeling& labels,
                     std::span<const PacketRecord> universe) {
    if (labels.packet_instances.size() != universe.size())
        throw Error(ErrorKind::InvalidArgument, "labeling does not match the packet universe");
    std::vector<char> alerted(universe.size(), 0);
    for (auto o : alert_ordinals) {
        if (o >= universe.size())
            throw Error(ErrorKind::InvalidArgument, "alert references packet " + std::to_string(o) +
                                                        " outside a universe of " +
                                                        std::to_string(universe.size()));
        alerted[o] = 1;
    }

    std::vector<char> detected(labels.instances.size(), 0);
    std::map<std::uint16_t, PortMetrics> ports;
    RunMetrics m;
    for (std::size_t p = 0; p < universe.size(); ++p) {
        if (labels.is_attack(p)) {
            if (alerted[p])
                for (auto i : labels.packet_instances[p])
                    detected[i] = 1;
            continue;
        }
        auto& pm = ports[universe[p].dst_port];
        ++pm.normal_packets;
        ++m.overall.normal_packets;
        if (alerted[p]) {
            ++pm.false_positives;
            ++m.overall.false_positives;
            ++m.fp_by_source[universe[p].src_ip];
        }
    }
    for (std::size_t i = 0; i < labels.instances.size(); ++i) {
        auto& pm = ports[labels.instances[i].dst_port];
        ++pm.attack_instances;
        ++m.overall.attack_instances;
        if (detected[i]) {
            ++pm.detected;
            ++m.overall.detected;
        }
    }
    for (auto& [port, pm] : ports) {
        pm.port = port;
        m.per_port.push_back(pm);
    }
    return m;
}

RunMetrics score_run(std::span<const Alert> alerts, const Labeling& labels,
                     std::span<const PacketRecord> universe) {
    std::vector<std::uint64_t> ordinals;
    ordinals.reserve(alerts.size());
    for (const auto& a : alerts)
        ordinals.push_back(a.ordinal);
    return score_run(ordinals, labels, universe);
}

std::vector<RocPoint> roc_sweep(std::span<const double> scores, const Labeling& labels,
                                std::span<const PacketRecord> universe,
                                std::optional<std::uint16_t> port) {
    if (scores.empty())
        throw Error(ErrorKind::InvalidArgument, "ROC sweep needs at least one score");
    if (scores.size() != universe.size() || labels.packet_instances.size() != universe.size())
        throw Error(ErrorKind::InvalidArgument, "scores, labels and universe differ in size");

    constexpr double kNever = -std::numeric_limits<double>::infinity();
    std::vector<double> instance_max(labels.instances.size(), kNever);
    std::vector<double> normal_scores;
    for (std::size_t p = 0; p < universe.size(); ++p) {
        if (labels.is_attack(p)) {
            for (auto i : labels.packet_instances[p])
                instance_max[i] = std::max(instance_max[i], scores[p]);
        } else if (!port || universe[p].dst_port == *port) {
            normal_scores.push_back(scores[p]);
        }
    }
    std::vector<double> attack_scores;
    for (std::size_t i = 0; i < labels.instances.size(); ++i)
        if (!port || labels.instances[i].dst_port == *port)
            attack_scores.push_back(instance_max[i]);
    std::sort(normal_scores.begin(), normal_scores.end());
    std::sort(attack_scores.begin(), attack_scores.end());

    std::set<double, std::greater<>> thresholds;
    double max_finite = kNever;
    for (double s : normal_scores)
        if (s != kNever) {
            thresholds.insert(s);
            if (std::isfinite(s))
                max_finite = std::max(max_finite, s);
        }
    for (double s : attack_scores)
        if (s != kNever) {
            thresholds.insert(s);
            if (std::isfinite(s))
                max_finite = std::max(max_finite, s);
        }
    if (max_finite != kNever)
        thresholds.insert(std::nextafter(max_finite, std::numeric_limits<double>::infinity()));

    auto at_or_above = [](const std::vector<double>& v, double t) {
        return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), t));
    };
    std::vector<RocPoint> out;
    for (double t : thresholds)
        out.push_back({t, ratio(at_or_above(attack_scores, t), attack_scores.size()),
                       ratio(at_or_above(normal_scores, t), normal_scores.size())});
    return out;
}

std::uint64_t capture_digest(std::span<const PacketRecord> packets) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& p : packets) {
        mix(p.timestamp.total_micros(), 8);
        mix(p.src_ip.value, 4);
        mix(p.dst_ip.value, 4);
        mix(p.src_port, 2);
        mix(p.dst_port, 2);
        mix(p.payload.size(), 4);
        for (auto b : p.payload)
            mix(b, 1);
    }
    return h;
}

Comparison compare_modes(const RunSummary& a, const RunSummary& b) {
    if (a.capture_digest != b.capture_digest ||
        a.metrics.overall.attack_instances != b.metrics.overall.attack_instances ||
        a.metrics.overall.normal_packets != b.metrics.overall.normal_packets)
        throw Error(ErrorKind::InvalidArgument,
                    "runs '" + a.name + "' and '" + b.name + "' cover different captures");
    Comparison c{a.name, b.name, {}, a.profile_count, b.profile_count};
    std::map<std::uint16_t, std::pair<const PortMetrics*, const PortMetrics*>> ports;
    for (const auto& pm : a.metrics.per_port)
        ports[pm.port].first = &pm;
    for (const auto& pm : b.metrics.per_port)
        ports[pm.port].second = &pm;
    for (const auto& [port, pair] : ports) {
        ComparisonRow row{std::to_string(port)};
        if (pair.first) {
            row.dr_a = pair.first->detection_rate();
            row.fp_a = pair.first->fp_rate();
        }
        if (pair.second) {
            row.dr_b = pair.second->detection_rate();
            row.fp_b = pair.second->fp_rate();
        }
        c.rows.push_back(row);
    }
    c.rows.push_back({"all", a.metrics.overall.detection_rate(), a.metrics.overall.fp_rate(),
                      b.metrics.overall.detection_rate(), b.metrics.overall.fp_rate()});
    return c;
}

std::string format_real(double v) {
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_alerts_csv(std::span<const Alert> alerts) {
    std::string out(kAlertsCsvHeader);
    out += '\n';
    for (const auto& a : alerts)
        out += std::to_string(a.ordinal) + ',' + a.timestamp.to_string() + ',' +
               a.key.ip.to_string() + ',' + std::to_string(a.key.port) + ',' +
               std::to_string(a.key.class_index) + ',' + format_real(a.distance) + ',' +
               to_string(a.reason) + '\n';
    return out;
}

std::vector<Alert> parse_alerts_csv(std::string_view text, const std::string& source) {
    auto lines = split_lines(text);
    if (lines.empty() || lines[0] != kAlertsCsvHeader)
        throw Error(ErrorKind::InvalidArgument, source + " line 1: expected header '" +
                                                    std::string(kAlertsCsvHeader) + "'");
    std::vector<Alert> out;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (lines[n].empty())
            continue;
        const std::string where = source + " line " + std::to_string(n + 1) + ": ";
        auto f = split_csv(lines[n]);
        if (f.size() != 7)
            throw Error(ErrorKind::InvalidArgument, where + "expected 7 fields");
        Alert a;
        try {
            a.ordinal = std::stoull(std::string(f[0]));
            a.timestamp = Timestamp::parse(f[1]);
            a.key.ip = Ipv4Address::parse(f[2]);
            a.key.port = static_cast<std::uint16_t>(std::stoul(std::string(f[3])));
            a.key.class_index = static_cast<std::uint32_t>(std::stoul(std::string(f[4])));
            a.distance = std::strtod(std::string(f[5]).c_str(), nullptr);
        } catch (const std::exception& e) {
            throw Error(ErrorKind::InvalidArgument, where + e.what());
        }
        if (f[6] == "over-threshold")
            a.reason = AlertReason::OverThreshold;
        else if (f[6] == "no-model")
            a.reason = AlertReason::NoModel;
        else
            throw Error(ErrorKind::InvalidArgument, where + "unknown reason '" + std::string(f[6]) + "'");
        out.push_back(a);
    }
    return out;
}

namespace {

std::string metrics_row(const std::string& label, const PortMetrics& pm) {
    return label + ',' + std::to_string(pm.attack_instances) + ',' + std::to_string(pm.detected) +
           ',' + format_real(pm.detection_rate()) + ',' + std::to_string(pm.normal_packets) + ',' +
           std::to_string(pm.false_positives) + ',' + format_real(pm.fp_rate()) + '\n';
}

}  // namespace

std::string format_metrics_csv(const RunMetrics& m) {
    std::string out(kMetricsCsvHeader);
    out += '\n';
    for (const auto& pm : m.per_port)
        out += metrics_row(std::to_string(pm.port), pm);
    out += metrics_row("all", m.overall);
    return out;
}

std::string format_fp_sources_csv(const RunMetrics& m) {
    std::string out = "src_ip,false_positives\n";
    for (const auto& [ip, n] : m.fp_by_source)
        out += ip.to_string() + ',' + std::to_string(n) + '\n';
    return out;
}

std::string format_roc_csv(std::span<const RocPoint> points) {
    std::string out(kRocCsvHeader);
    out += '\n';
    for (const auto& p : points)
        out += format_real(p.threshold) + ',' + format_real(p.false_positive_rate) + ',' +
               format_real(p.detection_rate) + '\n';
    return out;
}

std::string format_comparison_csv(const Comparison& c) {
    std::string out = "port,dr_" + c.name_a + ",fp_" + c.name_a + ",dr_" + c.name_b + ",fp_" +
                      c.name_b + '\n';
    for (const auto& r : c.rows)
        out += r.label + ',' + format_real(r.dr_a) + ',' + format_real(r.fp_a) + ',' +
               format_real(r.dr_b) + ',' + format_real(r.fp_b) + '\n';
    out += "profiles," + std::to_string(c.profiles_a) + ",," + std::to_string(c.profiles_b) + ",\n";
    return out;
}

}  // namespace poseidon
