#include "poseidon/detector.hpp"

#include "poseidon/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace poseidon {

const char* to_string(Mode mode) {
    return mode == Mode::Poseidon ? "poseidon" : "payl";
}

Mode parse_mode(std::string_view text) {
    if (text == "poseidon")
        return Mode::Poseidon;
    if (text == "payl" || text == "payl-baseline")
        return Mode::PaylBaseline;
    throw Error(ErrorKind::Config, "unknown mode '" + std::string(text) + "'");
}

const char* to_string(UnseenPolicy policy) {
    return policy == UnseenPolicy::Alert ? "alert" : "ignore";
}

UnseenPolicy parse_unseen_policy(std::string_view text) {
    if (text == "alert")
        return UnseenPolicy::Alert;
    if (text == "ignore")
        return UnseenPolicy::Ignore;
    throw Error(ErrorKind::Config, "unknown unseen-model policy '" + std::string(text) + "'");
}

const char* to_string(AlertReason reason) {
    return reason == AlertReason::OverThreshold ? "over-threshold" : "no-model";
}

std::uint16_t DetectorConfig::som_port_for(std::uint16_t port) const {
    auto it = port_groups.find(port);
    return it == port_groups.end() ? port : it->second;
}

const SomConfig& DetectorConfig::som_config_for(std::uint16_t som_port) const {
    auto it = som_overrides.find(som_port);
    return it == som_overrides.end() ? som : it->second;
}

void DetectorConfig::validate() const {
    try {
        som.validate();
        for (const auto& [port, c] : som_overrides)
            c.validate();
    } catch (const std::invalid_argument& e) {
        throw Error(ErrorKind::Config, e.what());
    }
    if (!(smoothing > 0.0) || !std::isfinite(smoothing))
        throw Error(ErrorKind::Config, "distance smoothing must be a finite value > 0");
    if (cluster_threshold && !(*cluster_threshold >= 0.0))
        throw Error(ErrorKind::Config, "cluster threshold must be >= 0");
    if (!filter.require_payload)
        throw Error(ErrorKind::Config, "detector requires a filter that drops empty payloads");
    for (const auto& [from, to] : port_groups)
        if (port_groups.count(to) && port_groups.at(to) != to)
            throw Error(ErrorKind::Config, "port group target " + std::to_string(to) +
                                               " is itself grouped onto another port");
}

ModelStore::ModelStore(DetectorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

void ModelStore::add_som(std::uint16_t som_port, Som som) {
    soms_.insert_or_assign(som_port, std::move(som));
}

void ModelStore::put_model(const ModelKey& key, ModelEntry entry) {
    models_.insert_or_assign(key, std::move(entry));
}

std::uint32_t ModelStore::class_of(const PacketRecord& packet) const {
    if (cfg_.mode == Mode::PaylBaseline)
        return static_cast<std::uint32_t>(packet.payload.size());
    auto it = soms_.find(cfg_.som_port_for(packet.dst_port));
    if (it == soms_.end())
        throw Error(ErrorKind::NoModel,
                    "no trained SOM for port " + std::to_string(packet.dst_port));
    return static_cast<std::uint32_t>(it->second.classify(packet.payload).index);
}

const std::pair<const ModelKey, ModelEntry>* ModelStore::find(Ipv4Address ip, std::uint16_t port,
                                                              std::uint32_t class_index) const {
    const ModelKey key{ip, port, class_index};
    if (cfg_.mode == Mode::Poseidon) {
        auto it = models_.find(key);
        return it == models_.end() ? nullptr : &*it;
    }
    // Baseline: the covering model is the last one starting at or before
    // this length, if its range reaches it.
    auto it = models_.upper_bound(key);
    if (it == models_.begin())
        return nullptr;
    --it;
    if (it->first.ip != ip || it->first.port != port || class_index > it->second.class_last)
        return nullptr;
    return &*it;
}

std::size_t ModelStore::class_count(Ipv4Address ip, std::uint16_t port) const {
    auto lo = models_.lower_bound(ModelKey{ip, port, 0});
    auto hi = models_.lower_bound(ModelKey{ip, static_cast<std::uint16_t>(port), 0xFFFFFFFFu});
    std::size_t n = static_cast<std::size_t>(std::distance(lo, hi));
    if (hi != models_.end() && hi->first.ip == ip && hi->first.port == port)
        ++n;
    return n;
}

namespace {

void require_filtered(const PacketRecord& p, const TrafficFilter& filter) {
    if (!apply_filter(p, filter))
        throw std::invalid_argument("packet to " + p.dst_ip.to_string() + ":" +
                                    std::to_string(p.dst_port) + " fails the traffic filter");
}

void train_poseidon(ModelStore& store, std::span<const PacketRecord> packets) {
    const auto& cfg = store.config();
    std::map<std::uint16_t, std::vector<Payload>> by_port;
    for (const auto& p : packets)
        by_port[cfg.som_port_for(p.dst_port)].push_back(p.payload);

    for (auto& [port, payloads] : by_port) {
        Som som = Som::init(cfg.som_config_for(port));
        som.train_payloads(payloads);
        store.add_som(port, std::move(som));
    }

    std::map<ModelKey, ModelEntry> models;
    for (const auto& p : packets) {
        auto it = store.soms().find(cfg.som_port_for(p.dst_port));
        if (it == store.soms().end())
            throw std::logic_error("second training pass reached a port without a SOM");
        auto neuron = static_cast<std::uint32_t>(it->second.classify(p.payload).index);
        auto& entry = models[ModelKey{p.dst_ip, p.dst_port, neuron}];
        entry.class_last = neuron;
        entry.fv.update(p.payload);
    }
    for (auto& [key, entry] : models)
        store.put_model(key, std::move(entry));
}

void train_baseline(ModelStore& store, std::span<const PacketRecord> packets) {
    std::map<ModelKey, ModelEntry> models;
    for (const auto& p : packets) {
        auto len = static_cast<std::uint32_t>(p.payload.size());
        auto& entry = models[ModelKey{p.dst_ip, p.dst_port, len}];
        entry.class_last = len;
        entry.fv.update(p.payload);
    }
    const auto& threshold = store.config().cluster_threshold;
    if (!threshold) {
        for (auto& [key, entry] : models)
            store.put_model(key, std::move(entry));
        return;
    }
    auto it = models.begin();
    while (it != models.end()) {
        const Ipv4Address ip = it->first.ip;
        const std::uint16_t port = it->first.port;
        std::vector<LengthModel> group;
        for (; it != models.end() && it->first.ip == ip && it->first.port == port; ++it)
            group.push_back({it->first.class_index, std::move(it->second.fv)});
        for (auto& c : cluster_length_models(std::move(group), *threshold))
            store.put_model(ModelKey{ip, port, c.first_len}, ModelEntry{c.last_len, std::move(c.fv)});
    }
}

}  // namespace

ModelStore train_store(std::span<const PacketRecord> packets, const DetectorConfig& cfg) {
    if (packets.empty())
        throw Error(ErrorKind::Training, "cannot train a model store on an empty capture");
    ModelStore store(cfg);
    for (const auto& p : packets)
        require_filtered(p, cfg.filter);
    if (cfg.mode == Mode::Poseidon)
        train_poseidon(store, packets);
    else
        train_baseline(store, packets);
    return store;
}

Score score_packet(const PacketRecord& packet, const ModelStore& store) {
    require_filtered(packet, store.config().filter);
    Score s;
    s.key = ModelKey{packet.dst_ip, packet.dst_port, 0};
    if (store.mode() == Mode::Poseidon &&
        !store.soms().count(store.config().som_port_for(packet.dst_port)))
        return s;
    s.key.class_index = store.class_of(packet);
    if (const auto* model = store.find(packet.dst_ip, packet.dst_port, s.key.class_index)) {
        s.key = model->first;
        s.has_model = true;
        s.distance = model->second.fv.distance(packet.payload, store.config().smoothing);
    }
    return s;
}

double detection_score(const Score& score, UnseenPolicy policy) {
    if (score.has_model)
        return score.distance;
    return policy == UnseenPolicy::Alert ? std::numeric_limits<double>::infinity()
                                         : -std::numeric_limits<double>::infinity();
}

namespace {

std::optional<Alert> alert_for(const Score& s, const PacketRecord& packet, std::uint64_t ordinal,
                               const ModelStore& store, double threshold) {
    Alert a{ordinal, packet.timestamp, s.key, s.distance, threshold, AlertReason::OverThreshold};
    if (!s.has_model) {
        if (store.config().unseen == UnseenPolicy::Ignore)
            return std::nullopt;
        a.reason = AlertReason::NoModel;
        a.distance = std::numeric_limits<double>::infinity();
        return a;
    }
    if (s.distance >= threshold)
        return a;
    return std::nullopt;
}

}  // namespace

std::optional<Alert> detect(const PacketRecord& packet, std::uint64_t ordinal,
                            const ModelStore& store, double threshold) {
    return alert_for(score_packet(packet, store), packet, ordinal, store, threshold);
}

std::vector<Score> score_all(std::span<const PacketRecord> packets, const ModelStore& store,
                             unsigned threads) {
    std::vector<Score> scores(packets.size());
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(packets.size())));
    if (threads <= 1) {
        for (std::size_t i = 0; i < packets.size(); ++i)
            scores[i] = score_packet(packets[i], store);
        return scores;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> workers;
        const std::size_t chunk = (packets.size() + threads - 1) / threads;
        for (unsigned w = 0; w < threads; ++w) {
            workers.emplace_back([&, w] {
                try {
                    std::size_t end = std::min(packets.size(), (w + 1) * chunk);
                    for (std::size_t i = w * chunk; i < end; ++i)
                        scores[i] = score_packet(packets[i], store);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return scores;
}

std::vector<Alert> detect_all(std::span<const PacketRecord> packets, const ModelStore& store,
                              double threshold, unsigned threads) {
    auto scores = score_all(packets, store, threads);
    std::vector<Alert> alerts;
    for (std::size_t i = 0; i < packets.size(); ++i)
        if (auto a = alert_for(scores[i], packets[i], i, store, threshold))
            alerts.push_back(*a);
    return alerts;
}

double calibrate_threshold(std::span<const double> scores, double target_fp_rate) {
    if (scores.empty())
        throw Error(ErrorKind::InvalidArgument, "cannot calibrate on an empty stream");
    if (!(target_fp_rate > 0.0 && target_fp_rate < 1.0))
        throw Error(ErrorKind::InvalidArgument, "target false-positive rate must lie in (0, 1)");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    // Tolerance keeps e.g. 0.01 * 100 from flooring to 0.
    const auto allowed = static_cast<std::size_t>(
        std::floor(target_fp_rate * static_cast<double>(n) * (1.0 + 1e-12)));

    auto at_or_above = [&](double t) {
        return n - static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) -
                                            sorted.begin());
    };
    double max_finite = -std::numeric_limits<double>::infinity();
    for (double s : sorted) {
        if (!std::isfinite(s))
            continue;
        if (at_or_above(s) <= allowed)
            return s;
        max_finite = s;
    }
    if (max_finite == -std::numeric_limits<double>::infinity())
        return std::numeric_limits<double>::infinity();
    return std::nextafter(max_finite, std::numeric_limits<double>::infinity());
}

double calibrate_threshold(const ModelStore& store, std::span<const PacketRecord> packets,
                           double target_fp_rate) {
    auto scores = score_all(packets, store);
    std::vector<double> values;
    values.reserve(scores.size());
    for (const auto& s : scores)
        values.push_back(detection_score(s, store.config().unseen));
    return calibrate_threshold(values, target_fp_rate);
}

}  // namespace poseidon
