#pragma once

#include "poseidon/ingest.hpp"
#include "poseidon/payl.hpp"
#include "poseidon/som.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace poseidon {

enum class Mode { Poseidon, PaylBaseline };
enum class UnseenPolicy { Alert, Ignore };

const char* to_string(Mode mode);
Mode parse_mode(std::string_view text);
const char* to_string(UnseenPolicy policy);
UnseenPolicy parse_unseen_policy(std::string_view text);

struct DetectorConfig {
    Mode mode = Mode::Poseidon;
    TrafficFilter filter;
    SomConfig som;
    /// Replaces `som` for the SOM that serves the given port.
    std::map<std::uint16_t, SomConfig> som_overrides;
    /// port -> port whose SOM it shares. Unlisted ports get their own map.
    std::map<std::uint16_t, std::uint16_t> port_groups;
    double smoothing = kDefaultDistanceSmoothing;
    /// Baseline mode only: merge neighbouring length models below this
    /// mean-L1 distance. Unset means the unclustered baseline.
    std::optional<double> cluster_threshold;
    UnseenPolicy unseen = UnseenPolicy::Alert;

    std::uint16_t som_port_for(std::uint16_t port) const;
    const SomConfig& som_config_for(std::uint16_t som_port) const;
    /// Throws Error(Config) on an out-of-range value.
    void validate() const;

    bool operator==(const DetectorConfig&) const = default;
};

/// Identifies one feature vector. class_index is the SOM neuron in
/// POSEIDON mode and the (first) payload length in baseline mode.
struct ModelKey {
    Ipv4Address ip;
    std::uint16_t port = 0;
    std::uint32_t class_index = 0;

    auto operator<=>(const ModelKey&) const = default;
};

struct ModelEntry {
    /// Last payload length covered; equals the key's class_index except for
    /// clustered baseline models.
    std::uint32_t class_last = 0;
    FeatureVector fv;

    bool operator==(const ModelEntry&) const = default;
};

class ModelStore {
public:
    explicit ModelStore(DetectorConfig cfg);

    Mode mode() const { return cfg_.mode; }
    const DetectorConfig& config() const { return cfg_; }
    const std::map<std::uint16_t, Som>& soms() const { return soms_; }
    const std::map<ModelKey, ModelEntry>& models() const { return models_; }

    void add_som(std::uint16_t som_port, Som som);
    void put_model(const ModelKey& key, ModelEntry entry);

    /// Class index the packet maps to: neuron or payload length. Throws
    /// Error(NoModel) in POSEIDON mode when the port has no trained SOM.
    std::uint32_t class_of(const PacketRecord& packet) const;

    /// Model responsible for the given class, or nullptr.
    const std::pair<const ModelKey, ModelEntry>* find(Ipv4Address ip, std::uint16_t port,
                                                      std::uint32_t class_index) const;

    /// Number of feature vectors held.
    std::size_t profile_count() const { return models_.size(); }
    std::size_t class_count(Ipv4Address ip, std::uint16_t port) const;

    bool operator==(const ModelStore&) const = default;

private:
    DetectorConfig cfg_;
    std::map<std::uint16_t, Som> soms_;
    std::map<ModelKey, ModelEntry> models_;
};

/// Two-phase training. POSEIDON: one SOM per (grouped) destination port,
/// then every payload updates the model of its winning neuron. Baseline:
/// one model per payload length, optionally clustered.
ModelStore train_store(std::span<const PacketRecord> packets, const DetectorConfig& cfg);

struct Score {
    ModelKey key;
    bool has_model = false;
    double distance = 0.0;  ///< meaningful only when has_model
};

/// Throws std::invalid_argument if the packet fails the store's filter.
Score score_packet(const PacketRecord& packet, const ModelStore& store);

/// Scalar used for thresholding: the distance, +inf for a missing model
/// under the alert policy, -inf (never alerts) under the ignore policy.
double detection_score(const Score& score, UnseenPolicy policy);

enum class AlertReason { OverThreshold, NoModel };
const char* to_string(AlertReason reason);

struct Alert {
    std::uint64_t ordinal = 0;
    Timestamp timestamp;
    ModelKey key;
    double distance = 0.0;
    double threshold = 0.0;
    AlertReason reason = AlertReason::OverThreshold;

    bool operator==(const Alert&) const = default;
};

std::optional<Alert> detect(const PacketRecord& packet, std::uint64_t ordinal,
                            const ModelStore& store, double threshold);

/// Scores every packet (ordinal = position in `packets`), fanning out over
/// `threads` workers. Output is ordered by ordinal.
std::vector<Score> score_all(std::span<const PacketRecord> packets, const ModelStore& store,
                             unsigned threads = 1);
std::vector<Alert> detect_all(std::span<const PacketRecord> packets, const ModelStore& store,
                              double threshold, unsigned threads = 1);

/// Smallest threshold drawn from the observed scores (or just above the
/// largest finite one) at which the fraction of scores >= threshold does
/// not exceed target_fp_rate.
double calibrate_threshold(std::span<const double> scores, double target_fp_rate);
double calibrate_threshold(const ModelStore& store, std::span<const PacketRecord> packets,
                           double target_fp_rate);

/// Text serialization; see README for the layout.
std::string serialize_store(const ModelStore& store);
ModelStore parse_store(std::string_view text);
void save_store(const ModelStore& store, const std::filesystem::path& path);
ModelStore load_store(const std::filesystem::path& path);

inline constexpr int kStoreFormatVersion = 1;

}  // namespace poseidon
