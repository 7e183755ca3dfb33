#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace poseidon {

inline constexpr std::size_t kByteValues = 256;

/// Per-model storage footprint: 256 means plus 256 standard deviations.
inline constexpr std::size_t kModelFootprint = 2 * kByteValues;

inline constexpr double kDefaultDistanceSmoothing = 0.001;

using ByteFrequency = std::array<double, kByteValues>;

/// freq[b] = occurrences of b / payload length. The payload must be
/// non-empty (std::invalid_argument otherwise).
ByteFrequency byte_frequency(std::span<const std::uint8_t> payload);

/// Running byte-frequency statistics for one model. Standard deviations are
/// population values derived from the accumulated squared deviations.
struct FeatureVector {
    std::array<double, kByteValues> mean{};
    std::array<double, kByteValues> m2{};
    std::uint64_t count = 0;

    void update(std::span<const std::uint8_t> payload);
    void update(const ByteFrequency& freq);

    double std_dev(std::size_t byte) const;
    std::array<double, kByteValues> std_devs() const;

    /// sum_b |freq[b] - mean[b]| / (stddev[b] + smoothing).
    /// Throws Error(NoModel) when count is zero.
    double distance(std::span<const std::uint8_t> payload,
                    double smoothing = kDefaultDistanceSmoothing) const;
    double distance(const ByteFrequency& freq, double smoothing = kDefaultDistanceSmoothing) const;

    bool operator==(const FeatureVector&) const = default;
};

/// Pooled statistics of two models. Throws Error(InvalidArgument) when
/// both are empty.
FeatureVector merge(const FeatureVector& a, const FeatureVector& b);

/// L1 distance between the mean vectors.
double mean_l1(const FeatureVector& a, const FeatureVector& b);

struct LengthCluster {
    std::uint32_t first_len = 0;
    std::uint32_t last_len = 0;
    FeatureVector fv;

    bool operator==(const LengthCluster&) const = default;
};

struct LengthModel {
    std::uint32_t len = 0;
    FeatureVector fv;
};

/// Merges neighbouring models (adjacent occupied lengths in ascending
/// order) whose mean-L1 distance is below `threshold`, sweeping until no
/// pair qualifies. Input must be sorted by strictly increasing length.
std::vector<LengthCluster> cluster_length_models(std::vector<LengthModel> models,
                                                 double threshold);

}  // namespace poseidon
