#pragma once

#include "poseidon/ingest.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace poseidon {

inline constexpr double kWeightMin = 0.0;
inline constexpr double kWeightMax = 255.0;

/// Map geometry and training schedule. Defaults are the tuned values: a
/// 12x8 grid, learning rate 0.1, update radius 4.
struct SomConfig {
    int rows = 12;
    int cols = 8;
    double learning_rate = 0.1;   ///< initial rate, in (0, 1]
    double radius = 4.0;          ///< initial neighbourhood radius, >= 0
    int smoothing = 1000;         ///< k in alpha(t) = alpha0 * k / (k + t)
    int max_payload_len = 1460;   ///< input dimension l
    std::uint64_t seed = 1;
    int passes = 1;               ///< times the training sequence is replayed

    std::size_t neuron_count() const { return static_cast<std::size_t>(rows) * cols; }
    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;

    bool operator==(const SomConfig&) const = default;
};

struct NeuronIndex {
    std::size_t index = 0;

    std::size_t row(int cols) const { return index / static_cast<std::size_t>(cols); }
    std::size_t col(int cols) const { return index % static_cast<std::size_t>(cols); }

    auto operator<=>(const NeuronIndex&) const = default;
};

struct BmuResult {
    NeuronIndex neuron;
    double distance = 0.0;
};

/// Zero-pads (or truncates) a payload to `len` real components.
std::vector<double> pad_payload(std::span<const std::uint8_t> payload, std::size_t len);

/// Sum of |x[i] - w[i]|. Lengths must match.
double manhattan_dist(std::span<const double> x, std::span<const double> w);

/// Manhattan distance between the grid cells of two neurons.
double grid_dist(NeuronIndex a, NeuronIndex b, int cols);

/// Learning rate in force after `t` completed steps.
double learning_rate_at(const SomConfig& cfg, std::uint64_t t);
/// Radius in force after `t` of `tau` completed steps.
double radius_at(const SomConfig& cfg, std::uint64_t t, std::uint64_t tau);

class Som {
public:
    /// Weights drawn uniformly from [0, 255) with a generator seeded from
    /// cfg.seed.
    static Som init(const SomConfig& cfg);

    /// Rebuilds a map from stored weights (row-major, neuron by neuron).
    static Som from_weights(const SomConfig& cfg, std::vector<double> weights, bool trained);

    const SomConfig& config() const { return cfg_; }
    std::size_t neuron_count() const { return cfg_.neuron_count(); }
    std::size_t dim() const { return static_cast<std::size_t>(cfg_.max_payload_len); }
    bool trained() const { return trained_; }

    std::span<const double> weights(NeuronIndex n) const;
    std::span<const double> all_weights() const { return weights_; }
    void set_weights(NeuronIndex n, std::span<const double> w);

    /// Lowest-index neuron among those at minimal Manhattan distance.
    BmuResult find_bmu(std::span<const double> x) const;

    /// One pass over `inputs` with tau = inputs.size(). Requires an
    /// untrained map; throws Error(Training) on an empty sequence.
    void train(std::span<const std::vector<double>> inputs);

    /// Pads each payload on the fly and replays the sequence cfg.passes
    /// times, so tau = passes * payloads.size().
    void train_payloads(std::span<const Payload> payloads);

    NeuronIndex classify(std::span<const std::uint8_t> payload) const;

    /// Mean BMU distance over the inputs.
    double quantization_error(std::span<const std::vector<double>> inputs) const;
    double quantization_error_payloads(std::span<const Payload> payloads) const;

    bool operator==(const Som&) const = default;

private:
    Som(const SomConfig& cfg, std::vector<double> weights, bool trained);

    void step(std::span<const double> x, double alpha, double radius);
    void require_untrained() const;

    SomConfig cfg_;
    std::vector<double> weights_;
    bool trained_ = false;
};

}  // namespace poseidon
