#include "poseidon/som.hpp"

#include "poseidon/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace poseidon {

void SomConfig::validate() const {
    if (rows < 1 || cols < 1)
        throw std::invalid_argument("SOM grid must have at least one row and one column");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw std::invalid_argument("SOM learning rate must lie in (0, 1]");
    if (!(radius >= 0.0) || !std::isfinite(radius))
        throw std::invalid_argument("SOM radius must be a finite value >= 0");
    if (smoothing < 1)
        throw std::invalid_argument("SOM smoothing factor must be >= 1");
    if (max_payload_len < 1)
        throw std::invalid_argument("SOM input length must be >= 1");
    if (passes < 1)
        throw std::invalid_argument("SOM training passes must be >= 1");
}

std::vector<double> pad_payload(std::span<const std::uint8_t> payload, std::size_t len) {
    std::vector<double> out(len, 0.0);
    std::size_t n = std::min(len, payload.size());
    for (std::size_t i = 0; i < n; ++i)
        out[i] = payload[i];
    return out;
}

double manhattan_dist(std::span<const double> x, std::span<const double> w) {
    if (x.size() != w.size())
        throw std::invalid_argument("manhattan_dist: length mismatch (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(w.size()) + ")");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        sum += std::fabs(x[i] - w[i]);
    return sum;
}

double grid_dist(NeuronIndex a, NeuronIndex b, int cols) {
    auto ra = static_cast<long>(a.row(cols)), ca = static_cast<long>(a.col(cols));
    auto rb = static_cast<long>(b.row(cols)), cb = static_cast<long>(b.col(cols));
    return static_cast<double>(std::labs(ra - rb) + std::labs(ca - cb));
}

double learning_rate_at(const SomConfig& cfg, std::uint64_t t) {
    double k = cfg.smoothing;
    return cfg.learning_rate * k / (k + static_cast<double>(t));
}

double radius_at(const SomConfig& cfg, std::uint64_t t, std::uint64_t tau) {
    if (tau == 0)
        return cfg.radius;
    return cfg.radius * static_cast<double>(tau - std::min(t, tau)) / static_cast<double>(tau);
}

Som::Som(const SomConfig& cfg, std::vector<double> weights, bool trained)
    : cfg_(cfg), weights_(std::move(weights)), trained_(trained) {}

Som Som::init(const SomConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> w(cfg.neuron_count() * static_cast<std::size_t>(cfg.max_payload_len));
    // 53 random mantissa bits -> [0, 1); keeps the weights identical across
    // standard libraries, unlike std::uniform_real_distribution.
    for (auto& v : w)
        v = static_cast<double>(rng() >> 11) * 0x1.0p-53 * kWeightMax;
    return Som(cfg, std::move(w), false);
}

Som Som::from_weights(const SomConfig& cfg, std::vector<double> weights, bool trained) {
    cfg.validate();
    if (weights.size() != cfg.neuron_count() * static_cast<std::size_t>(cfg.max_payload_len))
        throw std::invalid_argument("SOM weight matrix size does not match the grid");
    return Som(cfg, std::move(weights), trained);
}

std::span<const double> Som::weights(NeuronIndex n) const {
    if (n.index >= neuron_count())
        throw std::out_of_range("neuron index out of range");
    return std::span<const double>(weights_).subspan(n.index * dim(), dim());
}

void Som::set_weights(NeuronIndex n, std::span<const double> w) {
    if (n.index >= neuron_count())
        throw std::out_of_range("neuron index out of range");
    if (w.size() != dim())
        throw std::invalid_argument("weight vector length does not match the SOM dimension");
    std::copy(w.begin(), w.end(), weights_.begin() + static_cast<std::ptrdiff_t>(n.index * dim()));
}

BmuResult Som::find_bmu(std::span<const double> x) const {
    if (x.size() != dim())
        throw std::invalid_argument("find_bmu: input length " + std::to_string(x.size()) +
                                    " does not match SOM dimension " + std::to_string(dim()));
    const std::size_t l = dim();
    BmuResult best{NeuronIndex{0}, std::numeric_limits<double>::infinity()};
    for (std::size_t n = 0; n < neuron_count(); ++n) {
        const double* w = weights_.data() + n * l;
        // Partial sums only grow, so a neuron can be dropped as soon as it
        // passes the current best; survivors get the same sum as manhattan_dist.
        double sum = 0.0;
        std::size_t i = 0;
        while (i < l && sum <= best.distance) {
            std::size_t end = std::min(l, i + 64);
            for (; i < end; ++i)
                sum += std::fabs(x[i] - w[i]);
        }
        if (i == l && sum < best.distance)
            best = {NeuronIndex{n}, sum};
    }
    return best;
}

void Som::require_untrained() const {
    if (trained_)
        throw Error(ErrorKind::Training, "SOM is already trained");
}

void Som::step(std::span<const double> x, double alpha, double radius) {
    const BmuResult bmu = find_bmu(x);
    const std::size_t l = dim();
    for (std::size_t n = 0; n < neuron_count(); ++n) {
        if (grid_dist(NeuronIndex{n}, bmu.neuron, cfg_.cols) > radius)
            continue;
        double* w = weights_.data() + n * l;
        for (std::size_t i = 0; i < l; ++i)
            w[i] = std::clamp(w[i] + alpha * (x[i] - w[i]), kWeightMin, kWeightMax);
    }
}

void Som::train(std::span<const std::vector<double>> inputs) {
    require_untrained();
    if (inputs.empty())
        throw Error(ErrorKind::Training, "cannot train a SOM on an empty input sequence");
    const std::uint64_t tau = inputs.size();
    double alpha = cfg_.learning_rate;
    double radius = cfg_.radius;
    for (std::uint64_t t = 1; t <= tau; ++t) {
        step(inputs[t - 1], alpha, radius);
        alpha = learning_rate_at(cfg_, t);
        radius = radius_at(cfg_, t, tau);
    }
    trained_ = true;
}

void Som::train_payloads(std::span<const Payload> payloads) {
    require_untrained();
    if (payloads.empty())
        throw Error(ErrorKind::Training, "cannot train a SOM on an empty input sequence");
    const std::uint64_t tau = payloads.size() * static_cast<std::uint64_t>(cfg_.passes);
    double alpha = cfg_.learning_rate;
    double radius = cfg_.radius;
    std::uint64_t t = 1;
    for (int pass = 0; pass < cfg_.passes; ++pass) {
        for (const auto& p : payloads) {
            step(pad_payload(p, dim()), alpha, radius);
            alpha = learning_rate_at(cfg_, t);
            radius = radius_at(cfg_, t, tau);
            ++t;
        }
    }
    trained_ = true;
}

NeuronIndex Som::classify(std::span<const std::uint8_t> payload) const {
    if (!trained_)
        throw Error(ErrorKind::Training, "cannot classify with an untrained SOM");
    return find_bmu(pad_payload(payload, dim())).neuron;
}

double Som::quantization_error(std::span<const std::vector<double>> inputs) const {
    if (inputs.empty())
        throw Error(ErrorKind::InvalidArgument, "quantization error needs at least one input");
    double sum = 0.0;
    for (const auto& x : inputs)
        sum += find_bmu(x).distance;
    return sum / static_cast<double>(inputs.size());
}

double Som::quantization_error_payloads(std::span<const Payload> payloads) const {
    if (payloads.empty())
        throw Error(ErrorKind::InvalidArgument, "quantization error needs at least one input");
    double sum = 0.0;
    for (const auto& p : payloads)
        sum += find_bmu(pad_payload(p, dim())).distance;
    return sum / static_cast<double>(payloads.size());
}

}  // namespace poseidon
