#include "poseidon/payl.hpp"

#include "poseidon/error.hpp"

#include <cmath>
#include <stdexcept>

namespace poseidon {

ByteFrequency byte_frequency(std::span<const std::uint8_t> payload) {
    if (payload.empty())
        throw std::invalid_argument("byte_frequency: empty payload");
    std::array<std::uint64_t, kByteValues> counts{};
    for (auto b : payload)
        ++counts[b];
    ByteFrequency freq{};
    const double len = static_cast<double>(payload.size());
    for (std::size_t b = 0; b < kByteValues; ++b)
        freq[b] = static_cast<double>(counts[b]) / len;
    return freq;
}

void FeatureVector::update(std::span<const std::uint8_t> payload) {
    update(byte_frequency(payload));
}

void FeatureVector::update(const ByteFrequency& freq) {
    ++count;
    const double n = static_cast<double>(count);
    for (std::size_t b = 0; b < kByteValues; ++b) {
        double delta = freq[b] - mean[b];
        mean[b] += delta / n;
        m2[b] += delta * (freq[b] - mean[b]);
    }
}

double FeatureVector::std_dev(std::size_t byte) const {
    if (count == 0)
        return 0.0;
    return std::sqrt(m2[byte] / static_cast<double>(count));
}

std::array<double, kByteValues> FeatureVector::std_devs() const {
    std::array<double, kByteValues> out{};
    for (std::size_t b = 0; b < kByteValues; ++b)
        out[b] = std_dev(b);
    return out;
}

double FeatureVector::distance(std::span<const std::uint8_t> payload, double smoothing) const {
    return distance(byte_frequency(payload), smoothing);
}

double FeatureVector::distance(const ByteFrequency& freq, double smoothing) const {
    if (count == 0)
        throw Error(ErrorKind::NoModel, "feature vector has no observations");
    if (!(smoothing > 0.0))
        throw std::invalid_argument("distance smoothing must be > 0");
    double sum = 0.0;
    for (std::size_t b = 0; b < kByteValues; ++b)
        sum += std::fabs(freq[b] - mean[b]) / (std_dev(b) + smoothing);
    return sum;
}

FeatureVector merge(const FeatureVector& a, const FeatureVector& b) {
    if (a.count == 0 && b.count == 0)
        throw Error(ErrorKind::InvalidArgument, "cannot merge two empty feature vectors");
    if (b.count == 0)
        return a;
    if (a.count == 0)
        return b;
    FeatureVector out;
    out.count = a.count + b.count;
    const double na = static_cast<double>(a.count);
    const double nb = static_cast<double>(b.count);
    const double n = static_cast<double>(out.count);
    for (std::size_t i = 0; i < kByteValues; ++i) {
        double delta = b.mean[i] - a.mean[i];
        out.mean[i] = a.mean[i] + delta * nb / n;
        out.m2[i] = a.m2[i] + b.m2[i] + delta * delta * na * nb / n;
    }
    return out;
}

double mean_l1(const FeatureVector& a, const FeatureVector& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < kByteValues; ++i)
        sum += std::fabs(a.mean[i] - b.mean[i]);
    return sum;
}

std::vector<LengthCluster> cluster_length_models(std::vector<LengthModel> models,
                                                 double threshold) {
    std::vector<LengthCluster> clusters;
    clusters.reserve(models.size());
    for (auto& m : models) {
        if (!clusters.empty() && m.len <= clusters.back().last_len)
            throw std::invalid_argument("length models must be strictly increasing by length");
        clusters.push_back({m.len, m.len, std::move(m.fv)});
    }
    // Merging changes a cluster's mean, which can bring it under the
    // threshold against its left neighbour, so sweep until stable.
    bool merged = true;
    while (merged) {
        merged = false;
        std::size_t i = 0;
        while (i + 1 < clusters.size()) {
            if (mean_l1(clusters[i].fv, clusters[i + 1].fv) < threshold) {
                clusters[i].fv = merge(clusters[i].fv, clusters[i + 1].fv);
                clusters[i].last_len = clusters[i + 1].last_len;
                clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(i + 1));
                merged = true;
            } else {
                ++i;
            }
        }
    }
    return clusters;
}

}  // namespace poseidon
