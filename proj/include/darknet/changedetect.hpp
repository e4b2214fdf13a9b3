#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darknet/matrix.hpp"

namespace darknet {

enum class SignatureSpace { Input, Latent };

// Weighted cluster-centroid summary of one day's clustering.
struct Signature {
    SignatureSpace space = SignatureSpace::Input;
    std::uint64_t schema_fingerprint = 0;
    std::vector<std::vector<double>> means;  // one per non-empty cluster, ascending id
    std::vector<double> weights;             // cluster fractions, sum to 1

    std::size_t size() const { return means.size(); }
    std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
};

Signature build_signature(const std::vector<int>& labels, const Matrix& X, SignatureSpace space,
                          std::uint64_t schema_fingerprint = 0);

struct TransportPlan {
    Matrix flow;  // |A| x |B|, non-negative, marginals = signature weights
    double cost = 0.0;
};

// Balanced optimal transport with Euclidean ground distance, solved to
// optimality by a transportation simplex (epsilon-perturbed demands break
// degeneracy; optimality is certified by reduced costs before returning).
// Symmetric by construction: both argument orders solve the same
// canonically-oriented problem.
double emd(const Signature& a, const Signature& b, TransportPlan* plan = nullptr);

struct DistanceSeries {
    std::vector<std::string> days;  // day label of the later day of each pair
    std::vector<double> emds;
    std::vector<bool> flags;
    double median = 0.0;
    double mad = 0.0;
    double kappa = 5.0;
};

// Consecutive-day EMDs; day t is flagged when emd(t-1,t) > median + kappa*MAD.
DistanceSeries diff_series(const std::vector<std::pair<std::string, Signature>>& signatures,
                           double kappa = 5.0);

std::string signature_to_json(const Signature& sig);
Signature signature_from_json(const std::string& serialized);

}  // namespace darknet
