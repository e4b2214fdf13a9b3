#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darknet/matrix.hpp"
#include "darknet/profile.hpp"

namespace darknet {

enum class EncodingMode { OneHot, Thermometer };

inline constexpr std::size_t kNumericFeatureCount = 10;
// total_packets, total_bytes, total_lifetime, num_ports, avg_lifetime,
// avg_packet_size, min/max unique dsts, min/max unique /24s
const std::vector<std::string>& numeric_feature_names();
std::array<double, kNumericFeatureCount> numeric_features(const ScannerProfile& p);

// Log-scale bin edges for one numeric feature. A constant feature collapses
// to a single flagged edge.
struct ThermometerBins {
    std::vector<double> edges;  // strictly increasing
    bool degenerate = false;
};

// bit k = 1 iff value >= edges[k]; output is always 1^k 0^(m-k)
std::vector<std::uint8_t> thermometer(double value, const std::vector<double>& edges);

// Geometric (log base 2) edges from the smallest positive value to the max.
ThermometerBins fit_feature_bins(const std::vector<double>& values, int bins_per_feature);

struct FeatureSchema {
    int u = 100;                 // top-value cutoff per one-hot family
    EncodingMode mode = EncodingMode::OneHot;
    int bins_per_feature = 10;   // thermometer mode only
    std::vector<std::uint16_t> top_ports;         // ranked by distinct sources, ties ascending
    std::vector<std::string> top_protocols;       // ties lexicographic
    std::vector<std::uint16_t> top_censys_ports;
    std::vector<std::string> top_censys_tags;
    // log1p min-max scaler parameters per numeric column (one-hot mode)
    std::vector<double> scale_min;  // of log1p(value)
    std::vector<double> scale_max;
    std::vector<ThermometerBins> bins;  // per numeric column (thermometer mode)

    std::size_t numeric_width() const;
    std::size_t width() const;  // total P
    std::vector<std::string> column_names() const;
    std::uint64_t fingerprint() const;
};

// Ranks each family's values by the number of distinct sources carrying them
// and fits the numeric transform; requires non-empty input.
FeatureSchema build_schema(const std::vector<ScannerProfile>& profiles, int u,
                           EncodingMode mode = EncodingMode::OneHot, int bins_per_feature = 10);

struct FeatureMatrix {
    Matrix values;
    std::vector<std::string> row_ids;  // src_ip strings
    FeatureSchema schema;

    std::size_t rows() const { return values.rows; }
    std::size_t cols() const { return values.cols; }
};

// One profile -> one fixed-width row. Values outside a family's top-u light
// that family's "other" indicator.
std::vector<double> vectorize(const ScannerProfile& profile, const FeatureSchema& schema);

FeatureMatrix vectorize_all(const std::vector<ScannerProfile>& profiles,
                            const FeatureSchema& schema);

}  // namespace darknet
