#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "darknet/enrich.hpp"
#include "darknet/features.hpp"
#include "darknet/packet.hpp"
#include "darknet/profile.hpp"

namespace darknet {

// Line-oriented reader; transparently handles gzip input via zlib.
void for_each_line(const std::string& path, const std::function<void(std::string_view)>& fn);

std::string read_file(const std::string& path);
// write + rename so partially written artifacts never shadow good ones
void write_file_atomic(const std::string& path, const std::string& content);

std::uint64_t file_digest(const std::string& path);

// --- JSON Lines records ---------------------------------------------------

std::string packet_to_json(const PacketRecord& pkt);
PacketRecord packet_from_json(std::string_view line);

std::string event_to_json(const DarknetEvent& ev);
DarknetEvent event_from_json(std::string_view line);

std::string profile_to_json(const ScannerProfile& p);
ScannerProfile profile_from_json(std::string_view line);

std::string censys_to_json(const CensysRecord& rec);
CensysRecord censys_from_json(std::string_view line);

std::vector<PacketRecord> read_packets(const std::string& path);
std::vector<DarknetEvent> read_events(const std::string& path);
std::vector<ScannerProfile> read_profiles(const std::string& path);
std::map<std::uint32_t, CensysRecord> read_censys(const std::string& path);

void write_events(const std::string& path, const std::vector<DarknetEvent>& events);
void write_profiles(const std::string& path, const std::vector<ScannerProfile>& profiles);

// --- CSV ------------------------------------------------------------------

// `prefix,value` rows with a header line
PrefixTable read_prefix_table(const std::string& path);

struct LabeledMatrix {
    Matrix values;
    std::vector<std::string> row_ids;
    std::vector<std::string> column_names;
};

// header-bearing CSV, first column is the row id
void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& row_ids,
                      const std::vector<std::string>& column_names);
LabeledMatrix read_matrix_csv(const std::string& path);

void write_labels_csv(const std::string& path, const std::vector<std::string>& row_ids,
                      const std::vector<int>& labels);
// (row_id, label) pairs; label column may be arbitrary strings
std::vector<std::pair<std::string, std::string>> read_labels_csv(const std::string& path);

// schema JSON sidecar (column names, top-u vocabularies, scaler params, bins)
std::string schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const std::string& serialized);

// canonical float formatting used in all CSV artifacts (round-trips exactly)
std::string format_double(double v);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace darknet
