#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "darknet/changedetect.hpp"
#include "darknet/features.hpp"
#include "darknet/ingest.hpp"
#include "darknet/mlp.hpp"

namespace darknet {

struct PipelineConfig {
    std::vector<std::string> packet_files;  // one per day, ascending by day
    std::string geo_file;
    std::string asn_file;
    std::string censys_file;
    // dated snapshots (day, path), ascending; each analysis day uses the
    // closest prior snapshot and censys_file is the fallback
    std::vector<std::pair<std::string, std::string>> censys_snapshots;
    std::string external_labels;  // optional `day,src_ip,label` ground truth
    std::string out_dir = "out";

    IngestConfig ingest;
    int u = 100;
    int bins = 10;
    EncodingMode mode = EncodingMode::OneHot;
    MlpConfig mlp;  // input_dim is derived from the schema
    int k = 200;
    SignatureSpace space = SignatureSpace::Input;
    double kappa = 5.0;
    // schema and autoencoder come from this day and are reused everywhere, so
    // day-over-day EMD reflects traffic change rather than representation
    // drift; retrain_daily switches to per-day models
    int reference_day = 1;
    bool retrain_daily = false;
    int topk = 3;
    int tree_depth = 3;
    std::string tree_mode = "greedy";  // greedy | exact | off
    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = true;
};

PipelineConfig pipeline_config_from_json(const std::string& serialized);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

struct StageRecord {
    std::string name;
    std::map<std::string, std::string> outputs;  // path -> digest
};

struct RunManifest {
    std::string version;
    std::string config_snapshot;  // canonical JSON
    std::map<std::string, std::string> inputs;  // path -> digest
    std::vector<StageRecord> stages;
    std::uint64_t seed = 0;
};

std::string manifest_to_json(const RunManifest& manifest);

// Runs ingest -> enrich -> featurize -> train -> embed -> cluster -> evaluate
// -> tree/report -> signature -> diff, persisting every intermediate artifact
// under out_dir and writing manifest.json atomically at the end. A failing
// stage aborts with the stage named in the error.
RunManifest run_pipeline(const PipelineConfig& cfg);

}  // namespace darknet
