#include "darknet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <thread>

#include "darknet/clustering.hpp"
#include "darknet/common.hpp"
#include "darknet/interpret.hpp"
#include "darknet/io.hpp"
#include "darknet/ipv4.hpp"
#include "darknet/profile.hpp"
#include "darknet/rng.hpp"
#include "darknet/scenario.hpp"
#include "json.hpp"

namespace darknet {

namespace {

using nlohmann::json;

// per-day fan-out; tasks are independent and seeded individually, so the
// schedule cannot change any output byte
void parallel_days(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int width = std::min<int>(threads, static_cast<int>(n));
    pool.reserve(static_cast<std::size_t>(width));
    for (int t = 0; t < width; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

[[noreturn]] void fail_stage(const std::string& stage, const std::exception& e, bool numeric) {
    const std::string msg = "stage " + stage + ": " + e.what();
    if (numeric) throw NumericError(msg);
    throw InputError(msg);
}

template <typename Fn>
void run_stage(const std::string& stage, Fn&& fn) {
    try {
        fn();
    } catch (const NumericError& e) {
        fail_stage(stage, e, true);
    } catch (const InputError& e) {
        fail_stage(stage, e, false);
    }
}

std::string day_file(const std::string& dir, const char* stem, std::size_t day_idx,
                     const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s/%s_day%02zu.%s", dir.c_str(), stem, day_idx + 1, ext);
    return buf;
}

}  // namespace

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
    json j;
    j["format"] = "darknet-pipeline-v1";
    j["packet_files"] = cfg.packet_files;
    j["geo"] = cfg.geo_file;
    j["asn"] = cfg.asn_file;
    j["censys"] = cfg.censys_file;
    auto& snaps = j["censys_snapshots"] = json::array();
    for (const auto& [day, path] : cfg.censys_snapshots)
        snaps.push_back({{"day", day}, {"path", path}});
    j["external_labels"] = cfg.external_labels;
    j["out_dir"] = cfg.out_dir;
    j["timeout"] = cfg.ingest.timeout;
    j["slack"] = cfg.ingest.slack;
    j["u"] = cfg.u;
    j["bins"] = cfg.bins;
    j["mode"] = cfg.mode == EncodingMode::OneHot ? "onehot" : "thermo";
    j["mlp"] = {{"latent_dim", cfg.mlp.latent_dim},
                {"hidden_dims", cfg.mlp.hidden_dims},
                {"learning_rate", cfg.mlp.learning_rate},
                {"dropout_prob", cfg.mlp.dropout_prob},
                {"weight_decay", cfg.mlp.weight_decay},
                {"epochs", cfg.mlp.epochs},
                {"batch_size", cfg.mlp.batch_size},
                {"loss_mode", cfg.mlp.loss_mode == LossMode::SquaredEuclidean
                                  ? "squared_euclidean"
                                  : "hamming_surrogate"}};
    j["k"] = cfg.k;
    j["space"] = cfg.space == SignatureSpace::Input ? "input" : "latent";
    j["kappa"] = cfg.kappa;
    j["reference_day"] = cfg.reference_day;
    j["retrain_daily"] = cfg.retrain_daily;
    j["topk"] = cfg.topk;
    j["tree_depth"] = cfg.tree_depth;
    j["tree_mode"] = cfg.tree_mode;
    j["seed"] = cfg.seed;
    return j.dump(2);
}

PipelineConfig pipeline_config_from_json(const std::string& serialized) {
    json j = json::parse(serialized, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "darknet-pipeline-v1")
        throw InputError("not a recognizable pipeline config");
    PipelineConfig cfg;
    cfg.packet_files = j.at("packet_files").get<std::vector<std::string>>();
    cfg.geo_file = j.value("geo", "");
    cfg.asn_file = j.value("asn", "");
    cfg.censys_file = j.value("censys", "");
    for (const auto& snap : j.value("censys_snapshots", json::array()))
        cfg.censys_snapshots.emplace_back(snap.at("day").get<std::string>(),
                                          snap.at("path").get<std::string>());
    cfg.external_labels = j.value("external_labels", "");
    cfg.out_dir = j.value("out_dir", "out");
    cfg.ingest.timeout = j.value("timeout", 600.0);
    cfg.ingest.slack = j.value("slack", 5.0);
    cfg.u = j.value("u", 100);
    cfg.bins = j.value("bins", 10);
    cfg.mode = j.value("mode", "onehot") == "thermo" ? EncodingMode::Thermometer
                                                     : EncodingMode::OneHot;
    if (j.contains("mlp")) {
        const auto& m = j.at("mlp");
        cfg.mlp.latent_dim = m.value("latent_dim", cfg.mlp.latent_dim);
        cfg.mlp.hidden_dims = m.value("hidden_dims", cfg.mlp.hidden_dims);
        cfg.mlp.learning_rate = m.value("learning_rate", cfg.mlp.learning_rate);
        cfg.mlp.dropout_prob = m.value("dropout_prob", cfg.mlp.dropout_prob);
        cfg.mlp.weight_decay = m.value("weight_decay", cfg.mlp.weight_decay);
        cfg.mlp.epochs = m.value("epochs", cfg.mlp.epochs);
        cfg.mlp.batch_size = m.value("batch_size", cfg.mlp.batch_size);
        cfg.mlp.loss_mode = m.value("loss_mode", "squared_euclidean") == "hamming_surrogate"
                                ? LossMode::HammingSurrogate
                                : LossMode::SquaredEuclidean;
    }
    cfg.k = j.value("k", 200);
    cfg.space = j.value("space", "input") == "latent" ? SignatureSpace::Latent
                                                      : SignatureSpace::Input;
    cfg.kappa = j.value("kappa", 5.0);
    cfg.reference_day = j.value("reference_day", 1);
    cfg.retrain_daily = j.value("retrain_daily", false);
    cfg.topk = j.value("topk", 3);
    cfg.tree_depth = j.value("tree_depth", 3);
    cfg.tree_mode = j.value("tree_mode", "greedy");
    cfg.seed = j.value("seed", 0ull);
    return cfg;
}

std::string manifest_to_json(const RunManifest& m) {
    json j;
    j["format"] = "darknet-manifest-v1";
    j["version"] = m.version;
    j["config"] = json::parse(m.config_snapshot);
    auto& inputs = j["inputs"] = json::object();
    for (const auto& [path, digest] : m.inputs) inputs[path] = digest;
    auto& stages = j["stages"] = json::array();
    for (const auto& stage : m.stages) {
        json s;
        s["name"] = stage.name;
        auto& outs = s["outputs"] = json::object();
        for (const auto& [path, digest] : stage.outputs) outs[path] = digest;
        stages.push_back(std::move(s));
    }
    j["seed"] = m.seed;
    return j.dump(2);
}

RunManifest run_pipeline(const PipelineConfig& cfg) {
    if (cfg.packet_files.empty()) throw InputError("pipeline config lists no packet files");
    for (const auto& path : cfg.packet_files)
        if (!std::filesystem::exists(path)) throw InputError("missing input: " + path);
    if (cfg.reference_day < 1 ||
        static_cast<std::size_t>(cfg.reference_day) > cfg.packet_files.size())
        throw InputError("reference_day outside the provided day range");
    std::filesystem::create_directories(cfg.out_dir);

    RunManifest manifest;
    manifest.version = kToolVersion;
    manifest.config_snapshot = pipeline_config_to_json(cfg);
    manifest.seed = cfg.seed;
    for (const auto& path : cfg.packet_files) manifest.inputs[path] = to_hex(file_digest(path));
    for (const auto& path : {cfg.geo_file, cfg.asn_file, cfg.censys_file, cfg.external_labels})
        if (!path.empty()) manifest.inputs[path] = to_hex(file_digest(path));
    for (const auto& [day, path] : cfg.censys_snapshots)
        manifest.inputs[path] = to_hex(file_digest(path));

    const std::size_t n_days = cfg.packet_files.size();
    auto record = [&](const std::string& stage, const std::vector<std::string>& files) {
        StageRecord rec;
        rec.name = stage;
        for (const auto& f : files) rec.outputs[f] = to_hex(file_digest(f));
        manifest.stages.push_back(std::move(rec));
    };

    // ingest
    std::vector<std::string> event_files(n_days);
    run_stage("ingest", [&] {
        parallel_days(n_days, cfg.threads, [&](std::size_t d) {
            auto packets = read_packets(cfg.packet_files[d]);
            IngestStats stats;
            auto events = ingest(packets, cfg.ingest, &stats);
            event_files[d] = day_file(cfg.out_dir, "events", d, "jsonl");
            write_events(event_files[d], events);
        });
    });
    record("ingest", event_files);

    // enrich + aggregate
    Annotations base_annotations;
    std::map<std::string, std::map<std::uint32_t, CensysRecord>> snapshots;
    run_stage("enrich", [&] {
        if (!cfg.geo_file.empty()) base_annotations.geo = read_prefix_table(cfg.geo_file);
        if (!cfg.asn_file.empty()) base_annotations.asn = read_prefix_table(cfg.asn_file);
        if (!cfg.censys_file.empty()) base_annotations.censys = read_censys(cfg.censys_file);
        for (std::size_t i = 0; i + 1 < cfg.censys_snapshots.size(); ++i)
            if (cfg.censys_snapshots[i].first >= cfg.censys_snapshots[i + 1].first)
                throw InputError("censys snapshots must be listed in ascending day order");
        for (const auto& [day, path] : cfg.censys_snapshots) snapshots[day] = read_censys(path);
    });
    std::vector<std::string> profile_files(n_days);
    std::vector<std::vector<ScannerProfile>> profiles(n_days);
    run_stage("enrich", [&] {
        parallel_days(n_days, cfg.threads, [&](std::size_t d) {
            auto events = read_events(event_files[d]);
            Annotations annotations = base_annotations;
            if (!snapshots.empty() && !events.empty()) {
                // closest prior snapshot for this analysis day
                const std::string day = day_of_timestamp(events.front().first_seen).iso();
                auto it = snapshots.upper_bound(day);
                if (it != snapshots.begin()) --it;
                annotations.censys = it->second;
            }
            profiles[d] = aggregate_daily(events, annotations);
            profile_files[d] = day_file(cfg.out_dir, "profiles", d, "jsonl");
            write_profiles(profile_files[d], profiles[d]);
        });
    });
    record("enrich", profile_files);

    // featurize against the reference-day schema
    FeatureSchema schema;
    const std::size_t ref = static_cast<std::size_t>(cfg.reference_day - 1);
    std::vector<std::string> feature_files(n_days);
    std::vector<FeatureMatrix> features(n_days);
    run_stage("featurize", [&] {
        if (profiles[ref].empty()) throw InputError("reference day has no scanners");
        schema = build_schema(profiles[ref], cfg.u, cfg.mode, cfg.bins);
        write_file_atomic(cfg.out_dir + "/schema.json", schema_to_json(schema));
        parallel_days(n_days, cfg.threads, [&](std::size_t d) {
            features[d] = vectorize_all(profiles[d], schema);
            feature_files[d] = day_file(cfg.out_dir, "features", d, "csv");
            write_matrix_csv(feature_files[d], features[d].values, features[d].row_ids,
                             schema.column_names());
        });
    });
    {
        auto files = feature_files;
        files.push_back(cfg.out_dir + "/schema.json");
        record("featurize", files);
    }

    // train (reference day, or per day when retraining daily)
    std::vector<MlpModel> models(cfg.retrain_daily ? n_days : 1);
    std::vector<std::string> model_files;
    run_stage("train", [&] {
        auto train_one = [&](std::size_t d, const std::string& path) {
            MlpConfig mc = cfg.mlp;
            mc.input_dim = schema.width();
            mc.seed = derive_seed(cfg.seed, 0x7a100 + d);
            if (cfg.mode == EncodingMode::Thermometer) mc.loss_mode = LossMode::HammingSurrogate;
            auto [model, report] = train(features[d].values, mc);
            save_model_file(model, path);
            std::string csv = "epoch,train_loss,val_loss,val_metric\n";
            for (std::size_t e = 0; e < report.train_loss.size(); ++e)
                csv += std::to_string(e) + "," + format_double(report.train_loss[e]) + "," +
                       format_double(report.val_loss[e]) + "," +
                       format_double(report.val_metric[e]) + "\n";
            write_file_atomic(path + ".report.csv", csv);
            return model;
        };
        if (cfg.retrain_daily) {
            for (std::size_t d = 0; d < n_days; ++d) {
                const std::string path = day_file(cfg.out_dir, "model", d, "json");
                models[d] = train_one(d, path);
                model_files.push_back(path);
                model_files.push_back(path + ".report.csv");
            }
        } else {
            const std::string path = cfg.out_dir + "/model.json";
            models[0] = train_one(ref, path);
            model_files.push_back(path);
            model_files.push_back(path + ".report.csv");
        }
    });
    record("train", model_files);

    // embed
    std::vector<std::string> embedding_files(n_days);
    std::vector<Matrix> embeddings(n_days);
    run_stage("embed", [&] {
        parallel_days(n_days, cfg.threads, [&](std::size_t d) {
            const MlpModel& model = models[cfg.retrain_daily ? d : 0];
            embeddings[d] = embed(model, features[d].values);
            embedding_files[d] = day_file(cfg.out_dir, "embeddings", d, "csv");
            std::vector<std::string> cols;
            for (std::size_t q = 0; q < embeddings[d].cols; ++q)
                cols.push_back("z" + std::to_string(q));
            write_matrix_csv(embedding_files[d], embeddings[d], features[d].row_ids, cols);
        });
    });
    record("embed", embedding_files);

    // cluster
    std::vector<std::string> label_files(n_days), centroid_files(n_days);
    std::vector<Clustering> clusterings(n_days);
    run_stage("cluster", [&] {
        parallel_days(n_days, cfg.threads, [&](std::size_t d) {
            clusterings[d] =
                kmeans(embeddings[d], cfg.k, derive_seed(cfg.seed, 0xc100 + d));
            label_files[d] = day_file(cfg.out_dir, "labels", d, "csv");
            write_labels_csv(label_files[d], features[d].row_ids, clusterings[d].labels);
            centroid_files[d] = day_file(cfg.out_dir, "centroids", d, "csv");
            std::vector<std::string> ids, cols;
            for (int c = 0; c < clusterings[d].k; ++c) ids.push_back(std::to_string(c));
            for (std::size_t q = 0; q < clusterings[d].centroids.cols; ++q)
                cols.push_back("c" + std::to_string(q));
            write_matrix_csv(centroid_files[d], clusterings[d].centroids, ids, cols);
        });
    });
    {
        auto files = label_files;
        files.insert(files.end(), centroid_files.begin(), centroid_files.end());
        record("cluster", files);
    }

    // evaluate
    run_stage("evaluate", [&] {
        std::map<std::string, std::map<std::string, std::string>> truth;  // day -> ip -> label
        if (!cfg.external_labels.empty()) {
            for (const auto& row : read_ground_truth(cfg.external_labels))
                truth[row.day][row.src_ip] = row.archetype;
        }
        std::string csv = "day,n,k,inertia,silhouette,jaccard\n";
        std::vector<std::string> lines(n_days);
        parallel_days(n_days, cfg.threads, [&](std::size_t d) {
            const auto& clustering = clusterings[d];
            const std::string day =
                profiles[d].empty() ? "?" : profiles[d].front().day.iso();
            double sil = clustering.k > 1 && embeddings[d].rows > 1
                             ? silhouette(embeddings[d], clustering.labels)
                             : 0.0;
            std::string jaccard_text;
            auto it = truth.find(day);
            if (it != truth.end()) {
                std::vector<std::string> raw;
                raw.reserve(features[d].row_ids.size());
                for (const auto& ip : features[d].row_ids) {
                    auto found = it->second.find(ip);
                    raw.push_back(found == it->second.end() ? "?" : found->second);
                }
                jaccard_text =
                    format_double(jaccard_pair(clustering.labels, densify_labels(raw)));
            }
            lines[d] = day + "," + std::to_string(embeddings[d].rows) + "," +
                       std::to_string(clustering.k) + "," + format_double(clustering.inertia) +
                       "," + format_double(sil) + "," + jaccard_text + "\n";
        });
        for (const auto& line : lines) csv += line;
        write_file_atomic(cfg.out_dir + "/evaluation.csv", csv);
    });
    record("evaluate", {cfg.out_dir + "/evaluation.csv"});

    // tree + report
    std::vector<std::string> interpret_files;
    run_stage("report", [&] {
        std::vector<std::string> report_files(n_days), tree_files(n_days), render_files(n_days);
        parallel_days(n_days, cfg.threads, [&](std::size_t d) {
            auto report = cluster_report(clusterings[d].labels, profiles[d], cfg.topk);
            std::string csv =
                "cluster,size,top_ports,top_port_fractions,top_tags,top_tag_fractions,"
                "mirai_coverage,top_countries,top_asns\n";
            for (const auto& row : report) {
                std::string ports, fractions, tags, tag_fractions, countries, asns;
                for (const auto& [p, f] : row.top_ports) {
                    ports += (ports.empty() ? "" : ";") + std::to_string(p);
                    fractions += (fractions.empty() ? "" : ";") + format_double(f);
                }
                for (const auto& [t, f] : row.top_tags) {
                    tags += (tags.empty() ? "" : ";") + t;
                    tag_fractions += (tag_fractions.empty() ? "" : ";") + format_double(f);
                }
                for (const auto& [c, n] : row.top_countries)
                    countries += (countries.empty() ? "" : ";") + c;
                for (const auto& [a, n] : row.top_asns) asns += (asns.empty() ? "" : ";") + a;
                csv += std::to_string(row.cluster) + "," + std::to_string(row.size) + "," +
                       ports + "," + fractions + "," + tags + "," + tag_fractions + "," +
                       format_double(row.mirai_coverage) + "," + countries + "," + asns + "\n";
            }
            report_files[d] = day_file(cfg.out_dir, "report", d, "csv");
            write_file_atomic(report_files[d], csv);

            if (cfg.tree_mode != "off") {
                auto rows = make_interpret_rows(profiles[d], clusterings[d].labels);
                TreeConfig tc;
                tc.max_depth = cfg.tree_depth;
                DecisionTree tree = cfg.tree_mode == "exact" ? fit_tree_exact(rows, tc)
                                                             : fit_tree_greedy(rows, tc);
                tree_files[d] = day_file(cfg.out_dir, "tree", d, "json");
                write_file_atomic(tree_files[d], tree_to_json(tree));
                render_files[d] = day_file(cfg.out_dir, "tree", d, "txt");
                write_file_atomic(render_files[d], render_tree(tree));
            }
        });
        interpret_files = report_files;
        if (cfg.tree_mode != "off") {
            interpret_files.insert(interpret_files.end(), tree_files.begin(), tree_files.end());
            interpret_files.insert(interpret_files.end(), render_files.begin(),
                                   render_files.end());
        }
    });
    record("report", interpret_files);

    // signatures
    std::vector<std::string> signature_files(n_days);
    std::vector<std::pair<std::string, Signature>> signatures(n_days);
    run_stage("signature", [&] {
        const std::uint64_t fingerprint = schema.fingerprint();
        parallel_days(n_days, cfg.threads, [&](std::size_t d) {
            const Matrix& space_matrix =
                cfg.space == SignatureSpace::Input ? features[d].values : embeddings[d];
            Signature sig =
                build_signature(clusterings[d].labels, space_matrix, cfg.space, fingerprint);
            signatures[d] = {profiles[d].empty() ? "?" : profiles[d].front().day.iso(), sig};
            signature_files[d] = day_file(cfg.out_dir, "signature", d, "json");
            write_file_atomic(signature_files[d], signature_to_json(sig));
        });
    });
    record("signature", signature_files);

    // diff
    if (n_days >= 2) {
        run_stage("diff", [&] {
            auto series = diff_series(signatures, cfg.kappa);
            std::string csv = "day,emd,flag\n";
            for (std::size_t i = 0; i < series.emds.size(); ++i)
                csv += series.days[i] + "," + format_double(series.emds[i]) + "," +
                       (series.flags[i] ? "1" : "0") + "\n";
            write_file_atomic(cfg.out_dir + "/series.csv", csv);
        });
        record("diff", {cfg.out_dir + "/series.csv"});
    }

    write_file_atomic(cfg.out_dir + "/manifest.json", manifest_to_json(manifest));
    return manifest;
}

}  // namespace darknet
