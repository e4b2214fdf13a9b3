#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "darknet/changedetect.hpp"
#include "darknet/clustering.hpp"
#include "darknet/common.hpp"
#include "darknet/features.hpp"
#include "darknet/ingest.hpp"
#include "darknet/interpret.hpp"
#include "darknet/io.hpp"
#include "darknet/ipv4.hpp"
#include "darknet/mlp.hpp"
#include "darknet/pipeline.hpp"
#include "darknet/profile.hpp"
#include "darknet/scenario.hpp"

namespace {

using namespace darknet;

std::vector<int> aligned_labels(const std::string& labels_path,
                                const std::vector<std::string>& row_ids) {
    std::map<std::string, std::string> by_id;
    for (auto& [id, label] : read_labels_csv(labels_path)) by_id[id] = label;
    std::vector<std::string> raw;
    raw.reserve(row_ids.size());
    for (const auto& id : row_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw InputError("labels file is missing row " + id);
        raw.push_back(it->second);
    }
    return densify_labels(raw);
}

// line-oriented `key = value` training config
MlpConfig read_mlp_config(const std::string& path) {
    MlpConfig cfg;
    for_each_line(path, [&](std::string_view line) {
        auto trimmed = std::string(line);
        if (auto hash = trimmed.find('#'); hash != std::string::npos) trimmed.resize(hash);
        auto eq = trimmed.find('=');
        if (eq == std::string::npos) return;
        auto strip = [](std::string s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
            return s;
        };
        const std::string key = strip(trimmed.substr(0, eq));
        const std::string value = strip(trimmed.substr(eq + 1));
        if (key.empty() || value.empty()) return;
        if (key == "input_dim") cfg.input_dim = std::stoull(value);
        else if (key == "latent_dim") cfg.latent_dim = std::stoull(value);
        else if (key == "hidden_dims") {
            cfg.hidden_dims.clear();
            for (const auto& part : split_csv_line(value))
                if (!part.empty()) cfg.hidden_dims.push_back(std::stoull(part));
        } else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
        else if (key == "dropout_prob") cfg.dropout_prob = std::stod(value);
        else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
        else if (key == "epochs") cfg.epochs = std::stoull(value);
        else if (key == "batch_size") cfg.batch_size = std::stoull(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "val_fraction") cfg.val_fraction = std::stod(value);
        else if (key == "loss_mode")
            cfg.loss_mode = value == "hamming_surrogate" ? LossMode::HammingSurrogate
                                                         : LossMode::SquaredEuclidean;
        else throw InputError("unknown config key: " + key);
    });
    return cfg;
}

std::vector<InterpretRow> interpret_rows_from_file(const std::string& features_path,
                                                   const std::string& labels_path) {
    if (features_path.size() > 6 &&
        features_path.substr(features_path.size() - 6) == ".jsonl") {
        auto profiles = read_profiles(features_path);
        std::vector<std::string> ids;
        ids.reserve(profiles.size());
        for (const auto& p : profiles) ids.push_back(format_ipv4(p.src_ip));
        return make_interpret_rows(profiles, aligned_labels(labels_path, ids));
    }
    // interpret-matrix CSV: row_id + the 10 numeric columns + the 20 tags
    auto m = read_matrix_csv(features_path);
    const auto& numeric = numeric_feature_names();
    const auto& tags = grouping_tag_names();
    if (m.column_names.size() != kNumericFeatureCount + kGroupingTagCount)
        throw InputError("interpret CSV must carry the 10 numeric and 20 tag columns");
    for (std::size_t j = 0; j < kNumericFeatureCount; ++j)
        if (m.column_names[j] != numeric[j])
            throw InputError("interpret CSV column mismatch: " + m.column_names[j]);
    for (std::size_t t = 0; t < kGroupingTagCount; ++t)
        if (m.column_names[kNumericFeatureCount + t] != tags[t])
            throw InputError("interpret CSV tag column mismatch: " +
                             m.column_names[kNumericFeatureCount + t]);
    auto labels = aligned_labels(labels_path, m.row_ids);
    std::vector<InterpretRow> rows(m.values.rows);
    for (std::size_t i = 0; i < m.values.rows; ++i) {
        for (std::size_t j = 0; j < kNumericFeatureCount; ++j)
            rows[i].numeric[j] = m.values.at(i, j);
        for (std::size_t t = 0; t < kGroupingTagCount; ++t)
            rows[i].tags[t] = m.values.at(i, kNumericFeatureCount + t) != 0.0;
        rows[i].target = labels[i];
    }
    return rows;
}

int run(int argc, char** argv) {
    CLI::App app{"darknet scanner profiling and change detection toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = false;
    app.add_option("--seed", seed, "run-level seed");
    app.add_option("--threads", threads, "worker threads for per-day stages");
    app.add_flag("--deterministic", deterministic, "force single-threaded reductions");

    // ingest
    auto* c_ingest = app.add_subcommand("ingest", "packets -> expiring darknet events");
    std::string in_path, out_path;
    IngestConfig ingest_cfg;
    c_ingest->add_option("--in", in_path, "packet JSONL (optionally gzip)")->required();
    c_ingest->add_option("--out", out_path, "event JSONL")->required();
    c_ingest->add_option("--timeout", ingest_cfg.timeout, "inactivity expiry, seconds");
    c_ingest->add_option("--slack", ingest_cfg.slack, "out-of-order tolerance, seconds");
    c_ingest->callback([&] {
        auto packets = read_packets(in_path);
        IngestStats stats;
        auto events = ingest(packets, ingest_cfg, &stats);
        write_events(out_path, events);
        std::fprintf(stderr, "accepted=%llu rejected_out_of_order=%llu events=%zu\n",
                     static_cast<unsigned long long>(stats.accepted),
                     static_cast<unsigned long long>(stats.rejected_out_of_order), events.size());
    });

    // enrich
    auto* c_enrich = app.add_subcommand("enrich", "events -> annotated daily profiles");
    std::string events_path, geo_path, asn_path, censys_path;
    c_enrich->add_option("--events", events_path)->required();
    c_enrich->add_option("--geo", geo_path, "prefix,value CSV");
    c_enrich->add_option("--asn", asn_path, "prefix,value CSV");
    c_enrich->add_option("--censys", censys_path, "censys snapshot JSONL");
    c_enrich->add_option("--out", out_path)->required();
    c_enrich->callback([&] {
        Annotations ann;
        if (!geo_path.empty()) ann.geo = read_prefix_table(geo_path);
        if (!asn_path.empty()) ann.asn = read_prefix_table(asn_path);
        if (!censys_path.empty()) ann.censys = read_censys(censys_path);
        auto events = read_events(events_path);
        write_profiles(out_path, aggregate_daily(events, ann));
    });

    // featurize
    auto* c_feat = app.add_subcommand("featurize", "profiles -> design matrix + schema");
    std::string profiles_path, schema_path, mode_name = "onehot";
    int u = 100, bins = 10;
    c_feat->add_option("--profiles", profiles_path)->required();
    c_feat->add_option("--schema", schema_path, "schema JSON; reused when it exists")->required();
    c_feat->add_option("--mode", mode_name)->check(CLI::IsMember({"onehot", "thermo"}));
    c_feat->add_option("--u", u, "top-value cutoff per one-hot family");
    c_feat->add_option("--bins", bins, "thermometer bins per numeric feature");
    c_feat->add_option("--out", out_path)->required();
    c_feat->callback([&] {
        auto profiles = read_profiles(profiles_path);
        FeatureSchema schema;
        if (std::filesystem::exists(schema_path)) {
            schema = schema_from_json(read_file(schema_path));
        } else {
            schema = build_schema(profiles, u,
                                  mode_name == "thermo" ? EncodingMode::Thermometer
                                                        : EncodingMode::OneHot,
                                  bins);
            write_file_atomic(schema_path, schema_to_json(schema));
        }
        auto fm = vectorize_all(profiles, schema);
        write_matrix_csv(out_path, fm.values, fm.row_ids, schema.column_names());
    });

    // train
    auto* c_train = app.add_subcommand("train", "fit the autoencoder");
    std::string features_path, config_path, model_path, report_path, train_mode = "mlp";
    c_train->add_option("--features", features_path)->required();
    c_train->add_option("--mode", train_mode)->check(CLI::IsMember({"mlp", "tmlp"}));
    c_train->add_option("--config", config_path, "key = value training config");
    c_train->add_option("--model-out", model_path)->required();
    c_train->add_option("--report", report_path, "per-epoch loss CSV");
    c_train->callback([&] {
        auto m = read_matrix_csv(features_path);
        MlpConfig cfg = config_path.empty() ? MlpConfig{} : read_mlp_config(config_path);
        cfg.input_dim = m.values.cols;
        if (cfg.seed == 0) cfg.seed = seed;
        if (train_mode == "tmlp") cfg.loss_mode = LossMode::HammingSurrogate;
        auto [model, report] = train(m.values, cfg);
        save_model_file(model, model_path);
        if (!report_path.empty()) {
            std::string csv = "epoch,train_loss,val_loss,val_metric\n";
            for (std::size_t e = 0; e < report.train_loss.size(); ++e)
                csv += std::to_string(e) + "," + format_double(report.train_loss[e]) + "," +
                       format_double(report.val_loss[e]) + "," +
                       format_double(report.val_metric[e]) + "\n";
            write_file_atomic(report_path, csv);
        }
        std::fprintf(stderr, "final train loss %.6g, val loss %.6g (%.1fs)\n",
                     report.train_loss.back(), report.val_loss.back(), report.wall_time_sec);
    });

    // embed
    auto* c_embed = app.add_subcommand("embed", "project features into the latent space");
    c_embed->add_option("--model", model_path)->required();
    c_embed->add_option("--features", features_path)->required();
    c_embed->add_option("--out", out_path)->required();
    c_embed->callback([&] {
        auto model = load_model_file(model_path);
        auto m = read_matrix_csv(features_path);
        Matrix z = embed(model, m.values);
        std::vector<std::string> cols;
        for (std::size_t q = 0; q < z.cols; ++q) cols.push_back("z" + std::to_string(q));
        write_matrix_csv(out_path, z, m.row_ids, cols);
    });

    // cluster
    auto* c_cluster = app.add_subcommand("cluster", "k-means over embeddings");
    std::string embeddings_path, centroids_path;
    int k = 200;
    c_cluster->add_option("--embeddings", embeddings_path)->required();
    c_cluster->add_option("--k", k)->required();
    c_cluster->add_option("--seed", seed);
    c_cluster->add_option("--out", out_path)->required();
    c_cluster->add_option("--centroids", centroids_path);
    c_cluster->callback([&] {
        auto m = read_matrix_csv(embeddings_path);
        auto clustering = kmeans(m.values, k, seed);
        write_labels_csv(out_path, m.row_ids, clustering.labels);
        if (!centroids_path.empty()) {
            std::vector<std::string> ids, cols;
            for (int c = 0; c < clustering.k; ++c) ids.push_back(std::to_string(c));
            for (std::size_t q = 0; q < clustering.centroids.cols; ++q)
                cols.push_back("c" + std::to_string(q));
            write_matrix_csv(centroids_path, clustering.centroids, ids, cols);
        }
        std::fprintf(stderr, "k=%d inertia=%.6g iterations=%zu\n", clustering.k,
                     clustering.inertia, clustering.iterations);
    });

    // evaluate
    auto* c_eval = app.add_subcommand("evaluate", "clustering quality metrics");
    std::string labels_path, external_path, stability_arg;
    c_eval->add_option("--embeddings", embeddings_path)->required();
    c_eval->add_option("--labels", labels_path)->required();
    c_eval->add_option("--external", external_path, "row_id,label CSV of domain labels");
    c_eval->add_option("--stability", stability_arg, "bootstrap spec, e.g. B=50,size=50000");
    c_eval->callback([&] {
        auto m = read_matrix_csv(embeddings_path);
        auto labels = aligned_labels(labels_path, m.row_ids);
        std::printf("silhouette,%s\n", format_double(silhouette(m.values, labels)).c_str());
        if (!external_path.empty()) {
            auto external = aligned_labels(external_path, m.row_ids);
            std::printf("jaccard,%s\n", format_double(jaccard_pair(labels, external)).c_str());
        }
        if (!stability_arg.empty()) {
            StabilityConfig cfg;
            cfg.seed = seed;
            for (const auto& part : split_csv_line(stability_arg)) {
                auto eq = part.find('=');
                if (eq == std::string::npos) throw InputError("bad --stability spec");
                const std::string key = part.substr(0, eq), value = part.substr(eq + 1);
                if (key == "B") cfg.rounds = std::stoi(value);
                else if (key == "size") cfg.sample_size = std::stoull(value);
                else throw InputError("bad --stability key: " + key);
            }
            int k_clusters = 1;
            for (int lab : labels) k_clusters = std::max(k_clusters, lab + 1);
            std::printf("stability,%s\n",
                        format_double(stability(m.values, k_clusters, cfg)).c_str());
        }
    });

    // ksweep
    auto* c_sweep = app.add_subcommand("ksweep", "metrics across a list of K");
    std::string klist_arg;
    c_sweep->add_option("--embeddings", embeddings_path)->required();
    c_sweep->add_option("--klist", klist_arg, "ascending comma list, e.g. 10,25,50")->required();
    c_sweep->add_option("--external", external_path);
    c_sweep->add_option("--out", out_path)->required();
    c_sweep->callback([&] {
        auto m = read_matrix_csv(embeddings_path);
        std::vector<int> k_list;
        for (const auto& part : split_csv_line(klist_arg))
            if (!part.empty()) k_list.push_back(std::stoi(part));
        std::vector<int> external;
        if (!external_path.empty()) external = aligned_labels(external_path, m.row_ids);
        auto sweep = k_sweep(m.values, k_list, external_path.empty() ? nullptr : &external, seed);
        std::string csv = "k,jaccard,silhouette,inertia\n";
        for (const auto& row : sweep.rows)
            csv += std::to_string(row.k) + "," +
                   (row.jaccard ? format_double(*row.jaccard) : std::string()) + "," +
                   format_double(row.silhouette) + "," + format_double(row.inertia) + "\n";
        write_file_atomic(out_path, csv);
        std::fprintf(stderr, "suggested knee (advisory): K=%d\n", sweep.suggested_knee);
    });

    // tree
    auto* c_tree = app.add_subcommand("tree", "fit an interpretation tree");
    std::string render_path, tree_mode = "exact";
    TreeConfig tree_cfg;
    c_tree->add_option("--features", features_path, "profiles JSONL or interpret CSV")->required();
    c_tree->add_option("--labels", labels_path)->required();
    c_tree->add_option("--depth", tree_cfg.max_depth);
    c_tree->add_option("--mode", tree_mode)->check(CLI::IsMember({"exact", "greedy"}));
    c_tree->add_option("--min-leaf", tree_cfg.min_leaf);
    c_tree->add_option("--threshold-cap", tree_cfg.threshold_cap);
    c_tree->add_option("--out", out_path)->required();
    c_tree->add_option("--render", render_path);
    c_tree->callback([&] {
        auto rows = interpret_rows_from_file(features_path, labels_path);
        DecisionTree tree = tree_mode == "exact" ? fit_tree_exact(rows, tree_cfg)
                                                 : fit_tree_greedy(rows, tree_cfg);
        write_file_atomic(out_path, tree_to_json(tree));
        if (!render_path.empty()) write_file_atomic(render_path, render_tree(tree));
        std::fprintf(stderr, "depth=%d leaves=%zu accuracy=%.4f\n", tree.depth(),
                     tree.leaf_count(), accuracy(tree, rows));
    });

    // report
    auto* c_report = app.add_subcommand("report", "per-cluster summary table");
    int topk = 3;
    c_report->add_option("--labels", labels_path)->required();
    c_report->add_option("--profiles", profiles_path)->required();
    c_report->add_option("--topk", topk);
    c_report->add_option("--out", out_path)->required();
    c_report->callback([&] {
        auto profiles = read_profiles(profiles_path);
        std::vector<std::string> ids;
        ids.reserve(profiles.size());
        for (const auto& p : profiles) ids.push_back(format_ipv4(p.src_ip));
        auto labels = aligned_labels(labels_path, ids);
        auto report = cluster_report(labels, profiles, topk);
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
            for (const auto& [c2, n2] : row.top_countries)
                countries += (countries.empty() ? "" : ";") + c2;
            for (const auto& [a2, n2] : row.top_asns) asns += (asns.empty() ? "" : ";") + a2;
            csv += std::to_string(row.cluster) + "," + std::to_string(row.size) + "," + ports +
                   "," + fractions + "," + tags + "," + tag_fractions + "," +
                   format_double(row.mirai_coverage) + "," + countries + "," + asns + "\n";
        }
        write_file_atomic(out_path, csv);
    });

    // dnf
    auto* c_dnf = app.add_subcommand("dnf", "internal structure of one cluster");
    std::string tree_path;
    int cluster_id = 0;
    c_dnf->add_option("--tree", tree_path)->required();
    c_dnf->add_option("--cluster", cluster_id)->required();
    c_dnf->callback([&] {
        auto tree = tree_from_json(read_file(tree_path));
        auto dnf = dnf_for_cluster(tree, cluster_id);
        if (dnf.disjuncts.empty()) {
            std::fprintf(stderr, "cluster %d wins no leaf in this tree (empty DNF)\n", cluster_id);
            return;
        }
        for (const auto& d : dnf.disjuncts) {
            std::string conj;
            for (const auto& lit : d.literals)
                conj += (conj.empty() ? "" : " AND ") + lit.render();
            if (conj.empty()) conj = "TRUE";
            std::printf("(%s)  support=%zu precision=%s\n", conj.c_str(), d.support,
                        format_double(d.precision).c_str());
        }
    });

    // signature
    auto* c_sig = app.add_subcommand("signature", "weighted centroid signature of one day");
    std::string space_name = "input";
    c_sig->add_option("--labels", labels_path)->required();
    c_sig->add_option("--features", features_path)->required();
    c_sig->add_option("--space", space_name)->check(CLI::IsMember({"input", "latent"}));
    c_sig->add_option("--schema", schema_path, "schema JSON for the fingerprint");
    c_sig->add_option("--out", out_path)->required();
    c_sig->callback([&] {
        auto m = read_matrix_csv(features_path);
        auto labels = aligned_labels(labels_path, m.row_ids);
        std::uint64_t fingerprint = 0;
        if (!schema_path.empty())
            fingerprint = schema_from_json(read_file(schema_path)).fingerprint();
        auto sig = build_signature(labels, m.values,
                                   space_name == "latent" ? SignatureSpace::Latent
                                                          : SignatureSpace::Input,
                                   fingerprint);
        write_file_atomic(out_path, signature_to_json(sig));
    });

    // diff
    auto* c_diff = app.add_subcommand("diff", "EMD series over day signatures");
    std::vector<std::string> sig_paths;
    double kappa = 5.0;
    c_diff->add_option("--sigs", sig_paths, "signature files in day order")->required();
    c_diff->add_option("--kappa", kappa, "flag threshold = median + kappa*MAD");
    c_diff->add_option("--out", out_path)->required();
    c_diff->callback([&] {
        std::vector<std::pair<std::string, Signature>> sigs;
        for (const auto& path : sig_paths) {
            std::string stem = std::filesystem::path(path).stem().string();
            sigs.emplace_back(stem, signature_from_json(read_file(path)));
        }
        auto series = diff_series(sigs, kappa);
        std::string csv = "day,emd,flag\n";
        for (std::size_t i = 0; i < series.emds.size(); ++i)
            csv += series.days[i] + "," + format_double(series.emds[i]) + "," +
                   (series.flags[i] ? "1" : "0") + "\n";
        write_file_atomic(out_path, csv);
    });

    // synth
    auto* c_synth = app.add_subcommand("synth", "generate a labeled synthetic scenario");
    std::string spec_path, synth_out_dir;
    c_synth->add_option("--spec", spec_path, "scenario JSON")->required();
    c_synth->add_option("--out-dir", synth_out_dir)->required();
    c_synth->callback([&] {
        auto spec = scenario_from_json(read_file(spec_path));
        auto gen = generate_scenario(spec, synth_out_dir);
        std::fprintf(stderr, "wrote %zu day files under %s\n", gen.packet_files.size(),
                     synth_out_dir.c_str());
    });

    // pipeline
    auto* c_pipe = app.add_subcommand("pipeline", "run every stage end to end");
    c_pipe->add_option("--config", config_path)->required();
    c_pipe->callback([&] {
        auto cfg = pipeline_config_from_json(read_file(config_path));
        if (seed != 0) cfg.seed = seed;
        cfg.threads = deterministic ? 1 : std::max(1, threads);
        cfg.deterministic = deterministic || cfg.threads == 1;
        auto manifest = run_pipeline(cfg);
        std::fprintf(stderr, "pipeline complete: %zu stages, manifest at %s/manifest.json\n",
                     manifest.stages.size(), cfg.out_dir.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // bad arguments are input errors
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const darknet::InputError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 2;
    } catch (const darknet::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
