#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "darknet/changedetect.hpp"
#include "darknet/clustering.hpp"
#include "darknet/common.hpp"
#include "darknet/features.hpp"
#include "darknet/interpret.hpp"
#include "darknet/mlp.hpp"

namespace py = pybind11;
using namespace darknet;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw InputError("expected a 2-D float array");
    Matrix m(static_cast<std::size_t>(arr.shape(0)), static_cast<std::size_t>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + m.rows * m.cols, m.data.begin());
    return m;
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> arr({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
    return arr;
}

Signature make_signature(const py::array_t<double, py::array::c_style | py::array::forcecast>& means,
                         const std::vector<double>& weights) {
    Matrix m = to_matrix(means);
    if (m.rows != weights.size()) throw InputError("means and weights disagree on size");
    Signature sig;
    for (std::size_t i = 0; i < m.rows; ++i) {
        sig.means.emplace_back(m.row(i).begin(), m.row(i).end());
        sig.weights.push_back(weights[i]);
    }
    return sig;
}

MlpConfig config_from_kwargs(std::size_t latent_dim, const std::vector<std::size_t>& hidden_dims,
                             double learning_rate, double dropout_prob, double weight_decay,
                             std::size_t epochs, std::size_t batch_size, std::uint64_t seed,
                             const std::string& loss_mode) {
    MlpConfig cfg;
    cfg.latent_dim = latent_dim;
    cfg.hidden_dims = hidden_dims;
    cfg.learning_rate = learning_rate;
    cfg.dropout_prob = dropout_prob;
    cfg.weight_decay = weight_decay;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    cfg.loss_mode = loss_mode == "hamming_surrogate" ? LossMode::HammingSurrogate
                                                     : LossMode::SquaredEuclidean;
    return cfg;
}

std::vector<InterpretRow> rows_from_arrays(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& numeric,
    const py::array_t<bool, py::array::c_style | py::array::forcecast>& tags,
    const std::vector<int>& labels) {
    Matrix num = to_matrix(numeric);
    if (num.cols != kNumericFeatureCount)
        throw InputError("numeric block must have 10 columns");
    if (tags.ndim() != 2 || static_cast<std::size_t>(tags.shape(1)) != kGroupingTagCount)
        throw InputError("tag block must have 20 columns");
    if (static_cast<std::size_t>(tags.shape(0)) != num.rows || labels.size() != num.rows)
        throw InputError("numeric, tags and labels disagree on the row count");
    std::vector<InterpretRow> rows(num.rows);
    for (std::size_t i = 0; i < num.rows; ++i) {
        for (std::size_t j = 0; j < kNumericFeatureCount; ++j)
            rows[i].numeric[j] = num.at(i, j);
        for (std::size_t t = 0; t < kGroupingTagCount; ++t)
            rows[i].tags[t] = *tags.data(i, t);
        rows[i].target = labels[i];
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "darknet scanner profiling core: encodings, autoencoder, k-means, "
              "cluster metrics, decision trees and EMD change detection";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("thermometer", &thermometer, py::arg("value"), py::arg("edges"),
          "Monotone prefix-of-ones encoding: bit k is set iff value >= edges[k].");
    m.def(
        "fit_bins",
        [](const std::vector<double>& values, int bins) {
            auto b = fit_feature_bins(values, bins);
            return py::make_tuple(b.edges, b.degenerate);
        },
        py::arg("values"), py::arg("bins") = 10,
        "Geometric (log base 2) bin edges between the smallest positive value and the max.");

    m.def(
        "kmeans",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& Z, int k,
           std::uint64_t seed, std::size_t max_iter, double tol) {
            auto c = kmeans(to_matrix(Z), k, seed, max_iter, tol);
            return py::make_tuple(c.labels, from_matrix(c.centroids), c.inertia, c.iterations);
        },
        py::arg("Z"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 300,
        py::arg("tol") = 1e-6,
        "Lloyd iterations from k-means++ seeding; returns (labels, centroids, inertia, iters).");

    m.def(
        "silhouette",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& Z,
           const std::vector<int>& labels) { return silhouette(to_matrix(Z), labels); },
        py::arg("Z"), py::arg("labels"));

    m.def("jaccard_pair", &jaccard_pair, py::arg("labels"), py::arg("external"),
          "Pair-count Jaccard between a clustering and an external partition.");
    m.def("jaccard_set", &jaccard_set, py::arg("a"), py::arg("b"));

    m.def(
        "stability",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& Z, int k,
           int rounds, std::size_t sample_size, std::uint64_t seed) {
            StabilityConfig cfg;
            cfg.rounds = rounds;
            cfg.sample_size = sample_size;
            cfg.seed = seed;
            return stability(to_matrix(Z), k, cfg);
        },
        py::arg("Z"), py::arg("k"), py::arg("rounds") = 50, py::arg("sample_size") = 50000,
        py::arg("seed") = 0, "Bootstrap best-match Jaccard stability score.");

    m.def(
        "emd",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& means_a,
           const std::vector<double>& weights_a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& means_b,
           const std::vector<double>& weights_b, bool return_plan) -> py::object {
            Signature a = make_signature(means_a, weights_a);
            Signature b = make_signature(means_b, weights_b);
            if (!return_plan) return py::float_(emd(a, b));
            TransportPlan plan;
            const double value = emd(a, b, &plan);
            return py::make_tuple(value, from_matrix(plan.flow));
        },
        py::arg("means_a"), py::arg("weights_a"), py::arg("means_b"), py::arg("weights_b"),
        py::arg("return_plan") = false,
        "Earth Mover's Distance between weighted centroid signatures.");

    m.def(
        "build_signature",
        [](const std::vector<int>& labels,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& X) {
            auto sig = build_signature(labels, to_matrix(X), SignatureSpace::Input);
            Matrix means(sig.size(), sig.dim());
            for (std::size_t i = 0; i < sig.size(); ++i)
                std::copy(sig.means[i].begin(), sig.means[i].end(), means.row(i).begin());
            return py::make_tuple(from_matrix(means), sig.weights);
        },
        py::arg("labels"), py::arg("X"),
        "Per-cluster (mean, weight) signature; returns (means, weights).");

    py::class_<MlpModel>(m, "Autoencoder")
        .def_property_readonly("input_dim", &MlpModel::input_dim)
        .def_property_readonly("latent_dim", &MlpModel::latent_dim)
        .def(
            "embed",
            [](const MlpModel& model,
               const py::array_t<double, py::array::c_style | py::array::forcecast>& X) {
                return from_matrix(embed(model, to_matrix(X)));
            },
            py::arg("X"))
        .def(
            "reconstruct",
            [](const MlpModel& model,
               const py::array_t<double, py::array::c_style | py::array::forcecast>& X) {
                return from_matrix(decode(model, embed(model, to_matrix(X))));
            },
            py::arg("X"))
        .def("save", [](const MlpModel& model, const std::string& path) {
            save_model_file(model, path);
        });

    m.def("load_autoencoder", &load_model_file, py::arg("path"));

    m.def(
        "train_autoencoder",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& X,
           std::size_t latent_dim, const std::vector<std::size_t>& hidden_dims,
           double learning_rate, double dropout_prob, double weight_decay, std::size_t epochs,
           std::size_t batch_size, std::uint64_t seed, const std::string& loss_mode) {
            MlpConfig cfg = config_from_kwargs(latent_dim, hidden_dims, learning_rate,
                                               dropout_prob, weight_decay, epochs, batch_size,
                                               seed, loss_mode);
            auto [model, report] = train(to_matrix(X), cfg);
            return py::make_tuple(std::move(model), report.train_loss, report.val_loss);
        },
        py::arg("X"), py::arg("latent_dim") = 50,
        py::arg("hidden_dims") = std::vector<std::size_t>{1000}, py::arg("learning_rate") = 0.001,
        py::arg("dropout_prob") = 0.001, py::arg("weight_decay") = 0.001, py::arg("epochs") = 100,
        py::arg("batch_size") = 2000, py::arg("seed") = 0,
        py::arg("loss_mode") = "squared_euclidean",
        "Adam-trained fully connected autoencoder; returns (model, train_loss, val_loss).");

    m.def(
        "fit_tree",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& numeric,
           const py::array_t<bool, py::array::c_style | py::array::forcecast>& tags,
           const std::vector<int>& labels, int max_depth, std::size_t min_leaf,
           const std::string& mode) {
            auto rows = rows_from_arrays(numeric, tags, labels);
            TreeConfig cfg;
            cfg.max_depth = max_depth;
            cfg.min_leaf = min_leaf;
            DecisionTree tree =
                mode == "greedy" ? fit_tree_greedy(rows, cfg) : fit_tree_exact(rows, cfg);
            return py::make_tuple(tree_to_json(tree), accuracy(tree, rows));
        },
        py::arg("numeric"), py::arg("tags"), py::arg("labels"), py::arg("max_depth") = 3,
        py::arg("min_leaf") = 10, py::arg("mode") = "exact",
        "Axis-aligned classification tree over the interpretation features; returns "
        "(tree_json, training_accuracy).");

    m.attr("__version__") = kToolVersion;
    m.attr("GROUPING_TAGS") = std::vector<std::string>(grouping_tag_names().begin(),
                                                       grouping_tag_names().end());
    m.attr("NUMERIC_FEATURES") = numeric_feature_names();
}
