#include "darknet/mlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "darknet/common.hpp"
#include "darknet/rng.hpp"
#include "json.hpp"

namespace darknet {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LayerKind {
    bool relu = false;     // hidden layers
    bool dropout = false;  // hidden layers, training only
};

// encoder hidden layers are ReLU+dropout, the latent layer is linear;
// decoder hidden layers are ReLU+dropout, the final layer stays linear here
// (the loss interprets it as logits in hamming-surrogate mode)
std::vector<LayerKind> layer_kinds(const MlpModel& model) {
    std::vector<LayerKind> kinds;
    for (std::size_t l = 0; l < model.encoder.size(); ++l)
        kinds.push_back({l + 1 < model.encoder.size(), l + 1 < model.encoder.size()});
    for (std::size_t l = 0; l < model.decoder.size(); ++l)
        kinds.push_back({l + 1 < model.decoder.size(), l + 1 < model.decoder.size()});
    return kinds;
}

std::vector<const DenseLayer*> all_layers(const MlpModel& model) {
    std::vector<const DenseLayer*> layers;
    for (const auto& l : model.encoder) layers.push_back(&l);
    for (const auto& l : model.decoder) layers.push_back(&l);
    return layers;
}

std::vector<DenseLayer*> all_layers(MlpModel& model) {
    std::vector<DenseLayer*> layers;
    for (auto& l : model.encoder) layers.push_back(&l);
    for (auto& l : model.decoder) layers.push_back(&l);
    return layers;
}

// Z = A * W^T + b
Matrix affine_forward(const Matrix& a, const DenseLayer& layer) {
    const std::size_t batch = a.rows, in = layer.weights.cols, out = layer.weights.rows;
    Matrix z(batch, out);
    for (std::size_t i = 0; i < batch; ++i) {
        auto arow = a.row(i);
        auto zrow = z.row(i);
        for (std::size_t o = 0; o < out; ++o) {
            auto wrow = layer.weights.row(o);
            double acc = layer.bias[o];
            for (std::size_t k = 0; k < in; ++k) acc += arow[k] * wrow[k];
            zrow[o] = acc;
        }
    }
    return z;
}

struct ForwardTrace {
    std::vector<Matrix> activations;  // activations[0] = input, one per layer after
    std::vector<Matrix> pre;          // pre-activation per layer
    std::vector<Matrix> masks;        // dropout masks (empty when inactive)
};

ForwardTrace forward_pass(const MlpModel& model, const Matrix& batch, Rng* dropout_rng) {
    auto layers = all_layers(model);
    auto kinds = layer_kinds(model);
    ForwardTrace t;
    t.activations.reserve(layers.size() + 1);
    t.pre.reserve(layers.size());
    t.masks.resize(layers.size());
    t.activations.push_back(batch);
    const double p = model.config.dropout_prob;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix z = affine_forward(t.activations.back(), *layers[l]);
        t.pre.push_back(z);
        Matrix a = t.pre.back();
        if (kinds[l].relu) {
            for (double& v : a.data) v = v > 0 ? v : 0.0;
            if (dropout_rng && kinds[l].dropout && p > 0) {
                Matrix mask(a.rows, a.cols);
                const double keep = 1.0 - p;
                for (std::size_t i = 0; i < mask.data.size(); ++i)
                    mask.data[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
                for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] *= mask.data[i];
                t.masks[l] = std::move(mask);
            }
        }
        t.activations.push_back(std::move(a));
    }
    return t;
}

double batch_reconstruction_loss(const MlpModel& model, const Matrix& batch,
                                 const Matrix& final_logits) {
    double total = 0.0;
    if (model.config.loss_mode == LossMode::SquaredEuclidean) {
        for (std::size_t i = 0; i < batch.data.size(); ++i) {
            double d = final_logits.data[i] - batch.data[i];
            total += d * d;
        }
    } else {
        for (std::size_t i = 0; i < batch.data.size(); ++i) {
            double l = final_logits.data[i];
            total += softplus(l) - batch.data[i] * l;
        }
    }
    return total / static_cast<double>(batch.rows);
}

// gradient of the mean per-sample loss w.r.t. the final pre-activation
Matrix output_delta(const MlpModel& model, const Matrix& batch, const Matrix& final_logits) {
    Matrix delta(batch.rows, batch.cols);
    const double inv_b = 1.0 / static_cast<double>(batch.rows);
    if (model.config.loss_mode == LossMode::SquaredEuclidean) {
        for (std::size_t i = 0; i < batch.data.size(); ++i)
            delta.data[i] = 2.0 * (final_logits.data[i] - batch.data[i]) * inv_b;
    } else {
        for (std::size_t i = 0; i < batch.data.size(); ++i)
            delta.data[i] = (sigmoid(final_logits.data[i]) - batch.data[i]) * inv_b;
    }
    return delta;
}

struct BackwardResult {
    double loss = 0.0;  // regularizer included
    std::vector<double> grad;
};

BackwardResult backward_pass(const MlpModel& model, const Matrix& batch, double weight_decay,
                             Rng* dropout_rng) {
    auto layers = all_layers(model);
    auto kinds = layer_kinds(model);
    ForwardTrace t = forward_pass(model, batch, dropout_rng);

    BackwardResult res;
    res.loss = batch_reconstruction_loss(model, batch, t.activations.back()) +
               weight_decay * model.parameter_norm_sq();

    std::vector<Matrix> grad_w(layers.size());
    std::vector<std::vector<double>> grad_b(layers.size());

    Matrix delta = output_delta(model, batch, t.activations.back());
    for (std::size_t li = layers.size(); li-- > 0;) {
        const DenseLayer& layer = *layers[li];
        const Matrix& a_prev = t.activations[li];
        const std::size_t in = layer.weights.cols, out = layer.weights.rows;

        grad_w[li] = Matrix(out, in);
        grad_b[li].assign(out, 0.0);
        Matrix d_prev(batch.rows, in);
        for (std::size_t i = 0; i < batch.rows; ++i) {
            auto drow = delta.row(i);
            auto arow = a_prev.row(i);
            auto prow = d_prev.row(i);
            for (std::size_t o = 0; o < out; ++o) {
                const double g = drow[o];
                if (g == 0.0) continue;
                grad_b[li][o] += g;
                auto gw = grad_w[li].row(o);
                auto w = layer.weights.row(o);
                for (std::size_t k = 0; k < in; ++k) {
                    gw[k] += g * arow[k];
                    prow[k] += g * w[k];
                }
            }
        }
        if (li > 0) {
            // through the previous layer's dropout mask and ReLU gate
            if (!t.masks[li - 1].data.empty()) {
                for (std::size_t i = 0; i < d_prev.data.size(); ++i)
                    d_prev.data[i] *= t.masks[li - 1].data[i];
            }
            if (kinds[li - 1].relu) {
                const Matrix& z_prev = t.pre[li - 1];
                for (std::size_t i = 0; i < d_prev.data.size(); ++i)
                    if (z_prev.data[i] <= 0) d_prev.data[i] = 0.0;
            }
        }
        delta = std::move(d_prev);
    }

    res.grad.reserve(flatten_parameters(model).size());
    for (std::size_t li = 0; li < layers.size(); ++li) {
        res.grad.insert(res.grad.end(), grad_w[li].data.begin(), grad_w[li].data.end());
        res.grad.insert(res.grad.end(), grad_b[li].begin(), grad_b[li].end());
    }
    // d/dp of weight_decay * |params|^2
    if (weight_decay != 0.0) {
        auto flat = flatten_parameters(model);
        for (std::size_t i = 0; i < flat.size(); ++i) res.grad[i] += 2.0 * weight_decay * flat[i];
    }
    return res;
}

Matrix forward_inference(const MlpModel& model, const Matrix& X) {
    return forward_pass(model, X, nullptr).activations.back();
}

}  // namespace

void MlpConfig::validate() const {
    if (input_dim == 0) throw InputError("input_dim must be set");
    if (latent_dim >= input_dim)
        throw NumericError("latent_dim must be smaller than input_dim (no compression)");
    if (learning_rate < 0) throw InputError("learning_rate must be non-negative");
    if (dropout_prob < 0 || dropout_prob >= 1) throw InputError("dropout_prob must be in [0,1)");
    if (weight_decay < 0) throw InputError("weight_decay must be non-negative");
    if (epochs < 1 || batch_size < 1) throw InputError("epochs and batch_size must be >= 1");
    for (std::size_t h : hidden_dims)
        if (h == 0) throw InputError("hidden layer sizes must be positive");
}

double MlpModel::parameter_norm_sq() const {
    double s = 0.0;
    for (const DenseLayer* l : all_layers(*this)) {
        for (double w : l->weights.data) s += w * w;
        for (double b : l->bias) s += b * b;
    }
    return s;
}

MlpModel init_model(const MlpConfig& config) {
    config.validate();
    MlpModel model;
    model.config = config;
    Rng rng(derive_seed(config.seed, 0x1417));

    auto make_layer = [&](std::size_t in, std::size_t out) {
        DenseLayer layer;
        layer.weights = Matrix(out, in);
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        for (double& w : layer.weights.data) w = rng.normal() * scale;
        layer.bias.assign(out, 0.0);
        return layer;
    };

    std::vector<std::size_t> enc_dims = {config.input_dim};
    enc_dims.insert(enc_dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    enc_dims.push_back(config.latent_dim);
    for (std::size_t l = 0; l + 1 < enc_dims.size(); ++l)
        model.encoder.push_back(make_layer(enc_dims[l], enc_dims[l + 1]));

    std::vector<std::size_t> dec_dims = {config.latent_dim};
    dec_dims.insert(dec_dims.end(), config.hidden_dims.rbegin(), config.hidden_dims.rend());
    dec_dims.push_back(config.input_dim);
    for (std::size_t l = 0; l + 1 < dec_dims.size(); ++l)
        model.decoder.push_back(make_layer(dec_dims[l], dec_dims[l + 1]));

    return model;
}

Reconstruction reconstruct(const MlpModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim()) throw InputError("input width does not match the model");
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError("non-finite input to reconstruct");
    Matrix one(1, x.size());
    std::copy(x.begin(), x.end(), one.data.begin());
    Matrix z = embed(model, one);
    Matrix out = decode(model, z);
    Reconstruction r;
    r.latent.assign(z.data.begin(), z.data.end());
    r.output.assign(out.data.begin(), out.data.end());
    return r;
}

double loss(const MlpModel& model, const Matrix& batch, double weight_decay) {
    if (batch.rows == 0) throw InputError("loss needs a non-empty batch");
    if (weight_decay < 0) throw InputError("weight_decay must be non-negative");
    Matrix logits = forward_inference(model, batch);
    return batch_reconstruction_loss(model, batch, logits) +
           weight_decay * model.parameter_norm_sq();
}

double reconstruction_loss(const MlpModel& model, const Matrix& batch) {
    if (batch.rows == 0) throw InputError("loss needs a non-empty batch");
    Matrix logits = forward_inference(model, batch);
    return batch_reconstruction_loss(model, batch, logits);
}

double hamming_metric(const MlpModel& model, const Matrix& batch) {
    Matrix logits = forward_inference(model, batch);
    double mismatches = 0.0;
    for (std::size_t i = 0; i < batch.data.size(); ++i) {
        // sigmoid(l) >= 0.5 iff l >= 0
        bool predicted = logits.data[i] >= 0.0;
        bool actual = batch.data[i] >= 0.5;
        if (predicted != actual) mismatches += 1.0;
    }
    return mismatches / static_cast<double>(batch.rows);
}

std::vector<double> loss_gradient(const MlpModel& model, const Matrix& batch,
                                  double weight_decay) {
    if (batch.rows == 0) throw InputError("gradient needs a non-empty batch");
    if (weight_decay < 0) throw InputError("weight_decay must be non-negative");
    return backward_pass(model, batch, weight_decay, nullptr).grad;
}

std::vector<double> flatten_parameters(const MlpModel& model) {
    std::vector<double> flat;
    for (const DenseLayer* l : all_layers(model)) {
        flat.insert(flat.end(), l->weights.data.begin(), l->weights.data.end());
        flat.insert(flat.end(), l->bias.begin(), l->bias.end());
    }
    return flat;
}

void unflatten_parameters(MlpModel& model, const std::vector<double>& flat) {
    std::size_t at = 0;
    for (DenseLayer* l : all_layers(model)) {
        std::copy(flat.begin() + at, flat.begin() + at + l->weights.data.size(),
                  l->weights.data.begin());
        at += l->weights.data.size();
        std::copy(flat.begin() + at, flat.begin() + at + l->bias.size(), l->bias.begin());
        at += l->bias.size();
    }
    if (at != flat.size()) throw InputError("parameter vector size mismatch");
}

std::pair<MlpModel, TrainReport> train(const Matrix& X, const MlpConfig& config,
                                       const Matrix& X_val) {
    MlpConfig cfg = config;
    if (cfg.input_dim == 0) cfg.input_dim = X.cols;
    if (cfg.input_dim != X.cols) throw InputError("feature width does not match config.input_dim");
    if (X.rows == 0) throw InputError("cannot train on an empty matrix");
    MlpModel model = init_model(cfg);
    const Matrix& val = X_val.rows > 0 ? X_val : X;
    if (val.cols != cfg.input_dim) throw InputError("validation width does not match the model");

    auto params = flatten_parameters(model);
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    Rng shuffle_rng(derive_seed(cfg.seed, 0x5a11));
    Rng dropout_rng(derive_seed(cfg.seed, 0xd309));

    TrainReport report;
    report.train_loss.reserve(cfg.epochs);
    report.val_loss.reserve(cfg.epochs);
    report.val_metric.reserve(cfg.epochs);

    std::vector<std::size_t> order(X.rows);
    std::iota(order.begin(), order.end(), 0);

    const auto t0 = std::chrono::steady_clock::now();
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < X.rows; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, X.rows);
            Matrix batch(stop - start, X.cols);
            for (std::size_t i = start; i < stop; ++i) {
                auto src = X.row(order[i]);
                std::copy(src.begin(), src.end(), batch.row(i - start).begin());
            }
            auto res = backward_pass(model, batch, cfg.weight_decay,
                                     cfg.dropout_prob > 0 ? &dropout_rng : nullptr);
            epoch_loss += res.loss;
            ++batches;

            ++step;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * res.grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * res.grad[i] * res.grad[i];
                params[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            }
            unflatten_parameters(model, params);
        }
        epoch_loss /= static_cast<double>(batches);
        if (!std::isfinite(epoch_loss))
            throw NumericError("training diverged (non-finite loss) at epoch " +
                               std::to_string(epoch));
        report.train_loss.push_back(epoch_loss);
        report.val_loss.push_back(reconstruction_loss(model, val));
        report.val_metric.push_back(cfg.loss_mode == LossMode::HammingSurrogate
                                        ? hamming_metric(model, val)
                                        : report.val_loss.back());
        if (!std::isfinite(report.val_loss.back()))
            throw NumericError("training diverged (non-finite validation loss) at epoch " +
                               std::to_string(epoch));
    }
    report.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& l : model.encoder) {
        for (double w : l.weights.data) report.encoder_norm += w * w;
        for (double b : l.bias) report.encoder_norm += b * b;
    }
    for (const auto& l : model.decoder) {
        for (double w : l.weights.data) report.decoder_norm += w * w;
        for (double b : l.bias) report.decoder_norm += b * b;
    }
    report.encoder_norm = std::sqrt(report.encoder_norm);
    report.decoder_norm = std::sqrt(report.decoder_norm);
    return {std::move(model), std::move(report)};
}

Matrix embed(const MlpModel& model, const Matrix& X) {
    if (X.cols != model.input_dim()) throw InputError("feature width does not match the model");
    Matrix a = X;
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
        a = affine_forward(a, model.encoder[l]);
        if (l + 1 < model.encoder.size())
            for (double& x : a.data) x = x > 0 ? x : 0.0;
    }
    return a;
}

Matrix decode(const MlpModel& model, const Matrix& Z) {
    if (Z.cols != model.latent_dim()) throw InputError("latent width does not match the model");
    Matrix a = Z;
    for (std::size_t l = 0; l < model.decoder.size(); ++l) {
        a = affine_forward(a, model.decoder[l]);
        if (l + 1 < model.decoder.size())
            for (double& x : a.data) x = x > 0 ? x : 0.0;
    }
    if (model.config.loss_mode == LossMode::HammingSurrogate)
        for (double& x : a.data) x = sigmoid(x);
    return a;
}

GridSearchResult grid_search(const Matrix& X_train, const Matrix& X_val, const MlpConfig& base,
                             const GridSpec& grid) {
    auto or_base = [](auto candidates, auto base_value) {
        if (candidates.empty()) candidates.push_back(base_value);
        return candidates;
    };
    auto latents = or_base(grid.latent_dim, base.latent_dim);
    auto hiddens = or_base(grid.hidden_dims, base.hidden_dims);
    auto lrs = or_base(grid.learning_rate, base.learning_rate);
    auto drops = or_base(grid.dropout_prob, base.dropout_prob);
    auto decays = or_base(grid.weight_decay, base.weight_decay);
    auto epochss = or_base(grid.epochs, base.epochs);
    auto batches = or_base(grid.batch_size, base.batch_size);

    const bool all_empty = grid.latent_dim.empty() && grid.hidden_dims.empty() &&
                           grid.learning_rate.empty() && grid.dropout_prob.empty() &&
                           grid.weight_decay.empty() && grid.epochs.empty() &&
                           grid.batch_size.empty();
    if (all_empty) throw InputError("grid search needs at least one candidate value");

    GridSearchResult result;
    double best_val = std::numeric_limits<double>::infinity();
    bool have_best = false;
    for (auto q : latents)
        for (const auto& h : hiddens)
            for (auto lr : lrs)
                for (auto dp : drops)
                    for (auto wd : decays)
                        for (auto ep : epochss)
                            for (auto bs : batches) {
                                GridPoint point;
                                point.config = base;
                                point.config.latent_dim = q;
                                point.config.hidden_dims = h;
                                point.config.learning_rate = lr;
                                point.config.dropout_prob = dp;
                                point.config.weight_decay = wd;
                                point.config.epochs = ep;
                                point.config.batch_size = bs;
                                try {
                                    auto [model, report] = train(X_train, point.config, X_val);
                                    point.train_loss = report.train_loss.back();
                                    point.val_loss = report.val_loss.back();
                                } catch (const NumericError&) {
                                    point.diverged = true;
                                    point.train_loss = point.val_loss =
                                        std::numeric_limits<double>::infinity();
                                }
                                if (!point.diverged && point.val_loss < best_val) {
                                    best_val = point.val_loss;
                                    result.best = point.config;
                                    result.best_index = result.table.size();
                                    have_best = true;
                                }
                                result.table.push_back(std::move(point));
                            }
    if (!have_best) throw NumericError("every grid point diverged");
    return result;
}

namespace {

nlohmann::json layer_to_json(const DenseLayer& l) {
    return {{"out", l.weights.rows}, {"in", l.weights.cols}, {"weights", l.weights.data},
            {"bias", l.bias}};
}

DenseLayer layer_from_json(const nlohmann::json& j) {
    DenseLayer l;
    l.weights = Matrix(j.at("out").get<std::size_t>(), j.at("in").get<std::size_t>());
    auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != l.weights.data.size()) throw InputError("model file: weight size mismatch");
    l.weights.data = std::move(w);
    l.bias = j.at("bias").get<std::vector<double>>();
    if (l.bias.size() != l.weights.rows) throw InputError("model file: bias size mismatch");
    return l;
}

}  // namespace

std::string save_model(const MlpModel& model) {
    const auto& c = model.config;
    nlohmann::json j;
    j["format"] = "darknet-mlp-v1";
    j["config"] = {{"input_dim", c.input_dim},
                   {"latent_dim", c.latent_dim},
                   {"hidden_dims", c.hidden_dims},
                   {"learning_rate", c.learning_rate},
                   {"dropout_prob", c.dropout_prob},
                   {"weight_decay", c.weight_decay},
                   {"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"seed", c.seed},
                   {"loss_mode", c.loss_mode == LossMode::SquaredEuclidean ? "squared_euclidean"
                                                                           : "hamming_surrogate"},
                   {"val_fraction", c.val_fraction}};
    j["activation"] = "relu";
    for (const auto& l : model.encoder) j["encoder"].push_back(layer_to_json(l));
    for (const auto& l : model.decoder) j["decoder"].push_back(layer_to_json(l));
    return j.dump();
}

MlpModel load_model(const std::string& serialized) {
    nlohmann::json j = nlohmann::json::parse(serialized, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "darknet-mlp-v1")
        throw InputError("not a recognizable model file");
    MlpModel model;
    const auto& c = j.at("config");
    model.config.input_dim = c.at("input_dim").get<std::size_t>();
    model.config.latent_dim = c.at("latent_dim").get<std::size_t>();
    model.config.hidden_dims = c.at("hidden_dims").get<std::vector<std::size_t>>();
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.dropout_prob = c.at("dropout_prob").get<double>();
    model.config.weight_decay = c.at("weight_decay").get<double>();
    model.config.epochs = c.at("epochs").get<std::size_t>();
    model.config.batch_size = c.at("batch_size").get<std::size_t>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    model.config.loss_mode = c.at("loss_mode").get<std::string>() == "hamming_surrogate"
                                 ? LossMode::HammingSurrogate
                                 : LossMode::SquaredEuclidean;
    model.config.val_fraction = c.value("val_fraction", 0.1);
    for (const auto& l : j.at("encoder")) model.encoder.push_back(layer_from_json(l));
    for (const auto& l : j.at("decoder")) model.decoder.push_back(layer_from_json(l));
    return model;
}

void save_model_file(const MlpModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write model file: " + path);
    out << save_model(model);
}

MlpModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read model file: " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_model(blob);
}

}  // namespace darknet
