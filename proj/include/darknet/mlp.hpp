#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darknet/matrix.hpp"

namespace darknet {

enum class LossMode { SquaredEuclidean, HammingSurrogate };

struct MlpConfig {
    std::size_t input_dim = 0;
    std::size_t latent_dim = 50;
    std::vector<std::size_t> hidden_dims = {1000};
    double learning_rate = 0.001;
    double dropout_prob = 0.001;
    double weight_decay = 0.001;
    std::size_t epochs = 100;
    std::size_t batch_size = 2000;
    std::uint64_t seed = 0;
    LossMode loss_mode = LossMode::SquaredEuclidean;
    double val_fraction = 0.1;  // held-out share when train() is given no explicit val set

    void validate() const;
};

struct DenseLayer {
    Matrix weights;  // out x in
    std::vector<double> bias;
};

// Mirror-shaped encoder/decoder stack. Hidden layers are ReLU with dropout
// during training; the latent layer is linear; the output layer is linear
// (squared loss) or sigmoid (hamming surrogate).
struct MlpModel {
    MlpConfig config;
    std::vector<DenseLayer> encoder;  // P -> hidden... -> Q
    std::vector<DenseLayer> decoder;  // Q -> reversed hidden... -> P

    std::size_t input_dim() const { return config.input_dim; }
    std::size_t latent_dim() const { return config.latent_dim; }
    double parameter_norm_sq() const;
};

struct TrainReport {
    std::vector<double> train_loss;  // per epoch, regularizer included
    std::vector<double> val_loss;    // per epoch, pure reconstruction error
    std::vector<double> val_metric;  // hamming distance for the surrogate mode, else = val_loss
    double wall_time_sec = 0.0;
    double encoder_norm = 0.0;
    double decoder_norm = 0.0;
};

MlpModel init_model(const MlpConfig& config);

struct Reconstruction {
    std::vector<double> latent;
    std::vector<double> output;
};

// Inference mode: no dropout, deterministic.
Reconstruction reconstruct(const MlpModel& model, std::span<const double> x);

// Mean per-sample reconstruction error over the batch plus
// weight_decay * (|theta|^2 + |gamma|^2).
double loss(const MlpModel& model, const Matrix& batch, double weight_decay);

// Pure reconstruction part of the loss (regularizer excluded).
double reconstruction_loss(const MlpModel& model, const Matrix& batch);

// Mean per-sample Hamming distance after 0.5-thresholding.
double hamming_metric(const MlpModel& model, const Matrix& batch);

// Flat parameter-order gradient of loss() on a batch; used by training and
// checked against finite differences in tests. Dropout optional.
struct GradientBuffers;
std::vector<double> loss_gradient(const MlpModel& model, const Matrix& batch, double weight_decay);

std::vector<double> flatten_parameters(const MlpModel& model);
void unflatten_parameters(MlpModel& model, const std::vector<double>& flat);

// Adam over shuffled mini-batches; X_val empty means validation on X itself.
// Throws NumericError carrying the epoch index if the loss goes non-finite.
std::pair<MlpModel, TrainReport> train(const Matrix& X, const MlpConfig& config,
                                       const Matrix& X_val = {});

Matrix embed(const MlpModel& model, const Matrix& X);
Matrix decode(const MlpModel& model, const Matrix& Z);

// Candidate values per knob; empty vector keeps the base config's value.
struct GridSpec {
    std::vector<std::size_t> latent_dim;
    std::vector<std::vector<std::size_t>> hidden_dims;
    std::vector<double> learning_rate;
    std::vector<double> dropout_prob;
    std::vector<double> weight_decay;
    std::vector<std::size_t> epochs;
    std::vector<std::size_t> batch_size;
};

struct GridPoint {
    MlpConfig config;
    double train_loss = 0.0;
    double val_loss = 0.0;  // selection criterion, regularizer excluded
    bool diverged = false;
};

struct GridSearchResult {
    MlpConfig best;
    std::size_t best_index = 0;
    std::vector<GridPoint> table;
};

GridSearchResult grid_search(const Matrix& X_train, const Matrix& X_val, const MlpConfig& base,
                             const GridSpec& grid);

// JSON container with config, shapes and row-major parameters.
std::string save_model(const MlpModel& model);
MlpModel load_model(const std::string& serialized);
void save_model_file(const MlpModel& model, const std::string& path);
MlpModel load_model_file(const std::string& path);

}  // namespace darknet
