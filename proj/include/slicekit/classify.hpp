#pragma once

#include "slicekit/common.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace slicekit::classify {

enum class Activation { Sigmoid, Relu };
enum class Head { Softmax, Regression };

const char* activation_name(Activation a);
const char* head_name(Head h);

struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{100, 100, 100};
    Activation hidden_activation = Activation::Sigmoid;
    double dropout_rate = 0.5;  // applied to the input of the last hidden layer
    Head head = Head::Softmax;
    std::size_t outputs = 0;    // classes, or regression outputs

    void validate() const;
};

/// Fully connected layer computing A * W + b for row-major batches.
struct Layer {
    Eigen::MatrixXd weights;  // inputs x outputs
    Eigen::RowVectorXd bias;
};

struct TrainingMeta {
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    std::vector<double> loss_curve;  // mean training loss per epoch
};

struct MlpModel {
    MlpSpec spec;
    std::vector<Layer> layers;       // hidden layers then the head
    std::vector<std::string> labels;  // class names, or regression output names
    Eigen::RowVectorXd input_mean;
    Eigen::RowVectorXd input_scale;
    Eigen::RowVectorXd target_mean;   // regression only
    Eigen::RowVectorXd target_scale;  // regression only
    std::string feature_mask = "full";
    TrainingMeta training;

    void validate() const;
};

/// Layers shaped from the MlpSpec, weights uniform in +-sqrt(3 / fan_in), zero biases.
/// Normalization is the identity until training sets it.
MlpModel init_model(const MlpSpec& spec, std::uint64_t seed);

enum class Mode { Train, Infer };

/// Forward pass on already standardized inputs (rows are samples).
/// Softmax head returns probabilities, regression head standardized outputs.
/// Train mode applies inverted dropout drawn from `rng`.
Eigen::MatrixXd forward_standardized(const MlpModel& model, const Eigen::MatrixXd& x, Mode mode, Rng* rng);

/// Forward pass on raw features of one sample: standardizes the input and, for
/// regression, maps outputs back to target units.
Eigen::VectorXd forward(const MlpModel& model, std::span<const double> features, Mode mode = Mode::Infer,
                        Rng* rng = nullptr);

struct Batch {
    Eigen::MatrixXd x;          // standardized inputs
    std::vector<int> labels;    // softmax head
    Eigen::MatrixXd targets;    // regression head, standardized
};

struct Gradients {
    std::vector<Layer> layers;
};

struct LossAndGradients {
    double loss = 0.0;
    Gradients grads;
};

/// Cross-entropy (softmax) or mean squared error (regression), averaged over
/// samples (and outputs), with backpropagated gradients. With `rng` set the
/// pass runs in train mode, drawing dropout masks from it.
LossAndGradients loss_and_gradients(const MlpModel& model, const Batch& batch, Rng* rng = nullptr);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<Layer> m;
    std::vector<Layer> v;

    static AdamState for_model(const MlpModel& model);
};

void adam_step(std::vector<Layer>& params, const Gradients& grads, AdamState& state);

struct Dataset {
    Eigen::MatrixXd x;                // raw features, one row per sample
    std::vector<int> labels;          // class index per row
    std::vector<std::string> classes;
    Eigen::MatrixXd targets;          // regression targets (rows x outputs), may be empty
    std::vector<std::string> target_names;

    std::size_t size() const { return labels.size(); }
    void validate() const;
    Dataset subset(std::span<const std::size_t> rows) const;
    /// Keeps rows whose class is in `keep`, remapping labels to `keep` order.
    Dataset restrict_classes(const std::vector<std::string>& keep) const;
    Dataset select_columns(std::span<const std::size_t> cols) const;
};

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    double lr = 1e-3;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Per-class shuffled split. The shuffle of each class depends only on the seed,
/// the class name and that class's rows in order, so class subsets of a dataset
/// reproduce the same split for the classes they keep.
Split stratified_split(const Dataset& data, double test_fraction, std::uint64_t seed);

struct EvalReport {
    std::vector<std::string> labels;
    std::vector<std::vector<std::size_t>> confusion;  // rows true, columns predicted
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<std::size_t> support;
    double weighted_f1 = 0.0;
    double accuracy = 0.0;
    // Regression heads.
    std::vector<std::string> output_names;
    std::vector<double> mae;                        // per output
    std::vector<std::vector<double>> mae_by_class;  // class x output
    std::vector<double> target_range;               // per output, over the evaluated rows
};

EvalReport report_from_confusion(const std::vector<std::string>& labels,
                                 const std::vector<std::vector<std::size_t>>& confusion);

struct TrainResult {
    MlpModel model;
    EvalReport report;
    Split split;
};

TrainResult train(const Dataset& data, const MlpSpec& spec, const TrainConfig& config);

EvalReport evaluate(const MlpModel& model, const Dataset& data);

/// Class index predicted for each row.
std::vector<int> predict_classes(const MlpModel& model, const Eigen::MatrixXd& raw);

/// Regression outputs in target units for each row.
Eigen::MatrixXd predict_values(const MlpModel& model, const Eigen::MatrixXd& raw);

struct ParamBounds {
    double max_x = 0.1;
    double max_z = 0.1;
};

/// (phi1x, phi1z) in meters from a regression model, clamped to [0, bound].
std::pair<double, double> predict_slice_params(const MlpModel& model, std::span<const double> features,
                                               const ParamBounds& bounds = {});

nlohmann::json to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalReport& report);

}  // namespace slicekit::classify
