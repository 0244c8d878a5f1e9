#include "slicekit/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace slicekit::classify {

void Dataset::validate() const {
    if (static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw std::invalid_argument("Dataset: feature rows and labels differ in count");
    }
    for (const int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes.size()) {
            throw std::invalid_argument("Dataset: label index out of range");
        }
    }
    if (targets.size() > 0 && static_cast<std::size_t>(targets.rows()) != labels.size()) {
        throw std::invalid_argument("Dataset: target rows and labels differ in count");
    }
    if (!x.allFinite() || (targets.size() > 0 && !targets.allFinite())) {
        throw std::invalid_argument("Dataset: non-finite values");
    }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.classes = classes;
    out.target_names = target_names;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    if (targets.size() > 0) {
        out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        out.x.row(static_cast<Eigen::Index>(i)) = x.row(r);
        if (targets.size() > 0) {
            out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(r);
        }
        out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

Dataset Dataset::restrict_classes(const std::vector<std::string>& keep) const {
    std::vector<int> remap(classes.size(), -1);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        const auto it = std::find(classes.begin(), classes.end(), keep[k]);
        if (it != classes.end()) {
            remap[static_cast<std::size_t>(it - classes.begin())] = static_cast<int>(k);
        }
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (remap[static_cast<std::size_t>(labels[i])] >= 0) {
            rows.push_back(i);
        }
    }
    Dataset out = subset(rows);
    out.classes = keep;
    for (int& y : out.labels) {
        y = remap[static_cast<std::size_t>(y)];
    }
    return out;
}

Dataset Dataset::select_columns(std::span<const std::size_t> cols) const {
    Dataset out = *this;
    out.x.resize(x.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] >= static_cast<std::size_t>(x.cols())) {
            throw std::invalid_argument("select_columns: column out of range");
        }
        out.x.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(cols[c]));
    }
    return out;
}

Split stratified_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("stratified_split: test fraction must lie in [0, 1)");
    }
    std::vector<std::vector<std::size_t>> by_class(data.classes.size());
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
    Split split;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& rows = by_class[c];
        Rng rng(derive_seed(seed, "split:" + data.classes[c]));
        for (std::size_t i = rows.size(); i > 1; --i) {
            std::swap(rows[i - 1], rows[rng.index(i)]);
        }
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
        split.test.insert(split.test.end(), rows.begin(), rows.begin() + static_cast<long>(n_test));
        split.train.insert(split.train.end(), rows.begin() + static_cast<long>(n_test), rows.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

EvalReport report_from_confusion(const std::vector<std::string>& labels,
                                 const std::vector<std::vector<std::size_t>>& confusion) {
    const std::size_t c = labels.size();
    if (confusion.size() != c) {
        throw std::invalid_argument("report_from_confusion: confusion matrix size mismatch");
    }
    EvalReport r;
    r.labels = labels;
    r.confusion = confusion;
    r.precision.assign(c, 0.0);
    r.recall.assign(c, 0.0);
    r.f1.assign(c, 0.0);
    r.support.assign(c, 0);
    std::size_t total = 0;
    std::size_t correct = 0;
    std::vector<std::size_t> predicted(c, 0);
    for (std::size_t i = 0; i < c; ++i) {
        if (confusion[i].size() != c) {
            throw std::invalid_argument("report_from_confusion: confusion matrix must be square");
        }
        for (std::size_t j = 0; j < c; ++j) {
            r.support[i] += confusion[i][j];
            predicted[j] += confusion[i][j];
        }
        total += r.support[i];
        correct += confusion[i][i];
    }
    double weighted = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        const double tp = static_cast<double>(confusion[i][i]);
        r.precision[i] = predicted[i] > 0 ? tp / static_cast<double>(predicted[i]) : 0.0;
        r.recall[i] = r.support[i] > 0 ? tp / static_cast<double>(r.support[i]) : 0.0;
        const double denom = r.precision[i] + r.recall[i];
        r.f1[i] = denom > 0.0 ? 2.0 * r.precision[i] * r.recall[i] / denom : 0.0;
        weighted += r.f1[i] * static_cast<double>(r.support[i]);
    }
    r.weighted_f1 = total > 0 ? weighted / static_cast<double>(total) : 0.0;
    r.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return r;
}

namespace {

Eigen::MatrixXd standardize(const MlpModel& model, const Eigen::MatrixXd& raw) {
    if (static_cast<std::size_t>(raw.cols()) != model.spec.input_dim) {
        throw std::invalid_argument("model expects " + std::to_string(model.spec.input_dim) +
                                    " features, data has " + std::to_string(raw.cols()));
    }
    return ((raw.rowwise() - model.input_mean).array().rowwise() / model.input_scale.array()).matrix();
}

void fit_normalization(const Eigen::MatrixXd& x, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& scale) {
    const double n = static_cast<double>(x.rows());
    mean = x.colwise().mean();
    scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - mean(c)).square().sum() / n;
        const double sd = std::sqrt(var);
        scale(c) = sd > 1e-12 ? sd : 1.0;
    }
}

}  // namespace

std::vector<int> predict_classes(const MlpModel& model, const Eigen::MatrixXd& raw) {
    if (model.spec.head != Head::Softmax) {
        throw std::invalid_argument("predict_classes: model has a regression head");
    }
    const Eigen::MatrixXd p = forward_standardized(model, standardize(model, raw), Mode::Infer, nullptr);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        Eigen::Index best = 0;
        p.row(r).maxCoeff(&best);
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

Eigen::MatrixXd predict_values(const MlpModel& model, const Eigen::MatrixXd& raw) {
    if (model.spec.head != Head::Regression) {
        throw std::invalid_argument("predict_values: model has a softmax head");
    }
    Eigen::MatrixXd out = forward_standardized(model, standardize(model, raw), Mode::Infer, nullptr);
    out = (out.array().rowwise() * model.target_scale.array()).matrix();
    out.rowwise() += model.target_mean;
    return out;
}

EvalReport evaluate(const MlpModel& model, const Dataset& data) {
    data.validate();
    if (model.spec.head == Head::Softmax) {
        // Dataset classes are mapped onto model labels by name.
        std::vector<int> to_model(data.classes.size(), -1);
        for (std::size_t c = 0; c < data.classes.size(); ++c) {
            const auto it = std::find(model.labels.begin(), model.labels.end(), data.classes[c]);
            if (it == model.labels.end()) {
                throw std::invalid_argument("evaluate: class '" + data.classes[c] + "' is unknown to the model");
            }
            to_model[c] = static_cast<int>(it - model.labels.begin());
        }
        const std::size_t k = model.labels.size();
        std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
        const std::vector<int> pred = data.size() > 0 ? predict_classes(model, data.x) : std::vector<int>{};
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto t = static_cast<std::size_t>(to_model[static_cast<std::size_t>(data.labels[i])]);
            ++confusion[t][static_cast<std::size_t>(pred[i])];
        }
        return report_from_confusion(model.labels, confusion);
    }

    if (static_cast<std::size_t>(data.targets.cols()) != model.spec.outputs || data.targets.rows() != data.x.rows()) {
        throw std::invalid_argument("evaluate: regression data needs one target column per output");
    }
    EvalReport r;
    r.labels = data.classes;
    r.output_names = model.labels;
    const std::size_t outs = model.spec.outputs;
    r.mae.assign(outs, 0.0);
    r.target_range.assign(outs, 0.0);
    r.mae_by_class.assign(data.classes.size(), std::vector<double>(outs, 0.0));
    r.support.assign(data.classes.size(), 0);
    if (data.size() == 0) {
        return r;
    }
    const Eigen::MatrixXd pred = predict_values(model, data.x);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto c = static_cast<std::size_t>(data.labels[i]);
        ++r.support[c];
        for (std::size_t o = 0; o < outs; ++o) {
            const double e = std::abs(pred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o)) -
                                      data.targets(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o)));
            r.mae[o] += e;
            r.mae_by_class[c][o] += e;
        }
    }
    for (std::size_t o = 0; o < outs; ++o) {
        r.mae[o] /= static_cast<double>(data.size());
        const auto col = data.targets.col(static_cast<Eigen::Index>(o));
        r.target_range[o] = col.maxCoeff() - col.minCoeff();
    }
    for (std::size_t c = 0; c < data.classes.size(); ++c) {
        for (double& v : r.mae_by_class[c]) {
            v = r.support[c] > 0 ? v / static_cast<double>(r.support[c]) : 0.0;
        }
    }
    return r;
}

TrainResult train(const Dataset& data, const MlpSpec& spec_in, const TrainConfig& config) {
    data.validate();
    if (data.size() == 0) {
        throw std::invalid_argument("train: empty dataset");
    }
    if (config.batch_size == 0 || config.epochs == 0) {
        throw std::invalid_argument("train: epochs and batch size must be positive");
    }
    MlpSpec spec = spec_in;
    spec.input_dim = static_cast<std::size_t>(data.x.cols());
    if (spec.head == Head::Softmax) {
        spec.outputs = data.classes.size();
    } else {
        if (data.targets.rows() != data.x.rows() || data.targets.cols() == 0) {
            throw std::invalid_argument("train: regression head needs targets");
        }
        spec.outputs = static_cast<std::size_t>(data.targets.cols());
    }

    TrainResult result;
    result.split = stratified_split(data, config.test_fraction, config.seed);
    std::vector<std::size_t> train_count(data.classes.size(), 0);
    for (const std::size_t i : result.split.train) {
        ++train_count[static_cast<std::size_t>(data.labels[i])];
    }
    if (spec.head == Head::Softmax) {
        for (std::size_t c = 0; c < data.classes.size(); ++c) {
            if (train_count[c] == 0) {
                throw std::invalid_argument("train: class '" + data.classes[c] + "' has no training examples");
            }
        }
    }

    const Dataset train_set = data.subset(result.split.train);
    const Dataset test_set = data.subset(result.split.test);

    MlpModel model = init_model(spec, config.seed);
    model.labels = spec.head == Head::Softmax ? data.classes : data.target_names;
    if (model.labels.size() != spec.outputs) {
        model.labels.clear();
        for (std::size_t i = 0; i < spec.outputs; ++i) {
            model.labels.push_back("output" + std::to_string(i));
        }
    }
    fit_normalization(train_set.x, model.input_mean, model.input_scale);
    const Eigen::MatrixXd x = standardize(model, train_set.x);
    Eigen::MatrixXd y;
    if (spec.head == Head::Regression) {
        fit_normalization(train_set.targets, model.target_mean, model.target_scale);
        y = ((train_set.targets.rowwise() - model.target_mean).array().rowwise() / model.target_scale.array()).matrix();
    }

    AdamState adam = AdamState::for_model(model);
    adam.lr = config.lr;
    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Batch batch;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle(derive_seed(config.seed, "shuffle", epoch));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle.index(i)]);
        }
        Rng dropout(derive_seed(config.seed, "dropout", epoch));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, n - start);
            batch.x.resize(static_cast<Eigen::Index>(len), x.cols());
            batch.labels.resize(len);
            if (spec.head == Head::Regression) {
                batch.targets.resize(static_cast<Eigen::Index>(len), y.cols());
            }
            for (std::size_t b = 0; b < len; ++b) {
                const std::size_t row = order[start + b];
                batch.x.row(static_cast<Eigen::Index>(b)) = x.row(static_cast<Eigen::Index>(row));
                batch.labels[b] = train_set.labels[row];
                if (spec.head == Head::Regression) {
                    batch.targets.row(static_cast<Eigen::Index>(b)) = y.row(static_cast<Eigen::Index>(row));
                }
            }
            const LossAndGradients lg = loss_and_gradients(model, batch, &dropout);
            adam_step(model.layers, lg.grads, adam);
            epoch_loss += lg.loss * static_cast<double>(len);
        }
        model.training.loss_curve.push_back(epoch_loss / static_cast<double>(n));
    }
    model.training.seed = config.seed;
    model.training.epochs = config.epochs;
    result.report = evaluate(model, test_set);
    result.model = std::move(model);
    return result;
}

std::pair<double, double> predict_slice_params(const MlpModel& model, std::span<const double> features,
                                               const ParamBounds& bounds) {
    if (model.spec.head != Head::Regression || model.spec.outputs != 2) {
        throw std::invalid_argument("predict_slice_params: needs a two-output regression model");
    }
    const Eigen::VectorXd out = forward(model, features);
    const double px = std::isfinite(out(0)) ? std::clamp(out(0), 0.0, bounds.max_x) : 0.0;
    const double pz = std::isfinite(out(1)) ? std::clamp(out(1), 0.0, bounds.max_z) : 0.0;
    return {px, pz};
}

}  // namespace slicekit::classify
