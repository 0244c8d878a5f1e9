#include "slicekit/classify.hpp"

#include <stdexcept>

namespace slicekit::classify {

namespace {

constexpr int kModelVersion = 1;

nlohmann::json row_json(const Eigen::RowVectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::RowVectorXd row_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    Eigen::RowVectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = v[i];
    }
    return out;
}

Activation activation_from(const std::string& s) {
    if (s == "sigmoid") {
        return Activation::Sigmoid;
    }
    if (s == "relu") {
        return Activation::Relu;
    }
    throw std::invalid_argument("model file: unknown activation '" + s + "'");
}

Head head_from(const std::string& s) {
    if (s == "softmax") {
        return Head::Softmax;
    }
    if (s == "regression") {
        return Head::Regression;
    }
    throw std::invalid_argument("model file: unknown head '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const MlpModel& model) {
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : model.layers) {
        // Column-major flattening with explicit shape.
        std::vector<double> w(l.weights.data(), l.weights.data() + l.weights.size());
        layers.push_back({{"rows", l.weights.rows()}, {"cols", l.weights.cols()}, {"weights", w},
                          {"bias", row_json(l.bias)}});
    }
    nlohmann::json j = {
        {"format", "slicekit-mlp"},
        {"version", kModelVersion},
        {"spec",
         {{"input_dim", model.spec.input_dim},
          {"hidden", model.spec.hidden},
          {"hidden_activation", activation_name(model.spec.hidden_activation)},
          {"dropout_rate", model.spec.dropout_rate},
          {"head", head_name(model.spec.head)},
          {"outputs", model.spec.outputs}}},
        {"labels", model.labels},
        {"feature_mask", model.feature_mask},
        {"input_mean", row_json(model.input_mean)},
        {"input_scale", row_json(model.input_scale)},
        {"layers", layers},
        {"training",
         {{"seed", model.training.seed}, {"epochs", model.training.epochs}, {"loss_curve", model.training.loss_curve}}}};
    if (model.spec.head == Head::Regression) {
        j["target_mean"] = row_json(model.target_mean);
        j["target_scale"] = row_json(model.target_scale);
    }
    return j;
}

MlpModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "slicekit-mlp") {
        throw std::invalid_argument("model file: not a slicekit MLP model");
    }
    if (j.at("version").get<int>() != kModelVersion) {
        throw std::invalid_argument("model file: unsupported version " + j.at("version").dump());
    }
    MlpModel m;
    const auto& s = j.at("spec");
    m.spec.input_dim = s.at("input_dim").get<std::size_t>();
    m.spec.hidden = s.at("hidden").get<std::vector<std::size_t>>();
    m.spec.hidden_activation = activation_from(s.at("hidden_activation").get<std::string>());
    m.spec.dropout_rate = s.at("dropout_rate").get<double>();
    m.spec.head = head_from(s.at("head").get<std::string>());
    m.spec.outputs = s.at("outputs").get<std::size_t>();
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.feature_mask = j.value("feature_mask", "full");
    m.input_mean = row_from(j.at("input_mean"));
    m.input_scale = row_from(j.at("input_scale"));
    for (const auto& lj : j.at("layers")) {
        Layer l;
        const auto rows = lj.at("rows").get<Eigen::Index>();
        const auto cols = lj.at("cols").get<Eigen::Index>();
        const auto w = lj.at("weights").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
            throw std::invalid_argument("model file: weight count does not match the layer shape");
        }
        l.weights = Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols);
        l.bias = row_from(lj.at("bias"));
        m.layers.push_back(std::move(l));
    }
    if (m.spec.head == Head::Regression) {
        m.target_mean = row_from(j.at("target_mean"));
        m.target_scale = row_from(j.at("target_scale"));
    }
    const auto& t = j.at("training");
    m.training.seed = t.at("seed").get<std::uint64_t>();
    m.training.epochs = t.at("epochs").get<std::size_t>();
    m.training.loss_curve = t.at("loss_curve").get<std::vector<double>>();
    m.validate();
    return m;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["labels"] = r.labels;
    if (!r.confusion.empty()) {
        j["confusion"] = r.confusion;
        j["precision"] = r.precision;
        j["recall"] = r.recall;
        j["f1"] = r.f1;
        j["support"] = r.support;
        j["weighted_f1"] = r.weighted_f1;
        j["accuracy"] = r.accuracy;
    }
    if (!r.mae.empty()) {
        j["outputs"] = r.output_names;
        j["mae"] = r.mae;
        j["mae_by_class"] = r.mae_by_class;
        j["target_range"] = r.target_range;
        j["support"] = r.support;
    }
    return j;
}

}  // namespace slicekit::classify
