#include "slicekit/common.hpp"
#include "slicekit/dmp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace slicekit::dmp {

std::vector<Trajectory> synthetic_slicing_demos(std::size_t count, std::uint64_t seed, const DemoShape& shape,
                                                double dt) {
    if (count == 0) {
        throw std::invalid_argument("synthetic_slicing_demos: count must be at least 1");
    }
    if (!(shape.duration > 0.0) || !(dt > 0.0)) {
        throw std::invalid_argument("synthetic_slicing_demos: duration and dt must be positive");
    }
    std::vector<Trajectory> demos;
    demos.reserve(count);
    const std::size_t n = static_cast<std::size_t>(std::llround(shape.duration / dt)) + 1;
    const double half = 0.5 * shape.duration;
    for (std::size_t d = 0; d < count; ++d) {
        Rng rng(derive_seed(seed, "slicing-demo", d));
        const double ax = shape.amplitude_x * (1.0 + rng.uniform(-shape.jitter, shape.jitter));
        const double dz = shape.depth_z * (1.0 + rng.uniform(-shape.jitter, shape.jitter));
        const double y = rng.uniform(-0.01, 0.01);

        Trajectory demo;
        demo.axes = {Axis::X, Axis::Y, Axis::Z};
        demo.times.resize(n);
        demo.positions.assign(3, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) * dt;
            demo.times[i] = t;
            demo.positions[0][i] = t <= half ? ax * min_jerk(t / half) : ax * (1.0 - min_jerk((t - half) / half));
            demo.positions[1][i] = y;
            demo.positions[2][i] = -dz * min_jerk(t / shape.duration);
        }
        demos.push_back(std::move(demo));
    }
    return demos;
}

SlicingModel learn_slicing_model(std::span<const Trajectory> demos, const DmpConfig& config, double lambda,
                                 double duration) {
    std::map<Axis, AxisDmp> fitted = fit_weights(demos, config, lambda);
    if (!fitted.contains(Axis::X) || !fitted.contains(Axis::Z)) {
        throw std::invalid_argument("learn_slicing_model: demonstrations need X and Z axes");
    }
    double amplitude = 0.0;
    double depth = 0.0;
    for (const auto& demo : demos) {
        const auto& x = demo.axis(Axis::X);
        const auto& z = demo.axis(Axis::Z);
        double peak = 0.0;
        for (const double v : x) {
            peak = std::max(peak, v - x.front());
        }
        amplitude += peak;
        depth += z.front() - z.back();
    }
    amplitude /= static_cast<double>(demos.size());
    depth /= static_cast<double>(demos.size());

    SlicingModel model;
    model.skill.duration = duration;
    model.skill.axes.emplace(Axis::X, attach_object_feature(fitted.at(Axis::X), amplitude));
    model.skill.axes.emplace(Axis::Z, attach_object_feature(fitted.at(Axis::Z), depth));
    model.reference_amplitude_x = amplitude;
    model.reference_depth_z = depth;
    model.lambda = lambda;
    model.demo_count = demos.size();
    return model;
}

SlicingModel default_slicing_model() {
    static const SlicingModel model = [] {
        const DemoShape shape;
        const std::vector<Trajectory> demos = synthetic_slicing_demos(10, 0, shape);
        return learn_slicing_model(demos, DmpConfig::uniform_basis(), 1e-8, shape.duration);
    }();
    return model;
}

nlohmann::json to_json(const DmpConfig& config) {
    return {{"alpha_z", config.alpha_z}, {"beta_z", config.beta_z}, {"tau", config.tau},
            {"dt", config.dt},           {"centers", config.centers}, {"widths", config.widths}};
}

DmpConfig config_from_json(const nlohmann::json& j) {
    DmpConfig config;
    config.alpha_z = j.at("alpha_z").get<double>();
    config.beta_z = j.at("beta_z").get<double>();
    config.tau = j.at("tau").get<double>();
    config.dt = j.at("dt").get<double>();
    config.centers = j.at("centers").get<std::vector<double>>();
    config.widths = j.at("widths").get<std::vector<double>>();
    config.validate();
    return config;
}

namespace {

constexpr int kModelVersion = 1;

nlohmann::json weights_to_json(const Eigen::MatrixXd& w) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(w.cols()));
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            row[static_cast<std::size_t>(c)] = w(r, c);
        }
        rows.push_back(row);
    }
    return rows;
}

Eigen::MatrixXd weights_from_json(const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) {
        throw std::invalid_argument("model file: empty weight matrix");
    }
    Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) {
            throw std::invalid_argument("model file: ragged weight matrix");
        }
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return w;
}

}  // namespace

nlohmann::json to_json(const SlicingModel& model) {
    nlohmann::json axes = nlohmann::json::object();
    nlohmann::json config;
    for (const auto& [axis, dmp] : model.skill.axes) {
        axes[std::string(1, axis_name(axis))] = weights_to_json(dmp.weights);
        config = to_json(dmp.config);
    }
    return {{"format", "slicekit-dmp"},
            {"version", kModelVersion},
            {"config", config},
            {"duration", model.skill.duration},
            {"reference_amplitude_x", model.reference_amplitude_x},
            {"reference_depth_z", model.reference_depth_z},
            {"lambda", model.lambda},
            {"demo_count", model.demo_count},
            {"weights", axes}};
}

SlicingModel slicing_model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "slicekit-dmp") {
        throw std::invalid_argument("model file: not a slicekit DMP model");
    }
    if (j.at("version").get<int>() != kModelVersion) {
        throw std::invalid_argument("model file: unsupported version " + j.at("version").dump());
    }
    SlicingModel model;
    const DmpConfig config = config_from_json(j.at("config"));
    model.skill.duration = j.at("duration").get<double>();
    model.reference_amplitude_x = j.at("reference_amplitude_x").get<double>();
    model.reference_depth_z = j.at("reference_depth_z").get<double>();
    model.lambda = j.at("lambda").get<double>();
    model.demo_count = j.at("demo_count").get<std::size_t>();
    for (const auto& [name, w] : j.at("weights").items()) {
        if (name.size() != 1) {
            throw std::invalid_argument("model file: bad axis name '" + name + "'");
        }
        AxisDmp dmp;
        dmp.config = config;
        dmp.weights = weights_from_json(w);
        dmp.validate();
        model.skill.axes.emplace(axis_from_name(name[0]), std::move(dmp));
    }
    return model;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
    trajectory.validate();
    out << "t,x,y,z\n";
    out << std::setprecision(17);
    const std::array<Axis, 3> order{Axis::X, Axis::Y, Axis::Z};
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        out << trajectory.times[i];
        for (const Axis a : order) {
            out << ',';
            if (trajectory.has_axis(a)) {
                out << trajectory.axis(a)[i];
            } else {
                out << 0.0;
            }
        }
        out << '\n';
    }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write trajectory file " + path.string());
    }
    write_trajectory_csv(out, trajectory);
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read trajectory file " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "t,x,y,z") {
        throw ConfigError(path.string() + ": expected header t,x,y,z");
    }
    Trajectory out;
    out.axes = {Axis::X, Axis::Y, Axis::Z};
    out.positions.assign(3, {});
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        std::istringstream row(line);
        std::array<double, 4> v{};
        char comma = 0;
        row >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3];
        if (!row) {
            throw ConfigError(path.string() + ": malformed row at line " + std::to_string(line_no));
        }
        out.times.push_back(v[0]);
        for (std::size_t a = 0; a < 3; ++a) {
            out.positions[a].push_back(v[a + 1]);
        }
    }
    try {
        out.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace slicekit::dmp
