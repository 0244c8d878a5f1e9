#include "slicekit/dmp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace slicekit::dmp {

namespace {

constexpr double kDegeneratePhaseSum = 1e-12;

std::string format_instability(double dt, double tau, double step_time) {
    std::ostringstream msg;
    msg << "DMP rollout diverged at t=" << step_time << " s (dt=" << dt << " s, tau=" << tau
        << " 1/s); reduce dt or tau";
    return msg.str();
}

std::string format_condition(double cond) {
    std::ostringstream msg;
    msg << "normal equations are ill-conditioned (condition number " << cond
        << "); use a ridge coefficient lambda > 0";
    return msg.str();
}

// Design row for one phase value: alpha*beta * [psi_0, psi_k * x / sum(psi)].
Eigen::RowVectorXd design_row(double x, const DmpConfig& config) {
    const BasisActivations psi = basis_activations(x, config);
    const std::size_t k = config.basis_count();
    const double gain = config.alpha_z * config.beta_z;
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(k + 1));
    row(0) = gain * psi.values(0);
    const double sum = psi.values.tail(static_cast<Eigen::Index>(k)).sum();
    if (sum >= kDegeneratePhaseSum) {
        const double scale = gain * x / sum;
        for (std::size_t i = 1; i <= k; ++i) {
            row(static_cast<Eigen::Index>(i)) = scale * psi.values(static_cast<Eigen::Index>(i));
        }
    }
    return row;
}

}  // namespace

void DmpConfig::validate() const {
    if (!(alpha_z > 0.0) || !(beta_z > 0.0)) {
        throw std::invalid_argument("DmpConfig: alpha_z and beta_z must be positive");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("DmpConfig: tau must be positive");
    }
    if (!(dt > 0.0)) {
        throw std::invalid_argument("DmpConfig: dt must be positive");
    }
    if (centers.empty()) {
        throw std::invalid_argument("DmpConfig: at least one basis function is required");
    }
    if (centers.size() != widths.size()) {
        throw std::invalid_argument("DmpConfig: centers and widths differ in length");
    }
    for (const double w : widths) {
        if (!(w > 0.0)) {
            throw std::invalid_argument("DmpConfig: basis widths must be positive");
        }
    }
}

DmpConfig DmpConfig::uniform_basis(std::size_t k, double tau, double dt, double neighbor_overlap) {
    if (k == 0) {
        throw std::invalid_argument("DmpConfig: at least one basis function is required");
    }
    if (!(neighbor_overlap > 0.0 && neighbor_overlap < 1.0)) {
        throw std::invalid_argument("DmpConfig: neighbor overlap must lie in (0, 1)");
    }
    DmpConfig config;
    config.tau = tau;
    config.dt = dt;
    const double spacing = 1.0 / static_cast<double>(k);
    const double width = -std::log(neighbor_overlap) / (spacing * spacing);
    for (std::size_t i = 1; i <= k; ++i) {
        config.centers.push_back(static_cast<double>(i) * spacing);
        config.widths.push_back(width);
    }
    config.validate();
    return config;
}

void AxisDmp::validate() const {
    config.validate();
    if (weights.rows() < 1) {
        throw std::invalid_argument("AxisDmp: at least one feature row is required");
    }
    if (static_cast<std::size_t>(weights.cols()) != config.basis_count() + 1) {
        throw std::invalid_argument("AxisDmp: weight columns must equal K + 1");
    }
    if (!weights.allFinite()) {
        throw std::invalid_argument("AxisDmp: weights must be finite");
    }
}

ObjectFeatures::ObjectFeatures(std::vector<double> phi) : phi_(std::move(phi)) {
    if (phi_.empty() || phi_[0] != 1.0) {
        throw std::invalid_argument("ObjectFeatures: phi[0] must be exactly 1");
    }
    for (const double v : phi_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("ObjectFeatures: values must be finite");
        }
    }
}

char axis_name(Axis axis) {
    switch (axis) {
        case Axis::X: return 'x';
        case Axis::Y: return 'y';
        case Axis::Z: return 'z';
    }
    throw std::invalid_argument("unknown axis");
}

Axis axis_from_name(char name) {
    switch (name) {
        case 'x': case 'X': return Axis::X;
        case 'y': case 'Y': return Axis::Y;
        case 'z': case 'Z': return Axis::Z;
        default: break;
    }
    throw std::invalid_argument(std::string("unknown axis name '") + name + "'");
}

bool Trajectory::has_axis(Axis a) const {
    return std::find(axes.begin(), axes.end(), a) != axes.end();
}

const std::vector<double>& Trajectory::axis(Axis a) const {
    const auto it = std::find(axes.begin(), axes.end(), a);
    if (it == axes.end()) {
        throw std::invalid_argument(std::string("trajectory has no axis ") + axis_name(a));
    }
    return positions[static_cast<std::size_t>(it - axes.begin())];
}

std::vector<double>& Trajectory::axis(Axis a) {
    return const_cast<std::vector<double>&>(static_cast<const Trajectory&>(*this).axis(a));
}

void Trajectory::validate() const {
    if (axes.size() != positions.size()) {
        throw std::invalid_argument("Trajectory: axis labels and series differ in count");
    }
    for (const auto& series : positions) {
        if (series.size() != times.size()) {
            throw std::invalid_argument("Trajectory: series length differs from time stamps");
        }
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) {
            throw std::invalid_argument("Trajectory: times must be strictly increasing");
        }
    }
}

IntegrationInstability::IntegrationInstability(double dt_, double tau_, double step_time)
    : std::runtime_error(format_instability(dt_, tau_, step_time)), dt(dt_), tau(tau_) {}

IllConditioned::IllConditioned(double cond)
    : std::runtime_error(format_condition(cond)), condition_number(cond) {}

std::vector<double> canonical_rollout(double tau, double dt, std::size_t n_steps) {
    if (!(tau > 0.0) || !(dt > 0.0)) {
        throw std::invalid_argument("canonical_rollout: tau and dt must be positive");
    }
    if (n_steps == 0) {
        throw std::invalid_argument("canonical_rollout: n_steps must be at least 1");
    }
    std::vector<double> x(n_steps);
    for (std::size_t n = 0; n < n_steps; ++n) {
        x[n] = std::exp(-tau * dt * static_cast<double>(n));
    }
    return x;
}

double min_jerk(double s) {
    s = std::clamp(s, 0.0, 1.0);
    const double s3 = s * s * s;
    return s3 * (10.0 - 15.0 * s + 6.0 * s * s);
}

BasisActivations basis_activations(double x, const DmpConfig& config) {
    BasisActivations out;
    if (!(x > 0.0) || x > 1.0) {
        out.clamped = true;
        x = std::clamp(std::isnan(x) ? 0.0 : x, 0.0, 1.0);
    }
    const std::size_t k = config.basis_count();
    out.values.resize(static_cast<Eigen::Index>(k + 1));
    out.values(0) = min_jerk(1.0 - x);
    for (std::size_t i = 0; i < k; ++i) {
        const double d = x - config.centers[i];
        out.values(static_cast<Eigen::Index>(i + 1)) = std::exp(-config.widths[i] * d * d);
    }
    return out;
}

double forcing(double x, const Eigen::Ref<const Eigen::RowVectorXd>& weights, const DmpConfig& config) {
    if (static_cast<std::size_t>(weights.size()) != config.basis_count() + 1) {
        throw std::invalid_argument("forcing: weight row must have K + 1 entries");
    }
    return design_row(x, config).dot(weights);
}

Trajectory rollout(const AxisDmp& dmp, const ObjectFeatures& phi, double y0, double duration, Axis axis) {
    dmp.validate();
    if (phi.size() != dmp.feature_count()) {
        throw std::invalid_argument("rollout: object feature count does not match weight rows");
    }
    if (!(duration > 0.0)) {
        throw std::invalid_argument("rollout: duration must be positive");
    }
    const DmpConfig& cfg = dmp.config;
    const std::size_t n = static_cast<std::size_t>(std::llround(duration / cfg.dt)) + 1;
    const std::vector<double> phase = canonical_rollout(cfg.tau, cfg.dt, n);

    // Phi-weighted row so each step costs one dot product.
    Eigen::RowVectorXd combined = Eigen::RowVectorXd::Zero(dmp.weights.cols());
    for (std::size_t j = 0; j < phi.size(); ++j) {
        combined += phi[j] * dmp.weights.row(static_cast<Eigen::Index>(j));
    }

    const double tau2 = cfg.tau * cfg.tau;
    const double stiffness = cfg.alpha_z * cfg.beta_z * tau2;
    const double damping = cfg.alpha_z * cfg.tau;
    const double dt = cfg.dt;
    const double dt2 = dt * dt;

    Trajectory out;
    out.axes = {axis};
    out.times.resize(n);
    out.positions.assign(1, std::vector<double>(n));
    std::vector<double>& y = out.positions[0];

    // Central-difference scheme with implicit damping, on u = y - y0:
    //   (u[n+1] - 2u[n] + u[n-1]) / dt^2 = -k u[n] - c (u[n+1] - u[n-1]) / (2 dt) + F[n]
    // Starting at rest means u[-1] = u[1].
    std::vector<double> u(n, 0.0);
    if (n > 1) {
        u[1] = 0.5 * dt2 * tau2 * combined.dot(design_row(phase[0], cfg));
    }
    const double lead = 1.0 + 0.5 * damping * dt;
    const double trail = 1.0 - 0.5 * damping * dt;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double f = tau2 * combined.dot(design_row(phase[i], cfg));
        u[i + 1] = (2.0 * u[i] - trail * u[i - 1] + dt2 * (f - stiffness * u[i])) / lead;
        if (!std::isfinite(u[i + 1]) || std::abs(y0 + u[i + 1]) > kRolloutSanityBound) {
            throw IntegrationInstability(dt, cfg.tau, static_cast<double>(i + 1) * dt);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.times[i] = static_cast<double>(i) * dt;
        y[i] = y0 + u[i];
    }
    return out;
}

Derivatives finite_differences(std::span<const double> y, double dt) {
    const std::size_t n = y.size();
    Derivatives d;
    d.velocity.assign(n, 0.0);
    d.acceleration.assign(n, 0.0);
    if (n < 3) {
        if (n == 2) {
            d.velocity[0] = d.velocity[1] = (y[1] - y[0]) / dt;
        }
        return d;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        d.velocity[i] = (y[i + 1] - y[i - 1]) / (2.0 * dt);
        d.acceleration[i] = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (dt * dt);
    }
    d.velocity[0] = (y[1] - y[0]) / dt;
    d.velocity[n - 1] = (y[n - 1] - y[n - 2]) / dt;
    d.acceleration[0] = (y[2] - 2.0 * y[1] + y[0]) / (dt * dt);
    d.acceleration[n - 1] = (y[n - 1] - 2.0 * y[n - 2] + y[n - 3]) / (dt * dt);
    return d;
}

Trajectory resample_uniform(const Trajectory& trajectory, double dt) {
    trajectory.validate();
    if (trajectory.size() < 2) {
        return trajectory;
    }
    const double t0 = trajectory.times.front();
    const double span = trajectory.times.back() - t0;
    const std::size_t n = static_cast<std::size_t>(std::floor(span / dt + 1e-9)) + 1;
    Trajectory out;
    out.axes = trajectory.axes;
    out.times.resize(n);
    out.positions.assign(trajectory.axes.size(), std::vector<double>(n));
    std::size_t seg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) * dt;
        while (seg + 2 < trajectory.size() && trajectory.times[seg + 1] < t) {
            ++seg;
        }
        const double ta = trajectory.times[seg];
        const double tb = trajectory.times[seg + 1];
        const double u = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
        out.times[i] = static_cast<double>(i) * dt;
        for (std::size_t a = 0; a < trajectory.axes.size(); ++a) {
            const auto& p = trajectory.positions[a];
            out.positions[a][i] = p[seg] + u * (p[seg + 1] - p[seg]);
        }
    }
    return out;
}

std::map<Axis, AxisDmp> fit_weights(std::span<const Trajectory> demos, const DmpConfig& config, double lambda) {
    config.validate();
    if (demos.empty()) {
        throw std::invalid_argument("fit_weights: at least one demonstration is required");
    }
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument("fit_weights: lambda must be non-negative");
    }
    std::vector<Trajectory> uniform;
    uniform.reserve(demos.size());
    for (const auto& demo : demos) {
        uniform.push_back(resample_uniform(demo, config.dt));
        if (uniform.back().size() < 3) {
            throw std::invalid_argument("fit_weights: demonstrations need at least 3 samples");
        }
    }

    std::vector<Axis> fit_axes;
    for (const Axis a : uniform.front().axes) {
        if (a == Axis::Y) {
            continue;
        }
        for (const auto& demo : uniform) {
            if (!demo.has_axis(a)) {
                throw std::invalid_argument("fit_weights: demonstrations disagree on axes");
            }
        }
        fit_axes.push_back(a);
    }

    const double tau2 = config.tau * config.tau;
    const double stiffness = config.alpha_z * config.beta_z * tau2;
    const double damping = config.alpha_z * config.tau;
    const Eigen::Index cols = static_cast<Eigen::Index>(config.basis_count() + 1);

    // Only interior samples enter the regression: there the central stencils
    // match the rollout integrator exactly. The one-sided endpoint values are
    // still computed by finite_differences but would bias the fit.
    // The design matrix depends only on phase, shared across axes.
    std::size_t rows = 0;
    for (const auto& demo : uniform) {
        rows += demo.size() - 2;
    }
    Eigen::MatrixXd design(static_cast<Eigen::Index>(rows), cols);
    {
        Eigen::Index r = 0;
        for (const auto& demo : uniform) {
            const std::vector<double> phase = canonical_rollout(config.tau, config.dt, demo.size());
            for (std::size_t i = 1; i + 1 < phase.size(); ++i) {
                design.row(r++) = design_row(phase[i], config);
            }
        }
    }
    const Eigen::MatrixXd gram = design.transpose() * design;
    Eigen::MatrixXd normal = gram;
    normal.diagonal().array() += lambda;
    if (lambda == 0.0) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        if (!(cond < 1e12)) {
            throw IllConditioned(cond);
        }
    }
    const Eigen::LDLT<Eigen::MatrixXd> solver(normal);

    std::map<Axis, AxisDmp> out;
    for (const Axis a : fit_axes) {
        Eigen::VectorXd target(static_cast<Eigen::Index>(rows));
        Eigen::Index r = 0;
        for (const auto& demo : uniform) {
            const auto& y = demo.axis(a);
            const Derivatives d = finite_differences(y, config.dt);
            const double y0 = y.front();
            for (std::size_t i = 1; i + 1 < y.size(); ++i) {
                target(r++) = (d.acceleration[i] - stiffness * (y0 - y[i]) + damping * d.velocity[i]) / tau2;
            }
        }
        AxisDmp dmp;
        dmp.config = config;
        dmp.weights = solver.solve(design.transpose() * target).transpose();
        out.emplace(a, std::move(dmp));
    }
    return out;
}

Trajectory chain(std::span<const ChainSegment> segments, const Pose& start) {
    if (segments.empty()) {
        throw std::invalid_argument("chain: at least one segment is required");
    }
    const std::map<Axis, AxisDmp>& first_axes = segments.front().skill->axes;
    for (const auto& seg : segments) {
        if (seg.skill == nullptr) {
            throw std::invalid_argument("chain: segment without a skill");
        }
        if (seg.skill->axes.size() != first_axes.size()) {
            throw std::invalid_argument("chain: axis mismatch between segments");
        }
        for (const auto& [axis, dmp] : first_axes) {
            if (!seg.skill->axes.contains(axis) || !seg.features.contains(axis)) {
                throw std::invalid_argument(std::string("chain: axis mismatch between segments on ") +
                                            axis_name(axis));
            }
        }
    }

    Trajectory out;
    out.axes = {Axis::X, Axis::Y, Axis::Z};
    out.positions.assign(3, {});
    Pose current = start;
    double t_offset = 0.0;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const ChainSegment& seg = segments[s];
        std::array<std::vector<double>, 3> series;
        std::vector<double> times;
        for (const auto& [axis, dmp] : seg.skill->axes) {
            const std::size_t idx = static_cast<std::size_t>(axis);
            const Trajectory part =
                rollout(dmp, seg.features.at(axis), current[idx], seg.skill->duration, axis);
            series[idx] = part.positions[0];
            times = part.times;
        }
        for (std::size_t a = 0; a < 3; ++a) {
            if (series[a].empty()) {
                series[a].assign(times.size(), current[a]);
            }
        }
        const std::size_t skip = s == 0 ? 0 : 1;
        for (std::size_t i = skip; i < times.size(); ++i) {
            out.times.push_back(t_offset + times[i]);
            for (std::size_t a = 0; a < 3; ++a) {
                out.positions[a].push_back(series[a][i]);
            }
        }
        t_offset = out.times.back();
        for (std::size_t a = 0; a < 3; ++a) {
            current[a] = out.positions[a].back();
        }
    }
    return out;
}

AxisDmp attach_object_feature(const AxisDmp& fitted, double reference_extent) {
    fitted.validate();
    if (!(reference_extent > 0.0)) {
        throw std::invalid_argument("attach_object_feature: reference extent must be positive");
    }
    AxisDmp out;
    out.config = fitted.config;
    out.weights = Eigen::MatrixXd::Zero(2, fitted.weights.cols());
    out.weights.row(1) = fitted.weights.row(0) / reference_extent;
    return out;
}

std::map<Axis, ObjectFeatures> slicing_features(double phi1x, double phi1z) {
    std::map<Axis, ObjectFeatures> f;
    f.emplace(Axis::X, ObjectFeatures::with_parameter(phi1x));
    f.emplace(Axis::Z, ObjectFeatures::with_parameter(phi1z));
    return f;
}

}  // namespace slicekit::dmp
