#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace slicekit::dmp {

/// Spring-damper gains, canonical time constant and Gaussian basis layout.
///
/// `tau` is a rate (1/s): the canonical phase decays as dx/dt = -tau * x.
struct DmpConfig {
    double alpha_z = 25.0;
    double beta_z = 25.0 / 4.0;
    double tau = 2.0;
    std::vector<double> centers;
    std::vector<double> widths;
    double dt = 1e-3;

    std::size_t basis_count() const { return centers.size(); }
    void validate() const;

    /// K centers equally spaced on (0, 1] with widths chosen so that each
    /// Gaussian evaluates to `neighbor_overlap` at its neighbor's center.
    static DmpConfig uniform_basis(std::size_t k = 30, double tau = 2.0, double dt = 1e-3,
                                   double neighbor_overlap = 0.7);
};

/// Weight matrix for one axis: M feature rows x (K + 1) columns.
/// Column 0 holds the minimum-jerk weight, columns 1..K the Gaussian weights.
struct AxisDmp {
    DmpConfig config;
    Eigen::MatrixXd weights;

    std::size_t feature_count() const { return static_cast<std::size_t>(weights.rows()); }
    void validate() const;
};

/// Object features phi. phi[0] is the bias and is always exactly 1.
class ObjectFeatures {
public:
    explicit ObjectFeatures(std::vector<double> phi);

    static ObjectFeatures bias_only() { return ObjectFeatures({1.0}); }
    static ObjectFeatures with_parameter(double phi1) { return ObjectFeatures({1.0, phi1}); }

    std::span<const double> values() const { return phi_; }
    std::size_t size() const { return phi_.size(); }
    double operator[](std::size_t j) const { return phi_[j]; }

private:
    std::vector<double> phi_;
};

enum class Axis { X, Y, Z };

char axis_name(Axis axis);
Axis axis_from_name(char name);

struct Trajectory {
    std::vector<double> times;
    std::vector<Axis> axes;
    std::vector<std::vector<double>> positions;  // one series per axis

    std::size_t size() const { return times.size(); }
    bool has_axis(Axis axis) const;
    const std::vector<double>& axis(Axis axis) const;
    std::vector<double>& axis(Axis axis);
    void validate() const;
};

/// Raised when a rollout leaves the sanity bound.
class IntegrationInstability : public std::runtime_error {
public:
    IntegrationInstability(double dt, double tau, double step_time);
    double dt;
    double tau;
};

/// Raised by the unregularized fit when the normal equations are singular.
class IllConditioned : public std::runtime_error {
public:
    explicit IllConditioned(double condition_number);
    double condition_number;
};

/// Phase x_n = exp(-tau * n * dt) for n in [0, n_steps).
std::vector<double> canonical_rollout(double tau, double dt, std::size_t n_steps);

/// 10 s^3 - 15 s^4 + 6 s^5 with s clamped to [0, 1].
double min_jerk(double s);

struct BasisActivations {
    Eigen::VectorXd values;  // [psi_0, psi_1 .. psi_K]
    bool clamped = false;    // x was outside (0, 1] and was moved to the boundary
};

BasisActivations basis_activations(double x, const DmpConfig& config);

/// Forcing term for one weight row (K + 1 entries).
double forcing(double x, const Eigen::Ref<const Eigen::RowVectorXd>& weights, const DmpConfig& config);

/// Magnitude beyond which a rollout is declared unstable (meters).
inline constexpr double kRolloutSanityBound = 1.0e3;

/// Integrates one axis from rest at y0 for `duration` seconds.
/// The result has n = round(duration / dt) + 1 samples.
Trajectory rollout(const AxisDmp& dmp, const ObjectFeatures& phi, double y0, double duration,
                   Axis axis = Axis::X);

/// Ridge-regression imitation fit, one AxisDmp per non-Y axis of the demos.
/// Demos are resampled to config.dt before fitting.
std::map<Axis, AxisDmp> fit_weights(std::span<const Trajectory> demos, const DmpConfig& config,
                                    double lambda);

/// Linear resampling onto a uniform grid starting at the first timestamp.
Trajectory resample_uniform(const Trajectory& trajectory, double dt);

/// Central differences in the interior, one-sided at both ends.
struct Derivatives {
    std::vector<double> velocity;
    std::vector<double> acceleration;
};
Derivatives finite_differences(std::span<const double> y, double dt);

/// A multi-axis primitive: X and Z are driven, Y is held.
struct Skill {
    std::map<Axis, AxisDmp> axes;
    double duration = 1.5;
};

using Pose = std::array<double, 3>;  // x, y, z

struct ChainSegment {
    const Skill* skill = nullptr;
    std::map<Axis, ObjectFeatures> features;
};

/// Rolls out segments back to back; each starts at rest at the previous
/// segment's final position. Output axes are X, Y, Z.
Trajectory chain(std::span<const ChainSegment> segments, const Pose& start);

/// Turns a fitted single-row model into a two-row model whose second row is
/// driven by the material parameter: phi1 equal to `reference_extent`
/// reproduces the fitted motion, and the motion scales linearly with phi1.
AxisDmp attach_object_feature(const AxisDmp& fitted, double reference_extent);

/// Slicing skill with the demonstrated extents used to attach phi1.
struct SlicingModel {
    Skill skill;
    double reference_amplitude_x = 0.0;  // peak X excursion of the demos
    double reference_depth_z = 0.0;      // total Z descent of the demos
    double lambda = 0.0;
    std::size_t demo_count = 0;
};

/// Shape of the synthetic minimum-jerk slicing demonstrations.
struct DemoShape {
    double amplitude_x = 0.02;  // forward excursion, returns to start
    double depth_z = 0.01;      // descent over the action
    double duration = 1.5;
    double jitter = 0.015;      // relative amplitude variation between demos
};

/// Minimum-jerk back-and-forth X stroke with a minimum-jerk Z descent; Y is constant.
std::vector<Trajectory> synthetic_slicing_demos(std::size_t count, std::uint64_t seed,
                                                const DemoShape& shape = {}, double dt = 1e-3);

/// Fits X and Z, attaches phi1 rows scaled by the mean demonstrated extents.
SlicingModel learn_slicing_model(std::span<const Trajectory> demos, const DmpConfig& config,
                                 double lambda, double duration);

/// The model used by the sequencer when none is supplied on disk.
SlicingModel default_slicing_model();

/// Two-axis slicing action for material parameters (phi1x, phi1z).
std::map<Axis, ObjectFeatures> slicing_features(double phi1x, double phi1z);

nlohmann::json to_json(const DmpConfig& config);
DmpConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SlicingModel& model);
SlicingModel slicing_model_from_json(const nlohmann::json& j);

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory);
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

}  // namespace slicekit::dmp
