#pragma once

#include "slicekit/classify.hpp"
#include "slicekit/dmp.hpp"
#include "slicekit/events.hpp"
#include "slicekit/simulator.hpp"

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace slicekit::seq {

enum class SkillId { MoveDownOnBoard, MoveLeftToHitObject, MoveUpAndOver, MoveDownOntoObject, SlicingAction, Done };

const char* skill_name(SkillId id);
/// Throws std::invalid_argument for unknown names.
SkillId skill_from_name(const std::string& name);

enum class TerminationKind { ForceZ, ForceX, MotionComplete, HittingMonitor, SlicingMonitor, None };
const char* termination_name(TerminationKind k);

enum class FailureKind { Slip, PrematureBoardHit };
const char* failure_name(FailureKind k);

/// One row of the skill table: how a skill ends and where it goes next.
struct SkillState {
    SkillId id;
    TerminationKind termination;
    SkillId on_terminate;
    std::vector<std::pair<FailureKind, SkillId>> on_failure;
};

/// The cutting FSM. Failure edges lead back to a recovery skill.
const std::vector<SkillState>& skill_table();
const SkillState& skill_state(SkillId id);

/// Next skill after `from` ends normally; MoveUpAndOver follows SlicingAction
/// while slices remain, Done otherwise.
SkillId next_skill(SkillId from, bool slices_remaining);

struct MonitorDecision {
    std::array<double, kEventCount> posterior{};  // indexed by Event
    Event raw = Event::InAir;
    std::optional<Event> smoothed;  // set once k consecutive windows agree
};

struct SequencerConfig {
    double force_threshold = 10.0;  // N on the localization motion axis
    double lift = 0.005;            // m after touching the board
    double slice_thickness = 0.01;  // m
    double board_speed = 0.03;      // m/s
    double left_speed = 0.02;
    double descent_speed = 0.03;
    double travel_speed = 0.05;
    double clearance = 0.01;        // m above the last known top surface
    double safe_height = 0.14;      // m above the board before the item height is known
    std::size_t smoothing = 2;      // consecutive agreeing windows for a decision
    double engagement = 0.003;      // m of downward preload at the start of each slicing action
    double engagement_gain = 1.5;   // per slip recovery
    std::size_t max_recoveries = 4; // slips per slice
    std::size_t max_retries = 3;    // premature board hits per slice
    std::size_t max_actions = 20;   // slicing actions per slice
    double reoffset = 0.002;        // m shifted toward the item after a premature board hit
    std::size_t budget_windows = 900;  // per requested slice, plus one slice worth for localization

    void validate() const;
};

enum class Verdict { Continue, Terminate, Failure };

struct CheckResult {
    Verdict verdict = Verdict::Continue;
    std::optional<FailureKind> failure;
};

struct CheckInput {
    const MonitorDecision* decision = nullptr;
    const signals::ForceBuffer* forces = nullptr;
    bool motion_complete = false;
};

/// Throws std::invalid_argument for Done (no active skill).
CheckResult termination_check(SkillId skill, const CheckInput& input, const SequencerConfig& config);

/// Material label -> (phi1x, phi1z).
class ParamTable {
public:
    ParamTable() = default;
    explicit ParamTable(std::map<std::string, std::pair<double, double>> entries);
    static ParamTable from_materials(const std::vector<sim::MaterialSpec>& materials);

    /// Throws std::out_of_range for labels without an entry.
    std::pair<double, double> at(const std::string& label) const;
    bool contains(const std::string& label) const { return entries_.count(label) > 0; }
    const std::map<std::string, std::pair<double, double>>& entries() const { return entries_; }
    /// Every classifier label must have an entry.
    void check_covers(const std::vector<std::string>& labels) const;

private:
    std::map<std::string, std::pair<double, double>> entries_;
};

nlohmann::json to_json(const ParamTable& table);
ParamTable param_table_from_json(const nlohmann::json& j);

/// Per-window features in the full layout, computed once and shared by models.
struct ObservedWindow {
    const sim::EmittedWindow* window = nullptr;
    std::vector<double> features;
};

/// Event and material decisions for the FSM.
class Monitor {
public:
    explicit Monitor(std::size_t smoothing) : smoothing_(smoothing) {}
    virtual ~Monitor() = default;

    /// Classifies one window for the given skill and applies smoothing.
    MonitorDecision observe(const ObservedWindow& w, SkillId skill);
    void reset() { history_.clear(); }

    /// Material label from the windows of a downward approach.
    virtual std::string classify_material(const std::vector<ObservedWindow>& descent) = 0;
    /// Direct parameter estimate; nullopt when the monitor has no regression model.
    virtual std::optional<std::pair<double, double>> regress_params(const std::vector<ObservedWindow>& descent);
    virtual bool needs_features() const = 0;

protected:
    virtual std::array<double, kEventCount> posterior(const ObservedWindow& w, SkillId skill) = 0;

private:
    std::size_t smoothing_;
    std::deque<Event> history_;
};

/// Reads simulator ground truth; no smoothing so FSM transitions mirror the truth.
class OracleMonitor : public Monitor {
public:
    explicit OracleMonitor(std::string material) : Monitor(1), material_(std::move(material)) {}
    std::string classify_material(const std::vector<ObservedWindow>&) override { return material_; }
    bool needs_features() const override { return false; }

protected:
    std::array<double, kEventCount> posterior(const ObservedWindow& w, SkillId skill) override;

private:
    std::string material_;
};

struct Models {
    std::optional<classify::MlpModel> hitting;     // in air / hitting board / hitting object
    std::optional<classify::MlpModel> slicing;     // slicing object / scraping object / board events
    std::optional<classify::MlpModel> slicenet;    // six-way fallback when a skill net is missing
    std::optional<classify::MlpModel> foodnet;     // material classifier
    std::optional<classify::MlpModel> regression;  // (phi1x, phi1z)
    ParamTable table;

    /// Loads whichever of hitting.json, slicing.json, slicenet.json, foodnet.json,
    /// regress.json and params.json exist in `dir`.
    static Models load(const std::filesystem::path& dir);
};

class LearnedMonitor : public Monitor {
public:
    LearnedMonitor(const Models& models, std::size_t smoothing);
    std::string classify_material(const std::vector<ObservedWindow>& descent) override;
    std::optional<std::pair<double, double>> regress_params(const std::vector<ObservedWindow>& descent) override;
    bool needs_features() const override { return true; }

protected:
    std::array<double, kEventCount> posterior(const ObservedWindow& w, SkillId skill) override;

private:
    const Models& models_;
};

/// Class probabilities of `model` on a full-layout feature vector, mapped onto events.
std::array<double, kEventCount> event_posterior(const classify::MlpModel& model, std::span<const double> features);

/// Features selected by the model's mask.
std::vector<double> model_input(const classify::MlpModel& model, std::span<const double> full);

enum class AdaptMode { Lookup, Direct };

struct Policy {
    bool adaptive = false;
    AdaptMode mode = AdaptMode::Lookup;
    double fixed_x = 0.02;  // conservative parameters of the fixed policy
    double fixed_z = 0.01;

    std::string name() const;
};

/// Lookup: the table entry of the predicted label. Direct: the clamped regression output.
std::pair<double, double> adapt_params(Monitor& monitor, const ParamTable& table, AdaptMode mode,
                                       const std::vector<ObservedWindow>& descent);

struct WindowLog {
    std::size_t index = 0;
    double time = 0.0;  // s at the end of the window
    SkillId skill = SkillId::Done;
    Event truth = Event::InAir;
    std::optional<Event> decision;  // smoothed monitor decision, monitored skills only
};

struct Transition {
    std::size_t window = 0;
    SkillId from = SkillId::Done;
    SkillId to = SkillId::Done;
    std::string reason;
};

struct FailureLog {
    FailureKind kind;
    std::size_t slice = 0;
    std::size_t window = 0;
};

struct SliceLog {
    double seconds = 0.0;        // simulated skill time for this slice
    std::size_t actions = 0;     // slicing DMP executions
    std::size_t recoveries = 0;  // slips recovered
    std::size_t retries = 0;     // premature board hits
    bool completed = false;
    double thickness = 0.0;      // measured in the world, m
};

struct EpisodeLog {
    std::string material;
    std::string policy;
    std::uint64_t seed = 0;
    std::size_t slices_requested = 0;
    std::size_t slices_completed = 0;
    std::string outcome;  // "completed", "uncuttable", or "aborted: <reason>"
    std::optional<std::string> predicted_material;
    double phi_x = 0.0;
    double phi_z = 0.0;
    std::vector<SliceLog> slices;
    std::vector<FailureLog> failures;
    std::vector<WindowLog> windows;
    std::vector<Transition> transitions;
    std::vector<signals::SensorWindow> sensor_windows;  // filled only when requested
    double seconds = 0.0;

    std::size_t total_actions() const;
    /// Slicing actions per completed slice; infinity when no slice completed.
    double actions_per_slice() const;
};

nlohmann::json to_json(const EpisodeLog& log);

struct EpisodeRequest {
    sim::MaterialSpec material;
    sim::SimConfig sim;
    SequencerConfig config;
    Policy policy;
    std::size_t slices = 3;
    std::uint64_t seed = 0;
    bool keep_windows = false;
};

/// Runs the cutting FSM in a fresh world. Throws std::invalid_argument when the
/// monitor cannot support the policy (e.g. no material classifier).
EpisodeLog run_episode(const EpisodeRequest& request, Monitor& monitor, const ParamTable& table,
                       const dmp::SlicingModel& model);

// Fixed vs adaptive comparison ---------------------------------------------------

struct BenchRow {
    std::string material;
    std::string policy;
    std::uint64_t seed = 0;
    std::size_t slices_completed = 0;
    std::size_t actions = 0;
    double actions_per_slice = 0.0;
    double seconds_per_slice = 0.0;
    std::size_t failures = 0;
    std::string outcome;
};

struct BenchSummary {
    std::string material;
    double fixed_actions = 0.0;     // mean actions per completed slice
    double adaptive_actions = 0.0;
    double fixed_seconds = 0.0;     // mean seconds per completed slice
    double adaptive_seconds = 0.0;
    std::size_t fixed_failures = 0;
    std::size_t adaptive_failures = 0;
    double reduction = 0.0;         // 1 - adaptive / fixed actions
};

struct BenchResult {
    std::vector<BenchRow> rows;
    std::vector<BenchSummary> per_material;
    BenchSummary overall;
};

using MonitorFactory = std::function<std::unique_ptr<Monitor>(const sim::MaterialSpec&)>;

/// Cuttable materials with hardness at most `max_hardness`.
std::vector<sim::MaterialSpec> soft_materials(const std::vector<sim::MaterialSpec>& all, double max_hardness = 0.5);

BenchResult bench(const std::vector<sim::MaterialSpec>& materials, const MonitorFactory& monitors,
                  const ParamTable& table, const dmp::SlicingModel& model, std::size_t seeds, std::size_t slices,
                  std::uint64_t base_seed, const Policy& fixed, const Policy& adaptive,
                  const SequencerConfig& config = {}, const sim::SimConfig& sim = {}, std::size_t jobs = 1);

void write_bench_csv(std::ostream& out, const BenchResult& result);

}  // namespace slicekit::seq
