#include "slicekit/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace slicekit::seq {

namespace {

constexpr std::array<std::pair<SkillId, const char*>, 6> kSkillNames{{
    {SkillId::MoveDownOnBoard, "move_down_on_board"},
    {SkillId::MoveLeftToHitObject, "move_left_to_hit_object"},
    {SkillId::MoveUpAndOver, "move_up_and_over"},
    {SkillId::MoveDownOntoObject, "move_down_onto_object"},
    {SkillId::SlicingAction, "slicing_action"},
    {SkillId::Done, "done"},
}};

bool exceeds(const signals::ForceBuffer& forces, signals::ForceAxis axis, double threshold) {
    return std::any_of(forces.begin(), forces.end(),
                       [&](const signals::ForceSample& s) { return std::abs(s[axis]) > threshold; });
}

bool is_board(Event e) { return e == Event::HittingBoard || e == Event::ScrapingBoard; }

std::optional<classify::MlpModel> load_model(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        return std::nullopt;
    }
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
        return classify::model_from_json(j);
    } catch (const std::exception& e) {
        throw ConfigError("model " + path.string() + ": " + e.what());
    }
}

}  // namespace

const char* skill_name(SkillId id) {
    for (const auto& [k, name] : kSkillNames) {
        if (k == id) {
            return name;
        }
    }
    return "unknown";
}

SkillId skill_from_name(const std::string& name) {
    for (const auto& [k, n] : kSkillNames) {
        if (name == n) {
            return k;
        }
    }
    throw std::invalid_argument("unknown skill '" + name + "'");
}

const char* termination_name(TerminationKind k) {
    switch (k) {
        case TerminationKind::ForceZ: return "contact on Z";
        case TerminationKind::ForceX: return "contact on X";
        case TerminationKind::MotionComplete: return "motion complete";
        case TerminationKind::HittingMonitor: return "hitting event monitoring";
        case TerminationKind::SlicingMonitor: return "slicing event monitoring";
        case TerminationKind::None: return "none";
    }
    return "unknown";
}

const char* failure_name(FailureKind k) {
    return k == FailureKind::Slip ? "slip" : "premature_board_hit";
}

const std::vector<SkillState>& skill_table() {
    static const std::vector<SkillState> table{
        {SkillId::MoveDownOnBoard, TerminationKind::ForceZ, SkillId::MoveLeftToHitObject, {}},
        {SkillId::MoveLeftToHitObject, TerminationKind::ForceX, SkillId::MoveUpAndOver, {}},
        {SkillId::MoveUpAndOver, TerminationKind::MotionComplete, SkillId::MoveDownOntoObject, {}},
        {SkillId::MoveDownOntoObject,
         TerminationKind::HittingMonitor,
         SkillId::SlicingAction,
         {{FailureKind::PrematureBoardHit, SkillId::MoveUpAndOver}}},
        {SkillId::SlicingAction,
         TerminationKind::SlicingMonitor,
         SkillId::MoveUpAndOver,
         {{FailureKind::Slip, SkillId::MoveDownOntoObject}}},
        {SkillId::Done, TerminationKind::None, SkillId::Done, {}},
    };
    return table;
}

const SkillState& skill_state(SkillId id) {
    for (const auto& s : skill_table()) {
        if (s.id == id) {
            return s;
        }
    }
    throw std::invalid_argument("unknown skill id");
}

SkillId next_skill(SkillId from, bool slices_remaining) {
    if (from == SkillId::SlicingAction) {
        return slices_remaining ? SkillId::MoveUpAndOver : SkillId::Done;
    }
    return skill_state(from).on_terminate;
}

void SequencerConfig::validate() const {
    if (!(force_threshold > 0.0) || !(board_speed > 0.0) || !(left_speed > 0.0) || !(descent_speed > 0.0) ||
        !(travel_speed > 0.0)) {
        throw std::invalid_argument("sequencer: thresholds and speeds must be positive");
    }
    if (!(slice_thickness > 0.0) || !(lift > 0.0) || !(safe_height > 0.0) || !(engagement >= 0.0)) {
        throw std::invalid_argument("sequencer: distances must be positive");
    }
    if (smoothing == 0 || max_actions == 0 || budget_windows == 0) {
        throw std::invalid_argument("sequencer: smoothing, action and window limits must be at least 1");
    }
    if (!(engagement_gain >= 1.0)) {
        throw std::invalid_argument("sequencer: engagement gain must be >= 1");
    }
}

CheckResult termination_check(SkillId skill, const CheckInput& in, const SequencerConfig& config) {
    auto need_decision = [&] {
        if (in.decision == nullptr) {
            throw std::invalid_argument(std::string("termination_check: ") + skill_name(skill) +
                                        " needs a monitor decision");
        }
        return in.decision->smoothed;
    };
    auto need_forces = [&]() -> const signals::ForceBuffer& {
        if (in.forces == nullptr) {
            throw std::invalid_argument(std::string("termination_check: ") + skill_name(skill) + " needs forces");
        }
        return *in.forces;
    };
    switch (skill) {
        case SkillId::MoveDownOnBoard:
            return {exceeds(need_forces(), signals::Fz, config.force_threshold) ? Verdict::Terminate
                                                                                : Verdict::Continue,
                    std::nullopt};
        case SkillId::MoveLeftToHitObject:
            return {exceeds(need_forces(), signals::Fx, config.force_threshold) ? Verdict::Terminate
                                                                                : Verdict::Continue,
                    std::nullopt};
        case SkillId::MoveUpAndOver:
            return {in.motion_complete ? Verdict::Terminate : Verdict::Continue, std::nullopt};
        case SkillId::MoveDownOntoObject: {
            const auto d = need_decision();
            if (d == Event::HittingObject || d == Event::SlicingObject) {
                return {Verdict::Terminate, std::nullopt};
            }
            if (d && is_board(*d)) {
                return {Verdict::Failure, FailureKind::PrematureBoardHit};
            }
            return {};
        }
        case SkillId::SlicingAction: {
            const auto d = need_decision();
            if (d && is_board(*d)) {
                return {Verdict::Terminate, std::nullopt};
            }
            if (d == Event::ScrapingObject) {
                return {Verdict::Failure, FailureKind::Slip};
            }
            return {};
        }
        case SkillId::Done: break;
    }
    throw std::invalid_argument("termination_check: no active skill");
}

// Parameters -----------------------------------------------------------------

ParamTable::ParamTable(std::map<std::string, std::pair<double, double>> entries) : entries_(std::move(entries)) {
    for (const auto& [label, p] : entries_) {
        if (!(p.first >= 0.0) || !(p.second >= 0.0)) {
            throw std::invalid_argument("parameter table: negative parameters for '" + label + "'");
        }
    }
}

ParamTable ParamTable::from_materials(const std::vector<sim::MaterialSpec>& materials) {
    std::map<std::string, std::pair<double, double>> e;
    for (const auto& m : materials) {
        e[m.name] = {m.phi_x, m.phi_z};
    }
    return ParamTable(std::move(e));
}

std::pair<double, double> ParamTable::at(const std::string& label) const {
    const auto it = entries_.find(label);
    if (it == entries_.end()) {
        throw std::out_of_range("parameter table has no entry for '" + label + "'");
    }
    return it->second;
}

void ParamTable::check_covers(const std::vector<std::string>& labels) const {
    for (const auto& l : labels) {
        if (!contains(l)) {
            throw ConfigError("parameter table has no entry for classifier label '" + l + "'");
        }
    }
}

nlohmann::json to_json(const ParamTable& table) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [label, p] : table.entries()) {
        j[label] = {p.first, p.second};
    }
    return j;
}

ParamTable param_table_from_json(const nlohmann::json& j) {
    std::map<std::string, std::pair<double, double>> e;
    for (const auto& [label, v] : j.items()) {
        const auto p = v.get<std::vector<double>>();
        if (p.size() != 2) {
            throw std::invalid_argument("parameter table: '" + label + "' needs two values");
        }
        e[label] = {p[0], p[1]};
    }
    return ParamTable(std::move(e));
}

// Monitors -----------------------------------------------------------------------

MonitorDecision Monitor::observe(const ObservedWindow& w, SkillId skill) {
    MonitorDecision d;
    d.posterior = posterior(w, skill);
    d.raw = static_cast<Event>(std::max_element(d.posterior.begin(), d.posterior.end()) - d.posterior.begin());
    history_.push_back(d.raw);
    while (history_.size() > smoothing_) {
        history_.pop_front();
    }
    if (history_.size() == smoothing_ &&
        std::all_of(history_.begin(), history_.end(), [&](Event e) { return e == d.raw; })) {
        d.smoothed = d.raw;
    }
    return d;
}

std::optional<std::pair<double, double>> Monitor::regress_params(const std::vector<ObservedWindow>&) {
    return std::nullopt;
}

std::array<double, kEventCount> OracleMonitor::posterior(const ObservedWindow& w, SkillId) {
    std::array<double, kEventCount> p{};
    p[static_cast<std::size_t>(w.window->truth)] = 1.0;
    return p;
}

Models Models::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("model directory " + dir.string() + " does not exist");
    }
    Models m;
    m.hitting = load_model(dir / "hitting.json");
    m.slicing = load_model(dir / "slicing.json");
    m.slicenet = load_model(dir / "slicenet.json");
    m.foodnet = load_model(dir / "foodnet.json");
    m.regression = load_model(dir / "regress.json");
    if (std::filesystem::exists(dir / "params.json")) {
        std::ifstream in(dir / "params.json");
        nlohmann::json j;
        try {
            in >> j;
            m.table = param_table_from_json(j);
        } catch (const std::exception& e) {
            throw ConfigError("params.json: " + std::string(e.what()));
        }
    }
    if (m.foodnet) {
        m.table.check_covers(m.foodnet->labels);
    }
    return m;
}

std::vector<double> model_input(const classify::MlpModel& model, std::span<const double> full) {
    if (model.feature_mask == "full") {
        return {full.begin(), full.end()};
    }
    return signals::select(full, signals::FeatureMask::parse(model.feature_mask));
}

std::array<double, kEventCount> event_posterior(const classify::MlpModel& model, std::span<const double> features) {
    const auto input = model_input(model, features);
    const Eigen::VectorXd probs = classify::forward(model, input);
    std::array<double, kEventCount> p{};
    for (std::size_t i = 0; i < model.labels.size(); ++i) {
        const auto e = event_from_name(model.labels[i]);
        if (!e) {
            throw ConfigError("event model has non-event label '" + model.labels[i] + "'");
        }
        p[static_cast<std::size_t>(*e)] = probs(static_cast<Eigen::Index>(i));
    }
    return p;
}

LearnedMonitor::LearnedMonitor(const Models& models, std::size_t smoothing) : Monitor(smoothing), models_(models) {
    if (!models.slicenet && !(models.hitting && models.slicing)) {
        throw std::invalid_argument("learned monitor needs hitting and slicing models or a six-way model");
    }
}

std::array<double, kEventCount> LearnedMonitor::posterior(const ObservedWindow& w, SkillId skill) {
    const classify::MlpModel* model = models_.slicenet ? &*models_.slicenet : nullptr;
    if (skill == SkillId::MoveDownOntoObject && models_.hitting) {
        model = &*models_.hitting;
    } else if (skill == SkillId::SlicingAction && models_.slicing) {
        model = &*models_.slicing;
    }
    if (model == nullptr) {
        throw std::invalid_argument(std::string("no event model for skill ") + skill_name(skill));
    }
    return event_posterior(*model, w.features);
}

std::string LearnedMonitor::classify_material(const std::vector<ObservedWindow>& descent) {
    if (!models_.foodnet) {
        throw std::invalid_argument("adaptive policy needs a material classifier");
    }
    if (descent.empty()) {
        throw std::invalid_argument("classify_material: no descent windows");
    }
    const auto& model = *models_.foodnet;
    std::vector<std::size_t> votes(model.labels.size(), 0);
    std::vector<double> mass(model.labels.size(), 0.0);
    for (const auto& w : descent) {
        const Eigen::VectorXd p = classify::forward(model, model_input(model, w.features));
        Eigen::Index best = 0;
        p.maxCoeff(&best);
        ++votes[static_cast<std::size_t>(best)];
        for (std::size_t i = 0; i < mass.size(); ++i) {
            mass[i] += p(static_cast<Eigen::Index>(i));
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < votes.size(); ++i) {
        if (votes[i] > votes[best] || (votes[i] == votes[best] && mass[i] > mass[best])) {
            best = i;
        }
    }
    return model.labels[best];
}

std::optional<std::pair<double, double>> LearnedMonitor::regress_params(const std::vector<ObservedWindow>& descent) {
    if (!models_.regression) {
        return std::nullopt;
    }
    if (descent.empty()) {
        throw std::invalid_argument("regress_params: no descent windows");
    }
    double x = 0.0, z = 0.0;
    for (const auto& w : descent) {
        const auto p = classify::predict_slice_params(*models_.regression, model_input(*models_.regression, w.features));
        x += p.first;
        z += p.second;
    }
    const double n = static_cast<double>(descent.size());
    return std::pair{x / n, z / n};
}

std::string Policy::name() const {
    if (!adaptive) {
        return "fixed";
    }
    return mode == AdaptMode::Lookup ? "adaptive" : "adaptive-direct";
}

std::pair<double, double> adapt_params(Monitor& monitor, const ParamTable& table, AdaptMode mode,
                                       const std::vector<ObservedWindow>& descent) {
    if (mode == AdaptMode::Direct) {
        const auto p = monitor.regress_params(descent);
        if (!p) {
            throw std::invalid_argument("direct adaptation needs a regression model");
        }
        return *p;
    }
    return table.at(monitor.classify_material(descent));
}

}  // namespace slicekit::seq
