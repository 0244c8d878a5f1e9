#include "slicekit/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <cstdio>
#include <thread>

namespace slicekit::seq {

namespace {

constexpr double kBlocked = 0.002;  // m of tracking error that counts as blocked

struct Abort {
    std::string reason;
};

struct Observation {
    sim::EmittedWindow emitted;
    ObservedWindow view;
    MonitorDecision decision;
};

class Runner {
public:
    Runner(const EpisodeRequest& req, Monitor& monitor, const ParamTable& table, const dmp::SlicingModel& model)
        : req_(req),
          monitor_(monitor),
          table_(table),
          model_(model),
          world_(req.material, req.sim, derive_seed(req.seed, "world"), req.material.length + 0.03,
                 req.sim.board_z + 0.08),
          budget_(req.config.budget_windows * (req.slices + 1)) {
        log_.material = req.material.name;
        log_.policy = req.policy.name();
        log_.seed = req.seed;
        log_.slices_requested = req.slices;
    }

    EpisodeLog run() {
        try {
            execute();
        } catch (const Abort& a) {
            log_.outcome = "aborted: " + a.reason;
            close_slice();
        }
        if (current_ != SkillId::Done) {
            enter(SkillId::Done, log_.outcome);
        }
        log_.seconds = world_.state().time;
        return std::move(log_);
    }

private:
    const SequencerConfig& cfg() const { return req_.config; }
    sim::WorldState& st() { return world_.state(); }

    void enter(SkillId to, const std::string& reason) {
        log_.transitions.push_back({log_.windows.size(), current_, to, reason});
        current_ = to;
        monitor_.reset();
    }

    // Runs one window, feeding each step's command from `command`.
    template <typename F>
    Observation window(F&& command, bool monitored) {
        if (log_.windows.size() >= budget_) {
            throw Abort{"window budget exhausted"};
        }
        while (st().pending.size() < world_.steps_per_window()) {
            world_.step(command());
        }
        Observation obs;
        obs.emitted = world_.emit();
        obs.view.window = &obs.emitted;
        if (monitored) {
            if (monitor_.needs_features()) {
                obs.view.features = signals::fuse(obs.emitted.window).values;
            }
            obs.decision = monitor_.observe(obs.view, current_);
        }
        WindowLog w;
        w.index = log_.windows.size();
        w.time = st().time;
        w.skill = current_;
        w.truth = obs.emitted.truth;
        if (monitored) {
            w.decision = obs.decision.smoothed;
        }
        log_.windows.push_back(w);
        if (req_.keep_windows) {
            log_.sensor_windows.push_back(obs.emitted.window);
        }
        return obs;
    }

    // Straight-line move of the commanded pose; finishes the window it ends in.
    // Returns false, with the command re-synced, when the knife is held back.
    bool move_to(double tx, double tz) {
        const double dt = req_.sim.step_dt;
        const double speed = cfg().travel_speed;
        bool arrived = false;
        while (!arrived) {
            if (std::hypot(st().cmd_x - st().x, st().cmd_z - st().z) > kBlocked) {
                sim::sync_command(st());
                return false;
            }
            window(
                [&] {
                    const double dx = tx - st().cmd_x;
                    const double dz = tz - st().cmd_z;
                    const double dist = std::hypot(dx, dz);
                    if (dist <= speed * dt) {
                        return sim::Command{dx / dt, dz / dt};
                    }
                    return sim::Command{dx / dist * speed, dz / dist * speed};
                },
                false);
            arrived = std::hypot(tx - st().cmd_x, tz - st().cmd_z) < 1e-9;
        }
        return true;
    }

    void localize() {
        enter(SkillId::MoveDownOnBoard, "start");
        for (;;) {
            const auto obs = window([&] { return sim::Command{0.0, -cfg().board_speed}; }, false);
            CheckInput in;
            in.forces = &obs.emitted.window.forces;
            if (termination_check(current_, in, cfg()).verdict == Verdict::Terminate) {
                break;
            }
        }
        sim::sync_command(st());
        move_to(st().x, st().z + cfg().lift);

        enter(SkillId::MoveLeftToHitObject, "contact on Z");
        for (;;) {
            const auto obs = window([&] { return sim::Command{-cfg().left_speed, 0.0}; }, false);
            CheckInput in;
            in.forces = &obs.emitted.window.forces;
            if (termination_check(current_, in, cfg()).verdict == Verdict::Terminate) {
                break;
            }
            if (st().x < -0.5) {
                throw Abort{"no object found"};
            }
        }
        sim::sync_command(st());
        edge_ = st().x;
    }

    void move_up_and_over(double target_x, const std::string& reason) {
        enter(SkillId::MoveUpAndOver, reason);
        sim::sync_command(st());
        double z = known_top_ ? *known_top_ + cfg().clearance : req_.sim.board_z + cfg().safe_height;
        // Climb another clearance whenever the item blocks the way over.
        for (std::size_t tries = 0;; ++tries) {
            if (tries > 20) {
                throw Abort{"no way over the item"};
            }
            z = std::max(z, st().z);
            if (move_to(st().x, z) && move_to(target_x, z)) {
                break;
            }
            z += cfg().clearance;
        }
        CheckInput in;
        in.motion_complete = true;
        if (termination_check(current_, in, cfg()).verdict != Verdict::Terminate) {
            throw std::logic_error("move_up_and_over did not terminate on completion");
        }
    }

    // Descends until the monitor reports contact. Returns false on a premature board hit.
    bool move_down_onto_object(const std::string& reason, std::vector<Observation>* touching) {
        enter(SkillId::MoveDownOntoObject, reason);
        std::vector<Observation> all;
        for (;;) {
            auto obs = window([&] { return sim::Command{0.0, -cfg().descent_speed}; }, true);
            CheckInput in;
            in.decision = &obs.decision;
            in.forces = &obs.emitted.window.forces;
            const auto r = termination_check(current_, in, cfg());
            if (touching != nullptr && obs.decision.raw != Event::InAir) {
                touching->push_back(obs);
            }
            if (r.verdict == Verdict::Terminate) {
                known_top_ = st().z;
                sim::sync_command(st());
                return true;
            }
            if (r.verdict == Verdict::Failure) {
                log_.failures.push_back({*r.failure, slice_index_, log_.windows.size() - 1});
                sim::sync_command(st());
                return false;
            }
        }
    }

    void choose_params(std::vector<Observation>& touching) {
        if (params_) {
            return;
        }
        if (!req_.policy.adaptive) {
            params_ = {req_.policy.fixed_x, req_.policy.fixed_z};
            return;
        }
        std::vector<ObservedWindow> views;
        for (auto& o : touching) {
            o.view.window = &o.emitted;
            views.push_back(o.view);
        }
        if (views.empty()) {
            throw Abort{"no contact windows to classify"};
        }
        if (req_.policy.mode == AdaptMode::Lookup) {
            const std::string label = monitor_.classify_material(views);
            log_.predicted_material = label;
            params_ = table_.at(label);
        } else {
            params_ = adapt_params(monitor_, table_, AdaptMode::Direct, views);
        }
    }

    // One slice: offset, descend, slice until board contact.
    void slice() {
        SliceLog sl;
        const double t0 = st().time;
        const std::size_t thickness_before = st().slice_thickness.size();
        double target_x = edge_ - cfg().slice_thickness;
        open_slice_ = &sl;
        open_slice_start_ = t0;

        std::vector<Observation> touching;
        bool contact = false;
        std::string reason = slice_index_ == 0 ? "contact on X" : "slice complete";
        while (!contact) {
            move_up_and_over(target_x, reason);
            contact = move_down_onto_object("motion complete", params_ ? nullptr : &touching);
            if (!contact) {
                ++sl.retries;
                if (sl.retries > cfg().max_retries) {
                    throw Abort{"premature board hits exhausted retries"};
                }
                target_x -= cfg().reoffset;
                touching.clear();
                reason = "premature_board_hit";
            }
        }
        choose_params(touching);
        log_.phi_x = params_->first;
        log_.phi_z = params_->second;
        if (params_->first == 0.0 && params_->second == 0.0) {
            log_.outcome = "uncuttable";
            enter(SkillId::MoveUpAndOver, "uncuttable");
            move_to(st().x, *known_top_ + cfg().clearance);
            throw Done{};
        }
        const double cut_x = st().x;

        enter(SkillId::SlicingAction, "hitting event monitoring");
        bool complete = false;
        while (!complete) {
            if (sl.actions >= cfg().max_actions) {
                throw Abort{"slice stalled"};
            }
            ++sl.actions;
            sim::set_event_stream(st(), derive_seed(req_.seed, "events", slice_index_ * 1000 + sl.actions));
            sim::sync_command(st());
            st().cmd_z -= cfg().engagement * std::pow(cfg().engagement_gain, static_cast<double>(sl.recoveries));
            const dmp::ChainSegment seg{&model_.skill, dmp::slicing_features(params_->first, params_->second)};
            const auto traj = dmp::chain(std::span(&seg, 1), {st().x, 0.0, st().z});
            const auto& xs = traj.axis(dmp::Axis::X);
            const auto& zs = traj.axis(dmp::Axis::Z);
            const double dt = req_.sim.step_dt;
            const auto stride =
                static_cast<std::size_t>(std::lround(dt / (traj.times.size() > 1 ? traj.times[1] - traj.times[0] : dt)));
            std::size_t k = 0;
            auto next = [&] {
                if (k + stride >= xs.size()) {
                    return sim::Command{};
                }
                const sim::Command c{(xs[k + stride] - xs[k]) / dt, (zs[k + stride] - zs[k]) / dt};
                k += stride;
                return c;
            };
            bool slipped = false;
            while (k + stride < xs.size()) {
                const auto obs = window(next, true);
                CheckInput in;
                in.decision = &obs.decision;
                in.forces = &obs.emitted.window.forces;
                const auto r = termination_check(current_, in, cfg());
                if (r.verdict == Verdict::Terminate) {
                    complete = true;
                    break;
                }
                if (r.verdict == Verdict::Failure) {
                    log_.failures.push_back({*r.failure, slice_index_, log_.windows.size() - 1});
                    slipped = true;
                    break;
                }
            }
            if (slipped) {
                ++sl.recoveries;
                if (sl.recoveries > cfg().max_recoveries) {
                    throw Abort{"slip recoveries exhausted"};
                }
                sim::sync_command(st());
                move_to(st().x, st().z + cfg().lift);
                move_to(cut_x, st().cmd_z);
                while (!move_down_onto_object("slip", nullptr)) {
                    ++sl.retries;
                    if (sl.retries > cfg().max_retries) {
                        throw Abort{"premature board hits exhausted retries"};
                    }
                    move_up_and_over(st().x - cfg().reoffset, "premature_board_hit");
                }
                enter(SkillId::SlicingAction, "slip recovery");
            }
        }
        sim::sync_command(st());
        sl.completed = true;
        if (st().slice_thickness.size() > thickness_before) {
            sl.thickness = st().slice_thickness.back();
        }
        sl.seconds = st().time - t0;
        log_.slices.push_back(sl);
        open_slice_ = nullptr;
        ++log_.slices_completed;
        edge_ = cut_x;
    }

    struct Done {};

    void execute() {
        try {
            localize();
            for (slice_index_ = 0; slice_index_ < req_.slices; ++slice_index_) {
                slice();
            }
            log_.outcome = "completed";
            enter(SkillId::Done, "slicing event monitoring");
        } catch (const Done&) {
            open_slice_ = nullptr;
        }
    }

    void close_slice() {
        if (open_slice_ != nullptr) {
            SliceLog sl = *open_slice_;
            sl.seconds = st().time - open_slice_start_;
            log_.slices.push_back(sl);
            open_slice_ = nullptr;
        }
    }

    const EpisodeRequest& req_;
    Monitor& monitor_;
    const ParamTable& table_;
    const dmp::SlicingModel& model_;
    sim::World world_;
    std::size_t budget_;
    EpisodeLog log_;
    SkillId current_ = SkillId::Done;
    double edge_ = 0.0;
    std::optional<double> known_top_;
    std::optional<std::pair<double, double>> params_;
    std::size_t slice_index_ = 0;
    SliceLog* open_slice_ = nullptr;
    double open_slice_start_ = 0.0;
};

nlohmann::json opt_event(const std::optional<Event>& e) {
    return e ? nlohmann::json(std::string(event_name(*e))) : nlohmann::json(nullptr);
}

}  // namespace

std::size_t EpisodeLog::total_actions() const {
    std::size_t n = 0;
    for (const auto& s : slices) {
        n += s.actions;
    }
    return n;
}

double EpisodeLog::actions_per_slice() const {
    if (slices_completed == 0) {
        return std::numeric_limits<double>::infinity();
    }
    return static_cast<double>(total_actions()) / static_cast<double>(slices_completed);
}

nlohmann::json to_json(const EpisodeLog& log) {
    nlohmann::json slices = nlohmann::json::array();
    for (const auto& s : log.slices) {
        slices.push_back({{"seconds", s.seconds},
                          {"actions", s.actions},
                          {"recoveries", s.recoveries},
                          {"retries", s.retries},
                          {"completed", s.completed},
                          {"thickness", s.thickness}});
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : log.failures) {
        failures.push_back({{"kind", failure_name(f.kind)}, {"slice", f.slice}, {"window", f.window}});
    }
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& w : log.windows) {
        windows.push_back({{"index", w.index},
                           {"time", w.time},
                           {"skill", skill_name(w.skill)},
                           {"truth", std::string(event_name(w.truth))},
                           {"decision", opt_event(w.decision)}});
    }
    nlohmann::json transitions = nlohmann::json::array();
    for (const auto& t : log.transitions) {
        transitions.push_back(
            {{"window", t.window}, {"from", skill_name(t.from)}, {"to", skill_name(t.to)}, {"reason", t.reason}});
    }
    return {{"material", log.material},
            {"policy", log.policy},
            {"seed", log.seed},
            {"slices_requested", log.slices_requested},
            {"slices_completed", log.slices_completed},
            {"outcome", log.outcome},
            {"predicted_material", log.predicted_material ? nlohmann::json(*log.predicted_material) : nullptr},
            {"params", {log.phi_x, log.phi_z}},
            {"seconds", log.seconds},
            {"slices", slices},
            {"failures", failures},
            {"transitions", transitions},
            {"windows", windows}};
}

EpisodeLog run_episode(const EpisodeRequest& request, Monitor& monitor, const ParamTable& table,
                       const dmp::SlicingModel& model) {
    request.config.validate();
    request.material.validate();
    if (request.policy.adaptive && request.policy.mode == AdaptMode::Lookup && !table.contains(request.material.name) &&
        table.entries().empty()) {
        throw std::invalid_argument("adaptive policy needs a parameter table");
    }
    Runner runner(request, monitor, table, model);
    return runner.run();
}

std::vector<sim::MaterialSpec> soft_materials(const std::vector<sim::MaterialSpec>& all, double max_hardness) {
    std::vector<sim::MaterialSpec> out;
    for (const auto& m : all) {
        if (m.cuttable() && m.hardness <= max_hardness) {
            out.push_back(m);
        }
    }
    return out;
}

BenchResult bench(const std::vector<sim::MaterialSpec>& materials, const MonitorFactory& monitors,
                  const ParamTable& table, const dmp::SlicingModel& model, std::size_t seeds, std::size_t slices,
                  std::uint64_t base_seed, const Policy& fixed, const Policy& adaptive,
                  const SequencerConfig& config, const sim::SimConfig& sim, std::size_t jobs) {
    if (materials.empty() || seeds == 0 || slices == 0) {
        throw std::invalid_argument("bench: needs materials, seeds and slices");
    }
    struct Job {
        std::size_t material;
        std::size_t seed;
        bool adaptive;
    };
    std::vector<Job> work;
    for (std::size_t m = 0; m < materials.size(); ++m) {
        for (std::size_t s = 0; s < seeds; ++s) {
            work.push_back({m, s, false});
            work.push_back({m, s, true});
        }
    }
    std::vector<EpisodeLog> logs(work.size());
    auto run = [&](std::size_t i) {
        const Job& j = work[i];
        EpisodeRequest req;
        req.material = materials[j.material];
        req.sim = sim;
        req.config = config;
        req.policy = j.adaptive ? adaptive : fixed;
        req.slices = slices;
        req.seed = derive_seed(base_seed, "bench:" + req.material.name, j.seed);
        auto monitor = monitors(req.material);
        logs[i] = run_episode(req, *monitor, table, model);
    };
    jobs = std::max<std::size_t>(1, jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < work.size(); ++i) {
            run(i);
        }
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < work.size(); i += jobs) {
                    run(i);
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    BenchResult result;
    struct Acc {
        std::size_t actions = 0, completed = 0, failures = 0;
        double seconds = 0.0;
    };
    auto summarize = [](const std::string& name, const Acc& f, const Acc& a) {
        BenchSummary s;
        s.material = name;
        auto per = [](double v, std::size_t n) {
            return n == 0 ? std::numeric_limits<double>::infinity() : v / static_cast<double>(n);
        };
        s.fixed_actions = per(static_cast<double>(f.actions), f.completed);
        s.adaptive_actions = per(static_cast<double>(a.actions), a.completed);
        s.fixed_seconds = per(f.seconds, f.completed);
        s.adaptive_seconds = per(a.seconds, a.completed);
        s.fixed_failures = f.failures;
        s.adaptive_failures = a.failures;
        s.reduction = std::isfinite(s.fixed_actions) && std::isfinite(s.adaptive_actions) && s.fixed_actions > 0.0
                          ? 1.0 - s.adaptive_actions / s.fixed_actions
                          : 0.0;
        return s;
    };
    Acc total_f, total_a;
    for (std::size_t m = 0; m < materials.size(); ++m) {
        Acc f, a;
        for (std::size_t i = 0; i < work.size(); ++i) {
            if (work[i].material != m) {
                continue;
            }
            const EpisodeLog& log = logs[i];
            BenchRow row;
            row.material = log.material;
            row.policy = log.policy;
            row.seed = work[i].seed;
            row.slices_completed = log.slices_completed;
            row.actions = log.total_actions();
            row.actions_per_slice = log.actions_per_slice();
            double secs = 0.0;
            for (const auto& s : log.slices) {
                if (s.completed) {
                    secs += s.seconds;
                }
            }
            row.seconds_per_slice =
                log.slices_completed ? secs / static_cast<double>(log.slices_completed)
                                     : std::numeric_limits<double>::infinity();
            row.failures = log.failures.size();
            row.outcome = log.outcome;
            result.rows.push_back(row);
            Acc& acc = work[i].adaptive ? a : f;
            Acc& tot = work[i].adaptive ? total_a : total_f;
            for (Acc* x : {&acc, &tot}) {
                x->actions += row.actions;
                x->completed += row.slices_completed;
                x->failures += row.failures;
                x->seconds += secs;
            }
        }
        result.per_material.push_back(summarize(materials[m].name, f, a));
    }
    result.overall = summarize("all", total_f, total_a);
    return result;
}

void write_bench_csv(std::ostream& out, const BenchResult& result) {
    out << "material,fixed_actions_per_slice,adaptive_actions_per_slice,reduction_pct,fixed_seconds_per_slice,"
           "adaptive_seconds_per_slice,fixed_failures,adaptive_failures\n";
    auto line = [&](const BenchSummary& s) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%.2f,%.2f,%.2f,%zu,%zu\n", s.material.c_str(), s.fixed_actions,
                      s.adaptive_actions, 100.0 * s.reduction, s.fixed_seconds, s.adaptive_seconds, s.fixed_failures,
                      s.adaptive_failures);
        out << buf;
    };
    for (const auto& s : result.per_material) {
        line(s);
    }
    line(result.overall);
}

}  // namespace slicekit::seq
