#include "slicekit/sequencer.hpp"

#include <catch_amalgamated.hpp>

#include <set>

using namespace slicekit;
using namespace slicekit::seq;

namespace {

MonitorDecision decided(Event e) {
    MonitorDecision d;
    d.posterior[static_cast<std::size_t>(e)] = 1.0;
    d.raw = e;
    d.smoothed = e;
    return d;
}

const std::vector<sim::MaterialSpec>& materials() {
    static const auto m = sim::default_materials();
    return m;
}

const dmp::SlicingModel& slicing_model() {
    static const auto m = dmp::default_slicing_model();
    return m;
}

EpisodeLog oracle_episode(const std::string& name, bool adaptive, std::uint64_t seed, std::size_t slices = 3) {
    const auto& m = sim::find_material(materials(), name);
    OracleMonitor monitor(m.name);
    EpisodeRequest req;
    req.material = m;
    req.policy.adaptive = adaptive;
    req.seed = seed;
    req.slices = slices;
    return run_episode(req, monitor, ParamTable::from_materials(materials()), slicing_model());
}

// Oracle that reports one wrong event on a chosen window.
class GlitchMonitor : public Monitor {
public:
    GlitchMonitor(std::string material, std::size_t smoothing, SkillId skill, std::size_t nth, Event wrong)
        : Monitor(smoothing), material_(std::move(material)), skill_(skill), nth_(nth), wrong_(wrong) {}
    std::string classify_material(const std::vector<ObservedWindow>&) override { return material_; }
    bool needs_features() const override { return false; }
    std::size_t glitches = 0;

protected:
    std::array<double, kEventCount> posterior(const ObservedWindow& w, SkillId skill) override {
        std::array<double, kEventCount> p{};
        Event e = w.window->truth;
        if (skill == skill_ && seen_++ == nth_) {
            e = wrong_;
            ++glitches;
        }
        p[static_cast<std::size_t>(e)] = 1.0;
        return p;
    }

private:
    std::string material_;
    SkillId skill_;
    std::size_t nth_;
    Event wrong_;
    std::size_t seen_ = 0;
};

}  // namespace

TEST_CASE("termination rules of the skill table") {
    const SequencerConfig cfg;
    signals::ForceBuffer quiet{};
    signals::ForceBuffer pushed_z{};
    pushed_z[4][signals::Fz] = 12.0;
    signals::ForceBuffer pushed_x{};
    pushed_x[7][signals::Fx] = 11.0;

    CHECK(termination_check(SkillId::MoveDownOnBoard, {nullptr, &quiet}, cfg).verdict == Verdict::Continue);
    CHECK(termination_check(SkillId::MoveDownOnBoard, {nullptr, &pushed_z}, cfg).verdict == Verdict::Terminate);
    CHECK(termination_check(SkillId::MoveDownOnBoard, {nullptr, &pushed_x}, cfg).verdict == Verdict::Continue);
    CHECK(termination_check(SkillId::MoveLeftToHitObject, {nullptr, &pushed_x}, cfg).verdict == Verdict::Terminate);
    CHECK(termination_check(SkillId::MoveLeftToHitObject, {nullptr, &pushed_z}, cfg).verdict == Verdict::Continue);

    CheckInput moved;
    moved.motion_complete = true;
    CHECK(termination_check(SkillId::MoveUpAndOver, moved, cfg).verdict == Verdict::Terminate);
    CHECK(termination_check(SkillId::MoveUpAndOver, {}, cfg).verdict == Verdict::Continue);

    auto check = [&](SkillId s, Event e) {
        const auto d = decided(e);
        CheckInput in;
        in.decision = &d;
        return termination_check(s, in, cfg);
    };
    CHECK(check(SkillId::SlicingAction, Event::HittingBoard).verdict == Verdict::Terminate);
    CHECK(check(SkillId::SlicingAction, Event::SlicingObject).verdict == Verdict::Continue);
    const auto slip = check(SkillId::SlicingAction, Event::ScrapingObject);
    CHECK(slip.verdict == Verdict::Failure);
    CHECK(slip.failure == FailureKind::Slip);
    CHECK(check(SkillId::MoveDownOntoObject, Event::HittingObject).verdict == Verdict::Terminate);
    CHECK(check(SkillId::MoveDownOntoObject, Event::InAir).verdict == Verdict::Continue);
    const auto early = check(SkillId::MoveDownOntoObject, Event::HittingBoard);
    CHECK(early.verdict == Verdict::Failure);
    CHECK(early.failure == FailureKind::PrematureBoardHit);

    // No smoothed decision yet: keep going.
    MonitorDecision pending;
    pending.raw = Event::HittingBoard;
    CheckInput in;
    in.decision = &pending;
    CHECK(termination_check(SkillId::MoveDownOntoObject, in, cfg).verdict == Verdict::Continue);

    CHECK_THROWS_AS(termination_check(SkillId::Done, {}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(termination_check(SkillId::SlicingAction, {}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(skill_from_name("juggle"), std::invalid_argument);
}

TEST_CASE("skill table is connected and reaches done") {
    const auto& table = skill_table();
    REQUIRE(table.size() == 6);
    std::set<SkillId> reached{SkillId::MoveDownOnBoard};
    std::vector<SkillId> frontier{SkillId::MoveDownOnBoard};
    while (!frontier.empty()) {
        const SkillId s = frontier.back();
        frontier.pop_back();
        if (s == SkillId::Done) {
            continue;
        }
        const auto& st = skill_state(s);
        CHECK(st.termination != TerminationKind::None);
        std::vector<SkillId> next{st.on_terminate, next_skill(s, false), next_skill(s, true)};
        for (const auto& [kind, to] : st.on_failure) {
            next.push_back(to);
        }
        for (const SkillId n : next) {
            if (reached.insert(n).second) {
                frontier.push_back(n);
            }
        }
    }
    CHECK(reached.size() == 6);
    CHECK(reached.count(SkillId::Done) == 1);
    CHECK(next_skill(SkillId::SlicingAction, true) == SkillId::MoveUpAndOver);
    CHECK(next_skill(SkillId::SlicingAction, false) == SkillId::Done);
    for (const auto& st : table) {
        CHECK(skill_from_name(skill_name(st.id)) == st.id);
    }
}

TEST_CASE("parameter table lookups") {
    const auto table = ParamTable::from_materials(materials());
    const auto tofu = table.at("tofu");
    CHECK(tofu.second > 5.0 * tofu.first);
    CHECK(table.at("cucumber").second != table.at("cucumber_old").second);
    CHECK(table.at("corn") == std::pair{0.0, 0.0});
    CHECK_THROWS_AS(table.at("durian"), std::out_of_range);
    CHECK_THROWS_AS(table.check_covers({"tofu", "durian"}), ConfigError);
    CHECK_NOTHROW(table.check_covers({"tofu", "corn"}));
    CHECK_THROWS_AS(ParamTable({{"x", {-0.01, 0.0}}}), std::invalid_argument);

    const auto back = param_table_from_json(to_json(table));
    CHECK(back.entries() == table.entries());

    OracleMonitor corn("corn");
    CHECK(adapt_params(corn, table, AdaptMode::Lookup, {}) == std::pair{0.0, 0.0});
    CHECK_THROWS_AS(adapt_params(corn, table, AdaptMode::Direct, {}), std::invalid_argument);
}

TEST_CASE("smoothing needs k agreeing windows") {
    GlitchMonitor m("tofu", 2, SkillId::MoveDownOntoObject, 99, Event::InAir);
    sim::EmittedWindow air;
    air.truth = Event::InAir;
    sim::EmittedWindow board;
    board.truth = Event::HittingBoard;
    ObservedWindow wa{&air, {}};
    ObservedWindow wb{&board, {}};
    CHECK(!m.observe(wa, SkillId::MoveDownOntoObject).smoothed);
    CHECK(m.observe(wa, SkillId::MoveDownOntoObject).smoothed == Event::InAir);
    const auto d1 = m.observe(wb, SkillId::MoveDownOntoObject);
    CHECK(d1.raw == Event::HittingBoard);
    CHECK(!d1.smoothed);
    CHECK(m.observe(wb, SkillId::MoveDownOntoObject).smoothed == Event::HittingBoard);
    m.reset();
    CHECK(!m.observe(wb, SkillId::MoveDownOntoObject).smoothed);
}

TEST_CASE("oracle cucumber episode follows the canonical event order") {
    const auto log = oracle_episode("cucumber", false, 3);
    REQUIRE(log.outcome == "completed");
    CHECK(log.slices_completed == 3);
    CHECK(log.failures.empty());
    for (const auto& s : log.slices) {
        CHECK(s.completed);
        CHECK(s.thickness == Catch::Approx(0.01).margin(0.001));
    }

    // Collapse the ground truth timeline and find the expected pattern.
    std::vector<Event> seq;
    for (const auto& w : log.windows) {
        if (seq.empty() || seq.back() != w.truth) {
            seq.push_back(w.truth);
        }
    }
    auto find_from = [&](std::size_t from, Event e) {
        for (std::size_t i = from; i < seq.size(); ++i) {
            if (seq[i] == e) {
                return i;
            }
        }
        return seq.size();
    };
    std::size_t at = find_from(0, Event::HittingBoard);
    REQUIRE(at < seq.size());
    at = find_from(at, Event::HittingObject);
    REQUIRE(at < seq.size());
    for (int slice = 0; slice < 3; ++slice) {
        at = find_from(at + 1, Event::HittingObject);
        REQUIRE(at < seq.size());
        at = find_from(at, Event::SlicingObject);
        REQUIRE(at < seq.size());
        at = find_from(at, Event::HittingBoard);
        REQUIRE(at < seq.size());
    }

    // The skill order per slice.
    std::vector<SkillId> skills;
    for (const auto& t : log.transitions) {
        skills.push_back(t.to);
    }
    const std::vector<SkillId> expected{
        SkillId::MoveDownOnBoard,    SkillId::MoveLeftToHitObject, SkillId::MoveUpAndOver,
        SkillId::MoveDownOntoObject, SkillId::SlicingAction,       SkillId::MoveUpAndOver,
        SkillId::MoveDownOntoObject, SkillId::SlicingAction,       SkillId::MoveUpAndOver,
        SkillId::MoveDownOntoObject, SkillId::SlicingAction,       SkillId::Done};
    CHECK(skills == expected);
}

TEST_CASE("oracle transitions coincide with ground truth transitions") {
    for (const char* name : {"cucumber", "tofu", "apple", "watermelon"}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto log = oracle_episode(name, true, seed);
            INFO(name << " seed " << seed);
            for (const auto& t : log.transitions) {
                if (t.from != SkillId::MoveDownOntoObject && t.from != SkillId::SlicingAction) {
                    continue;
                }
                // The window that ended a monitored skill is the first of that skill whose truth
                // triggers it.
                // Recovery moves after a failure are not monitored.
                std::size_t end = t.window;
                while (end > 0 && !log.windows[end - 1].decision) {
                    --end;
                }
                REQUIRE(end >= 1);
                const auto& last = log.windows[end - 1];
                CHECK(last.skill == t.from);
                CHECK(*last.decision == last.truth);
                const auto trig = [&](Event e) {
                    const auto d = decided(e);
                    CheckInput in;
                    in.decision = &d;
                    return termination_check(t.from, in, SequencerConfig{}).verdict != Verdict::Continue;
                };
                CHECK(trig(last.truth));
                for (std::size_t i = end - 1; i-- > 0 && log.windows[i].skill == t.from && log.windows[i].decision;) {
                    CHECK_FALSE(trig(log.windows[i].truth));
                }
            }
        }
    }
}

TEST_CASE("slip-prone melon slips and recovers") {
    std::size_t slipped = 0;
    std::size_t recovered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto log = oracle_episode("watermelon", true, seed);
        INFO("seed " << seed << " outcome " << log.outcome);
        CHECK((log.outcome == "completed" || log.outcome.rfind("aborted: ", 0) == 0));
        bool any = false;
        for (const auto& f : log.failures) {
            any = any || f.kind == FailureKind::Slip;
        }
        slipped += any;
        for (const auto& s : log.slices) {
            recovered += s.completed && s.recoveries > 0;
        }
    }
    CHECK(slipped >= 1);
    CHECK(recovered >= 1);
}

TEST_CASE("every material ends within the window budget") {
    for (const auto& m : materials()) {
        for (const bool adaptive : {false, true}) {
            const auto log = oracle_episode(m.name, adaptive, 11, 2);
            INFO(m.name << " " << log.policy << " " << log.outcome);
            CHECK(!log.outcome.empty());
            CHECK(log.windows.size() <= SequencerConfig{}.budget_windows * 3);
            CHECK(log.transitions.back().to == SkillId::Done);
            if (!m.cuttable() && adaptive) {
                CHECK(log.outcome == "uncuttable");
                CHECK(log.phi_x == 0.0);
                CHECK(log.phi_z == 0.0);
                CHECK(log.slices_completed == 0);
            }
            if (m.cuttable() && m.slip_propensity == 0.0) {
                CHECK(log.outcome == "completed");
            }
        }
    }
}

TEST_CASE("tiny budget aborts instead of hanging") {
    const auto& m = sim::find_material(materials(), "bread");
    OracleMonitor monitor(m.name);
    EpisodeRequest req;
    req.material = m;
    req.config.budget_windows = 20;
    const auto log = run_episode(req, monitor, ParamTable::from_materials(materials()), slicing_model());
    CHECK(log.outcome == "aborted: window budget exhausted");
    CHECK(log.windows.size() == 80);
}

TEST_CASE("a single glitched window does not end the descent") {
    const auto& m = sim::find_material(materials(), "cucumber");
    const auto table = ParamTable::from_materials(materials());
    EpisodeRequest req;
    req.material = m;
    req.slices = 1;
    req.seed = 5;

    GlitchMonitor smooth(m.name, 2, SkillId::MoveDownOntoObject, 3, Event::HittingBoard);
    const auto ok = run_episode(req, smooth, table, slicing_model());
    CHECK(smooth.glitches == 1);
    CHECK(ok.outcome == "completed");
    CHECK(ok.failures.empty());

    GlitchMonitor raw(m.name, 1, SkillId::MoveDownOntoObject, 3, Event::HittingBoard);
    const auto bad = run_episode(req, raw, table, slicing_model());
    REQUIRE(!bad.failures.empty());
    CHECK(bad.failures.front().kind == FailureKind::PrematureBoardHit);
}

TEST_CASE("episodes are deterministic") {
    const auto a = oracle_episode("kiwi", true, 9);
    const auto b = oracle_episode("kiwi", true, 9);
    CHECK(to_json(a).dump() == to_json(b).dump());
    const auto c = oracle_episode("kiwi", true, 10);
    CHECK(to_json(a).dump() != to_json(c).dump());
}

TEST_CASE("adaptive parameters need fewer actions than the fixed policy") {
    const auto soft = soft_materials(materials());
    REQUIRE(soft.size() >= 5);
    for (const auto& m : soft) {
        CHECK(m.hardness <= 0.5);
        CHECK(m.cuttable());
    }
    const MonitorFactory oracle = [](const sim::MaterialSpec& m) { return std::make_unique<OracleMonitor>(m.name); };
    Policy fixed;
    Policy adaptive;
    adaptive.adaptive = true;
    const auto r = bench(soft, oracle, ParamTable::from_materials(materials()), slicing_model(), 2, 2, 1, fixed,
                         adaptive, {}, {}, 2);
    CHECK(r.rows.size() == soft.size() * 2 * 2);
    CHECK(r.overall.adaptive_actions <= 0.8 * r.overall.fixed_actions);
    CHECK(r.overall.adaptive_failures <= r.overall.fixed_failures);
    for (const auto& s : r.per_material) {
        INFO(s.material);
        CHECK(s.adaptive_actions <= s.fixed_actions);
    }
    std::ostringstream csv;
    write_bench_csv(csv, r);
    CHECK(csv.str().find("all,") != std::string::npos);
}
