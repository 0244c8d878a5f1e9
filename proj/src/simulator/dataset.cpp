#include "slicekit/changepoint.hpp"
#include "slicekit/dmp.hpp"
#include "slicekit/simulator.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <thread>

namespace slicekit::sim {

namespace {

constexpr double kPreload = 0.003;  // m of downward engagement when a slicing action starts

enum class ActionKind { BoardHit, BoardScrape, ObjectHit, ObjectScrape, Slicing, InAir };

struct Action {
    ActionKind kind;
    std::size_t material;
    std::size_t index;  // per material and kind
};

struct Recording {
    std::vector<signals::SensorWindow> windows;
    std::vector<Event> truth;
    std::vector<changepoint::SkillSpan> spans;
    std::string skill;
    double phi_x = 0.0;
    double phi_z = 0.0;
    std::string warning;
};

const char* kind_tag(ActionKind k) {
    switch (k) {
        case ActionKind::BoardHit: return "board-hit";
        case ActionKind::BoardScrape: return "board-scrape";
        case ActionKind::ObjectHit: return "object-hit";
        case ActionKind::ObjectScrape: return "object-scrape";
        case ActionKind::Slicing: return "slicing";
        case ActionKind::InAir: return "in-air";
    }
    return "?";
}

// Steps a world and collects every completed window.
class Session {
public:
    Session(World& world, Recording& rec) : world_(world), rec_(rec) {}

    void step(const Command& cmd) {
        world_.step(cmd);
        if (world_.state().pending.size() == world_.steps_per_window()) {
            auto w = world_.emit();
            rec_.windows.push_back(std::move(w.window));
            rec_.truth.push_back(w.truth);
        }
    }

    void finish_window(const Command& cmd = {}) {
        while (!world_.state().pending.empty()) {
            step(cmd);
        }
    }

    void windows(std::size_t n, const Command& cmd = {}) {
        finish_window(cmd);
        for (std::size_t i = 0; i < n * world_.steps_per_window(); ++i) {
            step(cmd);
        }
    }

    void span(const std::string& skill, changepoint::SkillKind kind, const std::string& contact,
              signals::ForceAxis axis = signals::Fz) {
        changepoint::SkillSpan s;
        s.skill = skill;
        s.start = 0;
        s.end = rec_.windows.size();
        s.kind = kind;
        s.contact_label = contact;
        s.motion_axis = axis;
        rec_.spans.push_back(s);
        rec_.skill = skill;
    }

private:
    World& world_;
    Recording& rec_;
};

double middle_x(const MaterialSpec& m, Rng& rng, double lo, double hi) { return m.length * rng.uniform(lo, hi); }

Recording board_hit(const MaterialSpec& m, const SimConfig& c, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "script"));
    Recording rec;
    World world(m, c, derive_seed(seed, "world"), m.length + rng.uniform(0.03, 0.08), c.board_z + rng.uniform(0.02, 0.06));
    const double v = rng.uniform(0.03, 0.08);
    Session s(world, rec);
    for (std::size_t guard = 0; !world.state().board_contact && guard < 1000; ++guard) {
        s.step({0.0, -v});
    }
    for (int i = 0; i < 10; ++i) {
        s.step({0.0, -0.01});
    }
    s.windows(2);
    s.span("move_down_on_board", changepoint::SkillKind::Approach, std::string(event_name(Event::HittingBoard)));
    return rec;
}

Recording board_scrape(const MaterialSpec& m, const SimConfig& c, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "script"));
    Recording rec;
    World world(m, c, derive_seed(seed, "world"), m.length + rng.uniform(0.05, 0.12), c.board_z);
    world.state().cmd_z = c.board_z - rng.uniform(0.002, 0.006);
    const double v = rng.uniform(0.01, 0.04);
    Session s(world, rec);
    for (int i = 0; i < 300; ++i) {
        s.step({(i / 50) % 2 == 0 ? v : -v, 0.0});
    }
    s.span("scrape_board", changepoint::SkillKind::ConstantContact, std::string(event_name(Event::ScrapingBoard)),
           signals::Fx);
    return rec;
}

Recording object_hit(const MaterialSpec& m, const SimConfig& c, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "script"));
    Recording rec;
    const double x = middle_x(m, rng, 0.35, 0.65);
    World world(m, c, derive_seed(seed, "world"), x, c.board_z + m.height + rng.uniform(0.01, 0.04));
    const double v = rng.uniform(0.02, 0.05);
    Session s(world, rec);
    for (std::size_t guard = 0; !world.state().food_contact && !world.state().board_contact && guard < 1000; ++guard) {
        s.step({0.0, -v});
    }
    for (int i = 0; i < 10; ++i) {
        s.step({0.0, -0.008});
    }
    s.windows(3);
    s.span("move_down_onto_object", changepoint::SkillKind::Approach, std::string(event_name(Event::HittingObject)));
    return rec;
}

Recording object_scrape(const MaterialSpec& m, const SimConfig& c, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "script"));
    Recording rec;
    World world(m, c, derive_seed(seed, "world"), middle_x(m, rng, 0.45, 0.55), c.board_z + m.height + 2e-4);
    const double v = rng.uniform(0.01, 0.02);
    Session s(world, rec);
    for (int i = 0; i < 300; ++i) {
        s.step({(i / 50) % 2 == 0 ? -v : v, 0.0});
    }
    s.span("scrape_object", changepoint::SkillKind::ConstantContact, std::string(event_name(Event::ScrapingObject)),
           signals::Fx);
    return rec;
}

// Velocity commands that track a trajectory sampled every `dt_traj` at the world step.
std::vector<Command> track(const dmp::Trajectory& traj, double step_dt) {
    const auto& xs = traj.axis(dmp::Axis::X);
    const auto& zs = traj.axis(dmp::Axis::Z);
    const double dt_traj = traj.times.size() > 1 ? traj.times[1] - traj.times[0] : step_dt;
    const auto stride = static_cast<std::size_t>(std::lround(step_dt / dt_traj));
    std::vector<Command> out;
    for (std::size_t i = 0; i + stride < xs.size(); i += stride) {
        out.push_back({(xs[i + stride] - xs[i]) / step_dt, (zs[i + stride] - zs[i]) / step_dt});
    }
    return out;
}

Recording slicing(const MaterialSpec& m, const SimConfig& c, const DatasetRecipe& recipe,
                  const dmp::SlicingModel& model, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "script"));
    Recording rec;
    const double x = middle_x(m, rng, 0.4, 0.6);
    World world(m, c, derive_seed(seed, "world"), x, c.board_z + m.height + 0.01);
    // Some actions start in a fresh shallow kerf, as the first action of a slice does.
    const bool shallow = rng.uniform() < 0.3;
    const double depth = shallow ? rng.uniform(0.0, c.embed_depth)
                                 : std::max(c.embed_depth + 1e-3, rng.uniform(0.0, 0.7) * m.height);
    embed_knife(world.state(), m, c, depth);
    world.state().cmd_z -= kPreload;
    const double u = rng.uniform();
    rec.phi_x = recipe.fixed_phi_x + u * (m.phi_x - recipe.fixed_phi_x);
    rec.phi_z = recipe.fixed_phi_z + u * (m.phi_z - recipe.fixed_phi_z);
    const dmp::ChainSegment seg{&model.skill, dmp::slicing_features(rec.phi_x, rec.phi_z)};
    const auto traj = dmp::chain(std::span(&seg, 1), {world.state().x, 0.0, world.state().z});
    Session s(world, rec);
    bool hit_board = false;
    for (const Command& cmd : track(traj, c.step_dt)) {
        s.step(cmd);
        if (world.state().board_contact) {
            hit_board = true;
            break;
        }
    }
    s.finish_window();
    if (!hit_board && world.state().slips == 0 && world.state().cut_progress <= depth) {
        rec.warning = "slicing action on " + m.name + " made no progress";
    }
    s.span("slicing_action", changepoint::SkillKind::ConstantContact, std::string(event_name(Event::SlicingObject)),
           signals::Fx);
    return rec;
}

Recording in_air(const MaterialSpec& m, const SimConfig& c, const dmp::SlicingModel& model, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "script"));
    Recording rec;
    World world(m, c, derive_seed(seed, "world"), m.length + rng.uniform(0.04, 0.08), c.board_z + rng.uniform(0.10, 0.15));
    rec.phi_x = rng.uniform(0.0, 0.06);
    rec.phi_z = rng.uniform(0.0, 0.05);
    const dmp::ChainSegment seg{&model.skill, dmp::slicing_features(rec.phi_x, rec.phi_z)};
    const auto traj = dmp::chain(std::span(&seg, 1), {world.state().x, 0.0, world.state().z});
    Session s(world, rec);
    for (const Command& cmd : track(traj, c.step_dt)) {
        s.step(cmd);
    }
    s.finish_window();
    s.span("in_air_dmp", changepoint::SkillKind::ConstantContact, std::string(event_name(Event::InAir)));
    return rec;
}

// Seven significant digits keeps files compact and reads back to the same value.
double round_sig(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.7g", v);
    return std::strtod(buf, nullptr);
}

std::vector<Action> plan(const std::vector<MaterialSpec>& materials, const DatasetRecipe& r, std::uint64_t seed) {
    std::vector<Action> actions;
    const std::size_t n = materials.size();
    // Board actions rotate through the items so the gripper hum varies.
    for (std::size_t i = 0; i < r.board_hits; ++i) {
        actions.push_back({ActionKind::BoardHit, i % n, i});
    }
    for (std::size_t i = 0; i < r.board_scrapes; ++i) {
        actions.push_back({ActionKind::BoardScrape, i % n, i});
    }
    for (std::size_t mi = 0; mi < n; ++mi) {
        Rng count_rng(derive_seed(seed, "counts:" + materials[mi].name));
        const auto draw = [&](std::size_t lo, std::size_t hi) {
            return lo + count_rng.index(hi - lo + 1);
        };
        const std::size_t hits = draw(r.object_hits_min, r.object_hits_max);
        const std::size_t slices = draw(r.slicing_min, r.slicing_max);
        for (std::size_t i = 0; i < hits; ++i) {
            actions.push_back({ActionKind::ObjectHit, mi, i});
        }
        for (std::size_t i = 0; i < r.object_scrapes; ++i) {
            actions.push_back({ActionKind::ObjectScrape, mi, i});
        }
        if (materials[mi].cuttable() && materials[mi].hardness < SimConfig{}.uncuttable_hardness) {
            for (std::size_t i = 0; i < slices; ++i) {
                actions.push_back({ActionKind::Slicing, mi, i});
            }
        }
    }
    for (std::size_t i = 0; i < r.in_air; ++i) {
        actions.push_back({ActionKind::InAir, i % n, i});
    }
    return actions;
}

}  // namespace

GeneratedDataset generate_dataset(const std::vector<MaterialSpec>& materials, const DatasetRecipe& recipe,
                                  std::uint64_t seed, const SimConfig& config, std::size_t jobs) {
    if (materials.empty()) {
        throw std::invalid_argument("generate_dataset: empty material list");
    }
    if (recipe.object_hits_min > recipe.object_hits_max || recipe.slicing_min > recipe.slicing_max) {
        throw std::invalid_argument("generate_dataset: recipe ranges must have min <= max");
    }
    for (const auto& m : materials) {
        m.validate();
    }
    const auto model = dmp::default_slicing_model();
    const auto actions = plan(materials, recipe, seed);

    struct Output {
        Recording rec;
        std::vector<std::string> labels;
        std::vector<std::vector<double>> features;
    };
    std::vector<Output> outputs(actions.size());

    auto run = [&](std::size_t i) {
        const Action& a = actions[i];
        const MaterialSpec& m = materials[a.material];
        const std::uint64_t s = derive_seed(seed, std::string(kind_tag(a.kind)) + ":" + m.name, a.index);
        Output& out = outputs[i];
        switch (a.kind) {
            case ActionKind::BoardHit: out.rec = board_hit(m, config, s); break;
            case ActionKind::BoardScrape: out.rec = board_scrape(m, config, s); break;
            case ActionKind::ObjectHit: out.rec = object_hit(m, config, s); break;
            case ActionKind::ObjectScrape: out.rec = object_scrape(m, config, s); break;
            case ActionKind::Slicing: out.rec = slicing(m, config, recipe, model, s); break;
            case ActionKind::InAir: out.rec = in_air(m, config, model, s); break;
        }
        if (recipe.use_labeler) {
            const auto labeled = changepoint::label_episode(out.rec.windows, out.rec.spans);
            out.labels = changepoint::expand(labeled.segments, out.rec.windows.size());
        } else {
            for (const Event e : out.rec.truth) {
                out.labels.emplace_back(event_name(e));
            }
        }
        for (const auto& w : out.rec.windows) {
            auto f = signals::fuse(w).values;
            for (double& v : f) {
                v = round_sig(v);
            }
            out.features.push_back(std::move(f));
        }
        out.rec.windows.clear();
        out.rec.windows.shrink_to_fit();
    };

    jobs = std::max<std::size_t>(1, jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < actions.size(); ++i) {
            run(i);
        }
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < actions.size(); i += jobs) {
                    run(i);
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    GeneratedDataset ds;
    ds.episodes = actions.size();
    std::size_t window_id = 0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const Action& a = actions[i];
        const MaterialSpec& m = materials[a.material];
        Output& out = outputs[i];
        if (!out.rec.warning.empty()) {
            ds.warnings.push_back(out.rec.warning);
        }
        for (std::size_t w = 0; w < out.features.size(); ++w) {
            DatasetRow row;
            row.window_id = window_id++;
            row.episode_id = i;
            row.skill = out.rec.skill;
            row.label = out.labels[w];
            row.truth = std::string(event_name(out.rec.truth[w]));
            row.material = m.name;
            row.phi_x = m.phi_x;
            row.phi_z = m.phi_z;
            row.features = std::move(out.features[w]);
            ds.rows.push_back(std::move(row));
        }
    }
    return ds;
}

nlohmann::json to_json(const DatasetRow& row) {
    return {{"window_id", row.window_id}, {"episode_id", row.episode_id}, {"skill", row.skill},
            {"label", row.label},         {"truth", row.truth},           {"material", row.material},
            {"params", {row.phi_x, row.phi_z}}, {"mask", row.mask},       {"features", row.features}};
}

DatasetRow row_from_json(const nlohmann::json& j) {
    DatasetRow row;
    row.window_id = j.at("window_id").get<std::size_t>();
    row.episode_id = j.at("episode_id").get<std::size_t>();
    row.skill = j.at("skill").get<std::string>();
    row.label = j.at("label").get<std::string>();
    row.truth = j.value("truth", row.label);
    row.material = j.at("material").get<std::string>();
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != 2) {
        throw std::invalid_argument("dataset row: params needs two values");
    }
    row.phi_x = params[0];
    row.phi_z = params[1];
    row.mask = j.value("mask", row.mask);
    row.features = j.at("features").get<std::vector<double>>();
    return row;
}

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRow>& rows) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    for (const auto& row : rows) {
        out << to_json(row).dump() << '\n';
    }
}

std::vector<DatasetRow> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open dataset " + path.string());
    }
    std::vector<DatasetRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            rows.push_back(row_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

}  // namespace slicekit::sim
