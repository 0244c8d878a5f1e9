#include "slicekit/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace slicekit::sim {

namespace {

constexpr double kBoardHardness = 0.9;
constexpr double kBoardFriction = 0.25;
constexpr double kTransientDecay = 0.5134;  // exp(-1 / 1.5) per step

double cap_radius(const MaterialSpec& m) { return std::min(m.height, 0.25 * m.length); }

double skin_thickness(const MaterialSpec& m) { return 0.006 * m.skin_toughness; }

// Right-side X where the profile first rises above height h (relative to the board).
std::optional<double> side_block(const WorldState& s, const MaterialSpec& m, double h) {
    if (s.food_right <= s.food_left || h >= m.height || h < 0.0) {
        return std::nullopt;
    }
    if (m.profile == Profile::Flat) {
        return s.food_right;
    }
    // Cutting leaves the original rounded surface; the cut face is vertical.
    const double r = cap_radius(m);
    const double q = h / m.height;
    return std::min(s.food_right, m.length - r * (1.0 - std::sqrt(std::max(0.0, 1.0 - q * q))));
}

double cut_rate(const WorldState& s, const MaterialSpec& m, const SimConfig& c, double lateral_speed) {
    if (m.hardness >= c.uncuttable_hardness) {
        return 0.0;
    }
    double rate = (1.0 - m.hardness) * (c.cut_rate_base + c.cut_rate_saw * lateral_speed);
    if (s.kerf_depth < skin_thickness(m)) {
        rate *= 1.0 - 0.6 * m.skin_toughness;
    }
    return rate;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void update_onsets(WorldState& s, bool board, bool food, double onset_time, double vx_prev, double vz_prev,
                   const MaterialSpec& m, const SimConfig& c, StepRecord& rec) {
    if (board && !s.board_contact) {
        s.board_onset = onset_time;
        const double speed = std::max(0.0, -vz_prev);
        rec.impact_speed = speed;
        rec.impact_on_board = true;
        s.transient += c.impact_gain * speed * (0.3 + 0.7 * kBoardHardness);
    }
    if (food && !s.food_contact) {
        s.food_onset = onset_time;
        const double speed = std::max(std::max(0.0, -vz_prev), s.side_contact ? std::max(0.0, -vx_prev) : 0.0);
        if (!rec.impact_on_board) {
            rec.impact_speed = speed;
        }
        s.transient += c.impact_gain * speed * (0.3 + 0.7 * m.hardness);
    }
    s.board_contact = board;
    s.food_contact = food;
}

Event classify_event(const WorldState& s, const SimConfig& c, double lateral_speed) {
    const double eps = 1e-9;
    if (s.slip_remaining > 0.0) {
        return Event::ScrapingObject;
    }
    if (s.board_contact) {
        if (s.time - s.board_onset <= c.hit_hold + eps) {
            return Event::HittingBoard;
        }
        return lateral_speed > c.slide_speed ? Event::ScrapingBoard : Event::HittingBoard;
    }
    if (s.food_contact) {
        if (s.time - s.food_onset <= c.hit_hold + eps) {
            return Event::HittingObject;
        }
        if (s.in_kerf && (s.kerf_depth >= c.embed_depth || lateral_speed > c.slide_speed)) {
            return Event::SlicingObject;
        }
        return lateral_speed > c.slide_speed ? Event::ScrapingObject : Event::HittingObject;
    }
    return Event::InAir;
}

}  // namespace

std::optional<double> food_top(const WorldState& s, const MaterialSpec& m, const SimConfig& c, double x) {
    if (!(x > s.food_left && x < s.food_right)) {
        return std::nullopt;
    }
    if (m.profile == Profile::Flat) {
        return c.board_z + m.height;
    }
    const double r = cap_radius(m);
    const double d = std::min(x - s.food_left, m.length - x);
    if (d >= r) {
        return c.board_z + m.height;
    }
    const double u = 1.0 - d / r;
    return c.board_z + m.height * std::sqrt(std::max(0.0, 1.0 - u * u));
}

WorldState make_world(const MaterialSpec& m, const SimConfig& c, std::uint64_t seed, double x, double z) {
    m.validate();
    WorldState s;
    s.food_left = 0.0;
    s.food_right = m.length;
    if (z < c.board_z) {
        throw std::invalid_argument("make_world: knife starts below the board");
    }
    if (const auto top = food_top(s, m, c, x); top && z < *top) {
        throw std::invalid_argument("make_world: knife starts inside the food");
    }
    s.x = s.cmd_x = x;
    s.z = s.cmd_z = z;
    s.noise_rng = Rng(derive_seed(seed, "sensor-noise"));
    s.event_rng = Rng(derive_seed(seed, "world-events"));
    settle_contacts(s, m, c);
    return s;
}

void settle_contacts(WorldState& s, const MaterialSpec& m, const SimConfig& c) {
    s.board_contact = s.z <= c.board_z + c.contact_band;
    const auto top = food_top(s, m, c, s.x);
    s.food_contact = !s.board_contact && (s.in_kerf || (top && s.z <= *top + c.contact_band));
    s.board_onset = -1e9;
    s.food_onset = -1e9;
    s.transient = 0.0;
}

void embed_knife(WorldState& s, const MaterialSpec& m, const SimConfig& c, double depth) {
    const auto top = food_top(s, m, c, s.x);
    if (!top) {
        throw std::invalid_argument("embed_knife: no food under the knife");
    }
    depth = std::clamp(depth, 0.0, *top - c.board_z - 2.0 * c.contact_band);
    s.in_kerf = true;
    s.kerf_x = s.x;
    s.kerf_top = *top;
    s.kerf_depth = depth;
    s.cut_progress += depth;
    s.pass_through = false;
    s.pending_kerf_x.reset();
    s.z = *top - depth;
    s.vx = s.vz = 0.0;
    sync_command(s);
    settle_contacts(s, m, c);
}

void sync_command(WorldState& s) {
    s.cmd_x = s.x;
    s.cmd_z = s.z;
}

void set_event_stream(WorldState& s, std::uint64_t seed) { s.event_rng = Rng(seed); }

Event step_world(WorldState& s, const MaterialSpec& m, const SimConfig& c, const Command& cmd, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("step_world: dt must be positive");
    }
    const double board = c.board_z;
    const double x_prev = s.x;
    const double z_prev = s.z;
    const double vx_prev = s.vx;
    const double vz_prev = s.vz;
    const double onset_time = s.time;
    const bool window_start = s.steps % 10 == 0;
    StepRecord rec;
    rec.vz_cmd = cmd.vz;

    s.cmd_x += cmd.vx * dt;
    s.cmd_z += cmd.vz * dt;

    // Slip draw once per window while the blade sits in the skin.
    if (window_start && s.in_kerf && s.slip_remaining <= 0.0 && m.slip_propensity > 0.0 &&
        m.profile == Profile::Round && s.kerf_depth < skin_thickness(m) && std::abs(cmd.vx) > c.slide_speed) {
        const double normal = std::max(0.0, c.impedance * (s.z - s.cmd_z));
        const double p = m.slip_propensity * std::max(0.0, 1.0 - normal / c.slip_hold_force);
        if (s.event_rng.uniform() < p) {
            ++s.slips;
            s.slip_remaining = c.slip_duration;
            s.pending_kerf_x = s.kerf_x - c.slip_offset;
            s.in_kerf = false;
            s.z = s.kerf_top;
        }
    }

    // Lateral motion: free except against the food's side when outside a kerf.
    double x_new = s.cmd_x;
    bool side = false;
    if (!s.in_kerf && s.slip_remaining <= 0.0 && x_new < x_prev) {
        if (const auto block = side_block(s, m, s.z - board); block && x_prev >= *block && x_new < *block) {
            x_new = *block;
            side = true;
        }
    }
    // Resting against the side face keeps the contact until the knife moves away.
    if (!side && s.side_contact && x_new == x_prev) {
        const auto block = side_block(s, m, std::max(s.cmd_z, board) - board);
        side = block && x_new >= *block - 1e-12;
    }
    const double lateral = std::abs(x_new - x_prev) / dt;

    // Vertical motion.
    double z_new = std::max(s.cmd_z, board);
    // Beside the side face the knife is not above the food.
    const auto top = side ? std::nullopt : food_top(s, m, c, x_new);
    rec.cutting = false;
    if (s.slip_remaining > 0.0) {
        if (top) {
            z_new = std::max(z_new, *top);
        }
    } else if (s.in_kerf) {
        if (!s.pass_through) {
            z_new = std::max(z_new, s.z - cut_rate(s, m, c, lateral) * dt);
        }
        rec.cutting = z_new > board + c.contact_band;
    } else if (top && s.cmd_z < *top) {
        if (s.z <= *top + c.contact_band) {
            const double from = std::min(s.z, *top);
            if (!s.pending_kerf_x) {
                // A fresh kerf: draw once whether a very soft item gives way.
                const double give = std::max(0.0, (0.15 - m.hardness) / 0.15) * 0.4;
                s.pass_through = s.event_rng.uniform() < give;
            }
            const double rate = s.pass_through ? std::numeric_limits<double>::infinity() : cut_rate(s, m, c, lateral);
            z_new = std::max(z_new, from - rate * dt);
            if (z_new < *top) {
                s.in_kerf = true;
                s.kerf_x = s.pending_kerf_x.value_or(x_new);
                s.pending_kerf_x.reset();
                s.kerf_top = *top;
                s.kerf_depth = 0.0;
                rec.cutting = true;
            }
        } else {
            z_new = *top;  // lands on the surface this step
        }
    }

    if (s.in_kerf) {
        const double depth = s.kerf_top - z_new;
        if (depth > s.kerf_depth) {
            s.cut_progress += depth - s.kerf_depth;
            s.kerf_depth = depth;
        }
        if (z_new <= board + c.contact_band && s.kerf_x < s.food_right) {
            s.slice_thickness.push_back(s.food_right - s.kerf_x);
            s.food_right = std::max(s.food_left, s.kerf_x);
            s.right_end_cut = true;
        }
        if (z_new >= s.kerf_top) {
            s.in_kerf = false;
            s.pass_through = false;
        }
    }

    s.vx = (x_new - x_prev) / dt;
    s.vz = (z_new - z_prev) / dt;
    s.x = x_new;
    s.z = z_new;
    s.time += dt;
    ++s.steps;
    if (s.slip_remaining > 0.0) {
        s.slip_remaining = std::max(0.0, s.slip_remaining - dt);
        rec.slipping = true;
    }

    const bool board_contact = s.z <= board + c.contact_band;
    const auto top_now = food_top(s, m, c, s.x);
    const bool on_surface = top_now && s.z <= *top_now + c.contact_band;
    const bool food_contact = !board_contact && (s.in_kerf || side || on_surface || rec.slipping);
    s.side_contact = side;
    update_onsets(s, board_contact, food_contact, onset_time, vx_prev, vz_prev, m, c, rec);

    // Forces on the knife, reaction convention: +Z pushes the knife up.
    double fz = c.impedance * std::max(0.0, s.z - s.cmd_z);
    double fx = side ? c.impedance * std::max(0.0, s.x - s.cmd_x) : 0.0;
    if (food_contact) {
        fz += 1.0 + 4.0 * m.hardness;
    }
    fz += s.transient;
    if (side) {
        fx += s.transient;
        fz -= s.transient;
    }
    const double mu = board_contact ? kBoardFriction : m.friction;
    if ((board_contact || food_contact) && lateral > c.slide_speed) {
        fx -= mu * std::max(0.0, fz) * sign(s.vx);
    }
    if (rec.cutting && lateral > c.slide_speed) {
        fx -= (0.5 + 3.0 * m.hardness) * sign(s.vx);
    }
    s.transient *= kTransientDecay;
    const double fy = c.force_noise * s.noise_rng.normal();
    fx += c.force_noise * s.noise_rng.normal();
    fz += c.force_noise * s.noise_rng.normal();
    rec.force = {fx,
                 fy,
                 fz,
                 0.02 * fy + c.torque_noise * s.noise_rng.normal(),
                 0.05 * fx + c.torque_noise * s.noise_rng.normal(),
                 0.01 * fx + c.torque_noise * s.noise_rng.normal()};

    s.event = classify_event(s, c, lateral);
    rec.event = s.event;
    rec.x = s.x;
    rec.vx = lateral;
    rec.board_contact = board_contact;
    rec.food_contact = food_contact;
    s.pending.push_back(rec);
    return s.event;
}

World::World(MaterialSpec material, SimConfig config, std::uint64_t seed, double x, double z)
    : material_(std::move(material)), config_(config), state_(make_world(material_, config_, seed, x, z)) {}

std::size_t World::steps_per_window() const {
    return static_cast<std::size_t>(std::lround(0.1 / config_.step_dt));
}

EmittedWindow World::window(const Command& cmd) {
    while (state_.pending.size() < steps_per_window()) {
        step(cmd);
    }
    return emit();
}

}  // namespace slicekit::sim
