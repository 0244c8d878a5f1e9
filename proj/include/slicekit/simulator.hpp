#pragma once

#include "slicekit/common.hpp"
#include "slicekit/events.hpp"
#include "slicekit/signals.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace slicekit::sim {

enum class Profile { Flat, Round };

/// Simulated food item. Mechanical fields are unitless in [0, 1] unless noted.
struct MaterialSpec {
    std::string name;
    double hardness = 0.3;
    double skin_toughness = 0.2;
    double friction = 0.3;
    double slip_propensity = 0.0;
    double height = 0.04;  // m
    double length = 0.15;  // m along X
    double phi_x = 0.02;   // true slicing parameters, m
    double phi_z = 0.03;
    std::string freshness = "fresh";
    Profile profile = Profile::Flat;
    // Acoustic identity.
    double resonance_hz = 1500.0;
    double damping = 0.5;

    bool cuttable() const { return phi_x > 0.0 || phi_z > 0.0; }
    void validate() const;
};

/// Built-in library: tofu-like, fresh/old pairs, a slip-prone melon and two uncuttables.
std::vector<MaterialSpec> default_materials();

nlohmann::json to_json(const MaterialSpec& m);
MaterialSpec material_from_json(const nlohmann::json& j);
std::vector<MaterialSpec> load_materials(const std::filesystem::path& path);
void save_materials(const std::filesystem::path& path, const std::vector<MaterialSpec>& materials);
const MaterialSpec& find_material(const std::vector<MaterialSpec>& materials, const std::string& name);

struct SimConfig {
    double step_dt = 0.01;          // s, one force sample per step
    double board_z = 0.0;
    double contact_band = 5e-4;     // m
    double impedance = 2500.0;      // N/m between commanded and actual pose
    double impact_gain = 500.0;     // N per m/s of impact speed
    double cut_rate_base = 0.03;    // m/s of pressing penetration into a zero-hardness item
    double cut_rate_saw = 0.5;      // extra penetration per meter of lateral travel
    double uncuttable_hardness = 0.9;
    double embed_depth = 0.002;     // depth below which contact counts as surface contact
    double hit_hold = 0.2;          // s after contact onset reported as a hitting event
    double slide_speed = 0.005;     // m/s lateral speed separating scraping from pressing
    double slip_hold_force = 30.0;  // N of normal force that suppresses slipping
    double slip_duration = 0.3;     // s
    double slip_offset = 0.004;     // m of kerf displacement per slip
    double force_noise = 0.1;       // N
    double torque_noise = 0.01;     // N m
    double sensor_noise = 1e-3;     // vibration noise standard deviation
    double noise_floor = 2.5e-3;    // declared RMS bound for quiet windows
    double hum_amplitude = 6e-4;    // tong gripper motor hum
};

/// One impact ringing on all channels.
struct Voice {
    std::array<double, 3> freq{};
    std::array<double, 3> weight{};
    std::array<double, 3> phase{};
    double decay = 0.01;         // s
    double amplitude = 0.0;
    double age = 0.0;            // samples since onset
    std::array<double, signals::kChannels> gain{};
};

/// Second order band-pass filter with its state.
struct Biquad {
    double b0 = 0, b2 = 0, a1 = 0, a2 = 0;  // b1 = 0 for the band-pass form
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

    static Biquad bandpass(double center_hz, double q);
    double process(double x);
};

/// Acoustic conditions during one world step, consumed by the synthesizer.
struct StepRecord {
    Event event = Event::InAir;
    double x = 0.0;
    double vx = 0.0;           // actual lateral speed
    double vz_cmd = 0.0;       // commanded vertical speed
    bool board_contact = false;
    bool food_contact = false;
    bool cutting = false;      // penetrating inside a kerf
    bool slipping = false;
    double impact_speed = 0.0; // > 0 on the step a contact starts
    bool impact_on_board = false;
    signals::ForceSample force{};
};

struct WorldState {
    // Knife: actual and commanded (impedance target) pose.
    double x = 0.0, z = 0.1;
    double cmd_x = 0.0, cmd_z = 0.1;
    double vx = 0.0, vz = 0.0;
    double time = 0.0;
    std::size_t steps = 0;

    // Food extent along X; the right end recedes as slices fall away.
    double food_left = 0.0;
    double food_right = 0.15;
    bool right_end_cut = false;

    // Kerf: latched cut location while the knife is below the surface.
    bool in_kerf = false;
    double kerf_x = 0.0;
    double kerf_top = 0.0;
    double kerf_depth = 0.0;               // deepest point reached in the current kerf
    double cut_progress = 0.0;             // total depth cut so far, never decreases
    std::optional<double> pending_kerf_x;  // where the next kerf opens after a slip
    bool pass_through = false;             // food gives way without resistance at this kerf
    std::vector<double> slice_thickness;   // one entry per completed slice
    std::size_t slips = 0;

    // Contact bookkeeping for ground truth.
    bool board_contact = false;
    bool food_contact = false;
    bool side_contact = false;
    double board_onset = -1e9;
    double food_onset = -1e9;
    double slip_remaining = 0.0;
    double transient = 0.0;  // decaying impact force, N
    Event event = Event::InAir;

    // Randomness: sensor noise and event draws are separate streams.
    Rng noise_rng{1};
    Rng event_rng{2};

    // Synthesizer memory carried across windows.
    std::vector<Voice> voices;
    Biquad scrape_board_filter;
    Biquad scrape_food_filter;
    Biquad slice_filter;
    std::size_t sample_clock = 0;
    std::vector<StepRecord> pending;  // steps since the last emitted window
};

struct Command {
    double vx = 0.0;
    double vz = 0.0;
};

/// Food top surface height at `x`, or nullopt where there is no food.
std::optional<double> food_top(const WorldState& s, const MaterialSpec& m, const SimConfig& c, double x);

/// Fresh world with the knife at rest at (x, z) over an uncut item.
WorldState make_world(const MaterialSpec& m, const SimConfig& c, std::uint64_t seed, double x, double z);

/// Advances the world one step under a knife velocity command and returns the
/// ground-truth event after the step.
Event step_world(WorldState& s, const MaterialSpec& m, const SimConfig& c, const Command& cmd, double dt);

/// Treats contacts present now as long established (no hitting transient).
void settle_contacts(WorldState& s, const MaterialSpec& m, const SimConfig& c);

/// Places the knife `depth` below the surface at its current X inside an open
/// kerf, with contacts settled. Used to start slicing recordings mid-cut.
void embed_knife(WorldState& s, const MaterialSpec& m, const SimConfig& c, double depth);

/// Re-targets the impedance command onto the actual pose.
void sync_command(WorldState& s);

/// Reseeds the stream used for slips and give-way draws.
void set_event_stream(WorldState& s, std::uint64_t seed);

struct EmittedWindow {
    signals::SensorWindow window;
    Event truth = Event::InAir;  // majority event over the window's steps
};

/// Synthesizes the sensor window for the steps accumulated since the last call.
/// Requires exactly one window of 0.01 s steps.
EmittedWindow emit_sensors(WorldState& s, const MaterialSpec& m, const SimConfig& c);

/// Convenience wrapper bundling a world with its material and config.
class World {
public:
    World(MaterialSpec material, SimConfig config, std::uint64_t seed, double x, double z);

    Event step(const Command& cmd) { return step_world(state_, material_, config_, cmd, config_.step_dt); }
    /// Steps a full window under a constant command.
    EmittedWindow window(const Command& cmd);
    EmittedWindow emit() { return emit_sensors(state_, material_, config_); }

    WorldState& state() { return state_; }
    const WorldState& state() const { return state_; }
    const MaterialSpec& material() const { return material_; }
    const SimConfig& config() const { return config_; }
    std::size_t steps_per_window() const;

private:
    MaterialSpec material_;
    SimConfig config_;
    WorldState state_;
};

// Dataset generation ---------------------------------------------------------

struct DatasetRecipe {
    std::size_t board_hits = 60;
    std::size_t board_scrapes = 10;
    std::size_t object_hits_min = 10;
    std::size_t object_hits_max = 15;
    std::size_t object_scrapes = 2;
    std::size_t slicing_min = 20;
    std::size_t slicing_max = 40;
    std::size_t in_air = 10;
    double fixed_phi_x = 0.02;  // slicing actions interpolate from these toward the true parameters
    double fixed_phi_z = 0.01;
    bool use_labeler = false;   // label windows with the changepoint labeler instead of ground truth
};

/// One feature window of the dataset.
struct DatasetRow {
    std::size_t window_id = 0;
    std::size_t episode_id = 0;
    std::string skill;
    std::string label;        // event label used for training
    std::string truth;        // ground-truth event
    std::string material;
    double phi_x = 0.0;
    double phi_z = 0.0;
    std::vector<double> features;
    std::string mask = "full";
};

struct GeneratedDataset {
    std::vector<DatasetRow> rows;
    std::size_t episodes = 0;
    std::vector<std::string> warnings;
};

GeneratedDataset generate_dataset(const std::vector<MaterialSpec>& materials, const DatasetRecipe& recipe,
                                  std::uint64_t seed, const SimConfig& config = {}, std::size_t jobs = 1);

nlohmann::json to_json(const DatasetRow& row);
DatasetRow row_from_json(const nlohmann::json& j);
void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRow>& rows);
std::vector<DatasetRow> read_dataset(const std::filesystem::path& path);

}  // namespace slicekit::sim
