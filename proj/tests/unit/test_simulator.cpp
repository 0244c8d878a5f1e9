#include "slicekit/simulator.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

using namespace slicekit;
using namespace slicekit::sim;

namespace {

MaterialSpec test_material() {
    MaterialSpec m;
    m.name = "test_block";
    m.hardness = 0.3;
    m.skin_toughness = 0.0;
    m.height = 0.05;
    m.length = 0.15;
    m.resonance_hz = 1500.0;
    m.damping = 0.5;
    return m;
}

double peak(const std::vector<double>& v) {
    double p = 0.0;
    for (const double x : v) {
        p = std::max(p, std::abs(x));
    }
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Knife embedded 5 mm deep, sawing laterally with a downward preload.
double slicing_rms(const MaterialSpec& m, std::size_t channel, std::uint64_t seed) {
    const SimConfig c;
    World w(m, c, seed, 0.5 * m.length, m.height + 0.01);
    embed_knife(w.state(), m, c, 0.005);
    w.state().cmd_z -= 0.003;
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        const auto win = w.window({(i % 2 == 0) ? 0.03 : -0.03, 0.0});
        REQUIRE(win.truth == Event::SlicingObject);
        sum += signals::rms(win.window.vibration[channel]);
    }
    return sum / 3.0;
}

DatasetRecipe small_recipe() {
    DatasetRecipe r;
    r.board_hits = 4;
    r.board_scrapes = 2;
    r.object_hits_min = 2;
    r.object_hits_max = 3;
    r.object_scrapes = 1;
    r.slicing_min = 2;
    r.slicing_max = 3;
    r.in_air = 2;
    return r;
}

std::vector<MaterialSpec> small_materials() {
    const auto all = default_materials();
    return {find_material(all, "cucumber"), find_material(all, "tofu"), find_material(all, "corn")};
}

}  // namespace

TEST_CASE("default materials are valid, distinct and cover the required kinds") {
    const auto mats = default_materials();
    REQUIRE(mats.size() >= 12);
    std::set<std::string> names;
    std::set<double> resonances;
    bool uncuttable = false, slip_prone = false, old_pair = false;
    for (const auto& m : mats) {
        REQUIRE_NOTHROW(m.validate());
        names.insert(m.name);
        resonances.insert(m.resonance_hz);
        uncuttable = uncuttable || (m.phi_x == 0.0 && m.phi_z == 0.0);
        slip_prone = slip_prone || m.slip_propensity > 0.0;
        old_pair = old_pair || m.freshness == "old";
    }
    CHECK(names.size() == mats.size());
    CHECK(resonances.size() == mats.size());
    CHECK(uncuttable);
    CHECK(slip_prone);
    CHECK(old_pair);
}

TEST_CASE("material library round-trips through JSON and rejects bad values") {
    const auto dir = std::filesystem::temp_directory_path() / "slicekit_mat_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "m.json";
    const auto mats = default_materials();
    save_materials(path, mats);
    const auto back = load_materials(path);
    REQUIRE(back.size() == mats.size());
    for (std::size_t i = 0; i < mats.size(); ++i) {
        CHECK(to_json(back[i]) == to_json(mats[i]));
    }

    auto j = to_json(mats[0]);
    j["hardness"] = 1.5;
    CHECK_THROWS_AS(material_from_json(j), std::invalid_argument);
    j = to_json(mats[0]);
    j["height"] = 0.0;
    CHECK_THROWS_AS(material_from_json(j), std::invalid_argument);
    j = to_json(mats[0]);
    j["true_params"] = {-0.01, 0.0};
    CHECK_THROWS_AS(material_from_json(j), std::invalid_argument);

    std::ofstream(dir / "bad.json") << "{not json";
    CHECK_THROWS_AS(load_materials(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(find_material(mats, "durian"), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("knife in the air reads no contact force and only sensor noise") {
    const SimConfig c;
    const auto m = test_material();
    World w(m, c, 3, 0.3, 0.2);
    for (int i = 0; i < 20; ++i) {
        const auto win = w.window({(i % 2 == 0) ? 0.05 : -0.05, (i % 3 == 0) ? 0.01 : -0.01});
        REQUIRE(win.truth == Event::InAir);
        for (const auto& f : win.window.forces) {
            for (std::size_t a = 0; a < signals::kForceAxes; ++a) {
                CHECK(std::abs(f[a]) < 6.0 * c.force_noise);
            }
        }
        for (std::size_t ch = 0; ch < signals::kChannels; ++ch) {
            CHECK(signals::rms(win.window.vibration[ch]) <= c.noise_floor);
        }
    }
}

TEST_CASE("descending onto the bare board switches to hitting exactly at board height") {
    const SimConfig c;
    const auto m = test_material();
    World w(m, c, 5, 0.3, 0.02);
    bool reached = false;
    for (int i = 0; i < 100; ++i) {
        const Event e = w.step({0.0, -0.03});
        const bool at_board = w.state().z <= c.board_z + c.contact_band;
        CHECK((e == Event::HittingBoard) == at_board);
        CHECK((e == Event::InAir) == !at_board);
        CHECK(w.state().z >= c.board_z);
        reached = reached || at_board;
    }
    CHECK(reached);
}

TEST_CASE("same seed and commands give identical sensor streams") {
    const auto m = find_material(default_materials(), "cucumber");
    auto run = [&](std::uint64_t seed) {
        World w(m, SimConfig{}, seed, 0.09, 0.06);
        std::vector<EmittedWindow> out;
        for (int i = 0; i < 12; ++i) {
            out.push_back(w.window({(i % 2 == 0) ? 0.01 : -0.01, -0.02}));
        }
        return out;
    };
    const auto a = run(11);
    const auto b = run(11);
    const auto other = run(12);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].truth == b[i].truth);
        CHECK(a[i].window.vibration == b[i].window.vibration);
        CHECK(a[i].window.forces == b[i].window.forces);
        differs = differs || a[i].window.vibration != other[i].window.vibration;
    }
    CHECK(differs);
}

TEST_CASE("a faster board impact rings louder") {
    const SimConfig c;
    const auto m = test_material();
    auto impact_peak = [&](double v) {
        World w(m, c, 21, 0.3, 0.01);
        double p = 0.0;
        for (int i = 0; i < 8; ++i) {
            const auto win = w.window({0.0, -v});
            p = std::max(p, peak(win.window.vibration[signals::BoardMic1]));
        }
        return p;
    };
    for (const double v : {0.01, 0.02, 0.04}) {
        CHECK(impact_peak(2.0 * v) > impact_peak(v));
    }
}

TEST_CASE("slicing sound rises with hardness and separates materials") {
    auto with_h = [](double h) {
        auto m = test_material();
        m.hardness = h;
        return m;
    };
    double prev = 0.0;
    for (const double h : {0.05, 0.15, 0.3, 0.45, 0.6, 0.75, 0.85}) {
        const double r = slicing_rms(with_h(h), signals::KnifeMic, 9);
        CHECK(r >= prev);
        prev = r;
    }

    // Two-sample comparison of knife-mic RMS over independent seeds.
    const SimConfig c;
    std::vector<double> soft, hard;
    for (std::uint64_t s = 0; s < 12; ++s) {
        soft.push_back(slicing_rms(with_h(0.2), signals::KnifeMic, 100 + s));
        hard.push_back(slicing_rms(with_h(0.6), signals::KnifeMic, 200 + s));
    }
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    auto var = [&](const std::vector<double>& v) {
        const double mu = mean(v);
        double s = 0.0;
        for (const double x : v) {
            s += (x - mu) * (x - mu);
        }
        return s / (v.size() - 1);
    };
    const double diff = mean(hard) - mean(soft);
    const double t = diff / std::sqrt(var(hard) / hard.size() + var(soft) / soft.size());
    CHECK(diff > c.noise_floor);
    CHECK(t > 5.0);
}

TEST_CASE("events stay consistent with geometry over random episodes") {
    const SimConfig c;
    const auto mats = default_materials();
    for (std::uint64_t ep = 0; ep < 24; ++ep) {
        const auto& m = mats[ep % mats.size()];
        Rng rng(derive_seed(77, "episode", ep));
        World w(m, c, ep, rng.uniform(0.0, m.length + 0.05), m.height + rng.uniform(0.005, 0.03));
        double progress = w.state().cut_progress;
        double right = w.state().food_right;
        Command cmd;
        for (int step = 0; step < 600; ++step) {
            if (step % 15 == 0) {
                cmd = {rng.uniform(-0.04, 0.04), rng.uniform(-0.05, 0.03)};
            }
            if (w.state().z > 0.1) {
                cmd.vz = -0.02;
            }
            const Event e = w.step(cmd);
            const auto& s = w.state();
            const bool at_board = s.z <= c.board_z + c.contact_band;
            INFO("material " << m.name << " episode " << ep << " step " << step);
            CHECK(s.z >= c.board_z - 1e-12);
            if (e == Event::HittingBoard || e == Event::ScrapingBoard) {
                CHECK(at_board);
            }
            if (e == Event::SlicingObject) {
                CHECK(s.in_kerf);
                CHECK((s.kerf_depth >= c.embed_depth || s.pending.back().vx > c.slide_speed));
            }
            if (e == Event::InAir) {
                CHECK(!at_board);
                CHECK(!s.in_kerf);
                const auto top = food_top(s, m, c, s.x);
                CHECK((!top || s.z > *top + c.contact_band));
            }
            if (s.in_kerf) {
                CHECK(s.z < s.kerf_top);
            }
            CHECK(s.cut_progress >= progress);
            CHECK(s.food_right <= right);
            progress = s.cut_progress;
            right = s.food_right;
        }
    }
}

TEST_CASE("cutting through to the board removes one slice") {
    const SimConfig c;
    auto m = test_material();
    m.hardness = 0.2;
    World w(m, c, 4, 0.13, m.height + 0.005);
    for (int i = 0; i < 400 && w.state().slice_thickness.empty(); ++i) {
        w.step({(i / 20) % 2 == 0 ? 0.02 : -0.02, -0.03});
    }
    REQUIRE(w.state().slice_thickness.size() == 1);
    CHECK(w.state().slice_thickness[0] > 0.0);
    CHECK(w.state().food_right < m.length);
    CHECK(w.state().right_end_cut);
    CHECK(w.state().cut_progress >= m.height - c.contact_band - 1e-9);
}

TEST_CASE("uncuttable items are never penetrated") {
    const SimConfig c;
    const auto m = find_material(default_materials(), "corn");
    World w(m, c, 8, 0.09, m.height + 0.01);
    std::map<Event, int> seen;
    for (int i = 0; i < 300; ++i) {
        ++seen[w.step({(i / 25) % 2 == 0 ? 0.02 : -0.02, -0.02})];
    }
    CHECK(w.state().cut_progress == 0.0);
    CHECK(!w.state().in_kerf);
    CHECK(w.state().slice_thickness.empty());
    CHECK(seen[Event::HittingObject] > 0);
    CHECK(seen[Event::SlicingObject] == 0);
}

TEST_CASE("slips happen on slip-prone skins under light engagement only") {
    const SimConfig c;
    const auto mats = default_materials();
    auto slips = [&](const MaterialSpec& m, double preload) {
        std::size_t total = 0;
        for (std::uint64_t s = 0; s < 10; ++s) {
            World w(m, c, s, 0.5 * m.length, m.height + 0.01);
            embed_knife(w.state(), m, c, 0.001);
            w.state().cmd_z -= preload;
            for (int i = 0; i < 8; ++i) {
                w.window({(i % 2 == 0) ? 0.03 : -0.03, 0.0});
            }
            total += w.state().slips;
        }
        return total;
    };
    const auto& melon = find_material(mats, "watermelon");
    CHECK(slips(melon, 0.002) > 0);
    CHECK(slips(melon, 0.002) > slips(melon, 0.0115));
    CHECK(slips(find_material(mats, "cucumber"), 0.002) == 0);
}

TEST_CASE("world rejects impossible starts and steps") {
    const SimConfig c;
    const auto m = test_material();
    CHECK_THROWS_AS(make_world(m, c, 1, 0.05, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(make_world(m, c, 1, 0.3, -0.01), std::invalid_argument);
    auto s = make_world(m, c, 1, 0.3, 0.1);
    CHECK_THROWS_AS(step_world(s, m, c, {}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(emit_sensors(s, m, c), std::logic_error);
}

TEST_CASE("dataset honours the recipe and labels windows") {
    const auto mats = small_materials();
    const auto recipe = small_recipe();
    const auto ds = generate_dataset(mats, recipe, 5);
    std::map<std::string, std::set<std::size_t>> episodes;
    std::map<std::string, std::map<std::string, std::set<std::size_t>>> by_material;
    std::set<std::string> truths;
    for (const auto& row : ds.rows) {
        REQUIRE(row.features.size() == signals::kFullLength);
        CHECK(row.label == row.truth);
        episodes[row.skill].insert(row.episode_id);
        by_material[row.skill][row.material].insert(row.episode_id);
        truths.insert(row.truth);
    }
    CHECK(episodes["move_down_on_board"].size() == recipe.board_hits);
    CHECK(episodes["scrape_board"].size() == recipe.board_scrapes);
    CHECK(episodes["in_air_dmp"].size() == recipe.in_air);
    for (const auto& m : mats) {
        const auto hits = by_material["move_down_onto_object"][m.name].size();
        CHECK(hits >= recipe.object_hits_min);
        CHECK(hits <= recipe.object_hits_max);
        CHECK(by_material["scrape_object"][m.name].size() == recipe.object_scrapes);
        const auto slices = by_material["slicing_action"][m.name].size();
        if (m.cuttable()) {
            CHECK(slices >= recipe.slicing_min);
            CHECK(slices <= recipe.slicing_max);
        } else {
            CHECK(slices == 0);
        }
    }
    for (const Event e : kAllEvents) {
        CHECK(truths.count(std::string(event_name(e))) == 1);
    }
    CHECK_THROWS_AS(generate_dataset({}, recipe, 5), std::invalid_argument);
}

TEST_CASE("dataset files are byte-identical for a fixed seed and read back") {
    const auto dir = std::filesystem::temp_directory_path() / "slicekit_ds_test";
    std::filesystem::create_directories(dir);
    const auto mats = small_materials();
    const auto a = generate_dataset(mats, small_recipe(), 9);
    const auto b = generate_dataset(mats, small_recipe(), 9, SimConfig{}, 2);
    write_dataset(dir / "a.jsonl", a.rows);
    write_dataset(dir / "b.jsonl", b.rows);
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));

    const auto back = read_dataset(dir / "a.jsonl");
    REQUIRE(back.size() == a.rows.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].features == a.rows[i].features);
        CHECK(back[i].label == a.rows[i].label);
        CHECK(back[i].phi_x == a.rows[i].phi_x);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("changepoint labels agree with ground truth on most windows") {
    auto recipe = small_recipe();
    recipe.use_labeler = true;
    const auto ds = generate_dataset(small_materials(), recipe, 13);
    std::size_t agree = 0;
    for (const auto& row : ds.rows) {
        agree += row.label == row.truth;
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(ds.rows.size()) >= 0.9);
}
