#include "slicekit/simulator.hpp"

#include <fstream>
#include <stdexcept>

namespace slicekit::sim {

void MaterialSpec::validate() const {
    auto unit = [&](double v, const char* field) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("material '" + name + "': " + field + " must lie in [0, 1]");
        }
    };
    if (name.empty()) {
        throw std::invalid_argument("material: empty name");
    }
    unit(hardness, "hardness");
    unit(skin_toughness, "skin_toughness");
    unit(friction, "friction");
    unit(slip_propensity, "slip_propensity");
    unit(damping, "damping");
    if (!(height > 0.0) || !(length > 0.0)) {
        throw std::invalid_argument("material '" + name + "': height and length must be positive");
    }
    if (!(phi_x >= 0.0) || !(phi_z >= 0.0)) {
        throw std::invalid_argument("material '" + name + "': slicing parameters must be non-negative");
    }
    if (!(resonance_hz > 20.0 && resonance_hz < 20000.0)) {
        throw std::invalid_argument("material '" + name + "': resonance must lie in the audible band");
    }
}

std::vector<MaterialSpec> default_materials() {
    // Resonances are log-spaced so every item has its own acoustic band.
    // name, hardness, skin, friction, slip, height, length, phi_x, phi_z, freshness, profile, resonance, damping
    return {
        {"tofu", 0.05, 0.0, 0.20, 0.0, 0.040, 0.12, 0.005, 0.045, "fresh", Profile::Flat, 400, 0.85},
        {"watermelon", 0.65, 0.90, 0.30, 0.6, 0.120, 0.25, 0.060, 0.030, "fresh", Profile::Round, 477, 0.50},
        {"bread", 0.12, 0.50, 0.50, 0.0, 0.080, 0.20, 0.050, 0.040, "fresh", Profile::Flat, 568, 0.90},
        {"spaghetti_squash", 0.92, 0.80, 0.30, 0.0, 0.090, 0.20, 0.0, 0.0, "fresh", Profile::Round, 677, 0.30},
        {"banana", 0.15, 0.10, 0.25, 0.0, 0.035, 0.15, 0.010, 0.040, "fresh", Profile::Round, 807, 0.70},
        {"tomato_old", 0.15, 0.35, 0.40, 0.0, 0.058, 0.07, 0.035, 0.030, "old", Profile::Round, 962, 0.78},
        {"tomato", 0.20, 0.45, 0.40, 0.0, 0.060, 0.07, 0.030, 0.035, "fresh", Profile::Round, 1147, 0.60},
        {"cheese", 0.45, 0.00, 0.50, 0.0, 0.030, 0.12, 0.010, 0.035, "fresh", Profile::Flat, 1367, 0.75},
        {"cucumber_old", 0.25, 0.25, 0.30, 0.0, 0.033, 0.18, 0.020, 0.020, "old", Profile::Round, 1630, 0.62},
        {"cucumber", 0.35, 0.30, 0.30, 0.0, 0.035, 0.18, 0.020, 0.040, "fresh", Profile::Round, 1943, 0.40},
        {"kiwi", 0.30, 0.40, 0.35, 0.0, 0.050, 0.07, 0.030, 0.050, "fresh", Profile::Round, 2316, 0.45},
        {"zucchini", 0.40, 0.25, 0.30, 0.0, 0.040, 0.18, 0.030, 0.045, "fresh", Profile::Round, 2761, 0.35},
        {"carrot", 0.60, 0.20, 0.35, 0.0, 0.030, 0.16, 0.040, 0.035, "fresh", Profile::Round, 3291, 0.20},
        {"apple", 0.55, 0.30, 0.35, 0.0, 0.070, 0.08, 0.040, 0.035, "fresh", Profile::Round, 3923, 0.25},
        {"corn", 0.95, 0.60, 0.30, 0.0, 0.040, 0.18, 0.0, 0.0, "fresh", Profile::Round, 4677, 0.15},
        {"bell_pepper", 0.25, 0.55, 0.30, 0.0, 0.060, 0.09, 0.030, 0.035, "fresh", Profile::Round, 5575, 0.30},
    };
}

nlohmann::json to_json(const MaterialSpec& m) {
    return {{"name", m.name},
            {"hardness", m.hardness},
            {"skin_toughness", m.skin_toughness},
            {"friction", m.friction},
            {"slip_propensity", m.slip_propensity},
            {"height", m.height},
            {"length", m.length},
            {"true_params", {m.phi_x, m.phi_z}},
            {"freshness", m.freshness},
            {"profile", m.profile == Profile::Flat ? "flat" : "round"},
            {"resonance_hz", m.resonance_hz},
            {"damping", m.damping}};
}

MaterialSpec material_from_json(const nlohmann::json& j) {
    MaterialSpec m;
    m.name = j.at("name").get<std::string>();
    m.hardness = j.at("hardness").get<double>();
    m.skin_toughness = j.value("skin_toughness", m.skin_toughness);
    m.friction = j.value("friction", m.friction);
    m.slip_propensity = j.value("slip_propensity", m.slip_propensity);
    m.height = j.at("height").get<double>();
    m.length = j.value("length", m.length);
    const auto params = j.at("true_params").get<std::vector<double>>();
    if (params.size() != 2) {
        throw std::invalid_argument("material '" + m.name + "': true_params needs two values");
    }
    m.phi_x = params[0];
    m.phi_z = params[1];
    m.freshness = j.value("freshness", m.freshness);
    const std::string profile = j.value("profile", "flat");
    if (profile != "flat" && profile != "round") {
        throw std::invalid_argument("material '" + m.name + "': profile must be flat or round");
    }
    m.profile = profile == "flat" ? Profile::Flat : Profile::Round;
    m.resonance_hz = j.value("resonance_hz", m.resonance_hz);
    m.damping = j.value("damping", m.damping);
    m.validate();
    return m;
}

std::vector<MaterialSpec> load_materials(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open material library " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("material library " + path.string() + ": " + e.what());
    }
    const auto& list = j.is_object() ? j.at("materials") : j;
    std::vector<MaterialSpec> out;
    try {
        for (const auto& item : list) {
            out.push_back(material_from_json(item));
        }
    } catch (const std::exception& e) {
        throw ConfigError("material library " + path.string() + ": " + e.what());
    }
    if (out.empty()) {
        throw ConfigError("material library " + path.string() + " is empty");
    }
    return out;
}

void save_materials(const std::filesystem::path& path, const std::vector<MaterialSpec>& materials) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& m : materials) {
        list.push_back(to_json(m));
    }
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    out << nlohmann::json{{"materials", list}}.dump(2) << '\n';
}

const MaterialSpec& find_material(const std::vector<MaterialSpec>& materials, const std::string& name) {
    for (const auto& m : materials) {
        if (m.name == name) {
            return m;
        }
    }
    throw ConfigError("unknown material '" + name + "'");
}

}  // namespace slicekit::sim
