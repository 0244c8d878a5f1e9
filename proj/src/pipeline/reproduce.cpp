#include "slicekit/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace slicekit::sim {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SimConfig, step_dt, board_z, contact_band, impedance, impact_gain,
                                                cut_rate_base, cut_rate_saw, uncuttable_hardness, embed_depth,
                                                hit_hold, slide_speed, slip_hold_force, slip_duration, slip_offset,
                                                force_noise, torque_noise, sensor_noise, noise_floor, hum_amplitude)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetRecipe, board_hits, board_scrapes, object_hits_min,
                                                object_hits_max, object_scrapes, slicing_min, slicing_max, in_air,
                                                fixed_phi_x, fixed_phi_z, use_labeler)

}  // namespace slicekit::sim

namespace slicekit::seq {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SequencerConfig, force_threshold, lift, slice_thickness, board_speed,
                                                left_speed, descent_speed, travel_speed, clearance, safe_height,
                                                smoothing, engagement, engagement_gain, max_recoveries, max_retries,
                                                max_actions, reoffset, budget_windows)

}  // namespace slicekit::seq

namespace slicekit::pipeline {

void to_json(nlohmann::json& j, LabelField f) { j = f == LabelField::Truth ? "truth" : "label"; }

void from_json(const nlohmann::json& j, LabelField& f) {
    const auto s = j.get<std::string>();
    if (s != "label" && s != "truth") {
        throw ConfigError("config: labels must be \"label\" or \"truth\", not \"" + s + "\"");
    }
    f = s == "truth" ? LabelField::Truth : LabelField::Label;
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainSettings, epochs, batch_size, lr, test_fraction, cap_per_class,
                                                labels)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BenchSettings, trials, slices, max_hardness, fixed_x, fixed_z)

namespace {

constexpr const char* kVersion = "0.1.0";

// Rejects keys the defaults do not have, so typos surface as config errors.
template <typename T>
T strict_merge(const T& base, const nlohmann::json& patch, const std::string& where) {
    if (!patch.is_object()) {
        throw ConfigError("config: '" + where + "' must be an object");
    }
    nlohmann::json j = base;
    for (const auto& [key, value] : patch.items()) {
        if (!j.contains(key)) {
            throw ConfigError("config: unknown key '" + where + "." + key + "'");
        }
        j[key] = value;
    }
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: bad value in '" + where + "': " + e.what());
    }
}

std::string hex(const unsigned char* d, unsigned n) {
    std::ostringstream s;
    for (unsigned i = 0; i < n; ++i) {
        s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(d[i]);
    }
    return s.str();
}

struct Digest {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    Digest() {
        if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("sha256: cannot initialize digest");
        }
    }
    ~Digest() { EVP_MD_CTX_free(ctx); }
    Digest(const Digest&) = delete;
    Digest& operator=(const Digest&) = delete;
    void update(const void* p, std::size_t n) {
        if (EVP_DigestUpdate(ctx, p, n) != 1) {
            throw std::runtime_error("sha256: update failed");
        }
    }
    std::string finish() {
        unsigned char out[EVP_MAX_MD_SIZE];
        unsigned n = 0;
        if (EVP_DigestFinal_ex(ctx, out, &n) != 1) {
            throw std::runtime_error("sha256: finalize failed");
        }
        return hex(out, n);
    }
};

class Stages {
public:
    Stages(std::ostream* log) : log_(log) {}

    template <typename F>
    void run(const std::string& name, F&& body) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
        names.push_back(name);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        seconds.emplace_back(name, s);
        if (log_ != nullptr) {
            *log_ << "[" << name << "] done in " << std::fixed << std::setprecision(1) << s << " s\n" << std::flush;
        }
    }

    std::vector<std::string> names;
    std::vector<std::pair<std::string, double>> seconds;

private:
    std::ostream* log_;
};

std::string csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

void RunConfig::apply(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("config: top level must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "seed") {
                seed = value.get<std::uint64_t>();
            } else if (key == "materials") {
                materials = value.is_null() ? std::nullopt
                                            : std::optional<std::filesystem::path>(value.get<std::string>());
            } else if (key == "demos") {
                demos = value.get<std::size_t>();
            } else if (key == "recipe") {
                recipe = strict_merge(recipe, value, key);
            } else if (key == "sim") {
                sim = strict_merge(sim, value, key);
            } else if (key == "sequencer") {
                sequencer = strict_merge(sequencer, value, key);
            } else if (key == "train") {
                train = strict_merge(train, value, key);
            } else if (key == "bench") {
                bench = strict_merge(bench, value, key);
            } else {
                throw ConfigError("config: unknown key '" + key + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: bad value for '" + key + "': " + e.what());
        }
    }
    sequencer.validate();
    if (demos < 2) {
        throw ConfigError("config: demos must be at least 2");
    }
    if (bench.trials == 0 || bench.slices == 0) {
        throw ConfigError("config: bench trials and slices must be positive");
    }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config file " + path.string() + " cannot be read");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    RunConfig c;
    c.apply(j);
    return c;
}

nlohmann::json to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"materials", c.materials ? nlohmann::json(c.materials->generic_string()) : nlohmann::json(nullptr)},
            {"demos", c.demos},
            {"recipe", c.recipe},
            {"sim", c.sim},
            {"sequencer", c.sequencer},
            {"train", c.train},
            {"bench", c.bench}};
}

std::string config_digest(const RunConfig& c) { return sha256_hex(to_json(c).dump()); }

std::vector<sim::MaterialSpec> load_run_materials(const RunConfig& c) {
    if (!c.materials) {
        return sim::default_materials();
    }
    if (!std::filesystem::is_regular_file(*c.materials)) {
        throw ConfigError("materials file " + c.materials->string() + " does not exist");
    }
    try {
        return sim::load_materials(*c.materials);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::string sha256_hex(std::string_view data) {
    Digest d;
    d.update(data.data(), data.size());
    return d.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    Digest d;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return d.finish();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json write_manifest(const std::filesystem::path& dir, const RunConfig& config,
                              const std::vector<std::string>& stages) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") {
            files.push_back(e.path());
        }
    }
    std::vector<std::pair<std::string, std::filesystem::path>> named;
    for (const auto& f : files) {
        named.emplace_back(std::filesystem::relative(f, dir).generic_string(), f);
    }
    std::sort(named.begin(), named.end());
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& [rel, f] : named) {
        outputs.push_back({{"path", rel}, {"bytes", std::filesystem::file_size(f)}, {"sha256", sha256_file(f)}});
    }
    nlohmann::json m = {{"tool", "slicekit"},
                        {"version", kVersion},
                        {"seed", config.seed},
                        {"config_digest", config_digest(config)},
                        {"stages", stages},
                        {"outputs", outputs}};
    write_json(dir / "manifest.json", m);
    return m;
}

ReproduceResult reproduce(const RunConfig& config, const std::filesystem::path& out, std::size_t jobs,
                          std::ostream* log) {
    namespace fs = std::filesystem;
    if (fs::exists(out) && !fs::is_directory(out)) {
        throw ConfigError("output path " + out.string() + " is not a directory");
    }
    if (fs::exists(out) && !fs::is_empty(out)) {
        throw ConfigError("output directory " + out.string() + " is not empty");
    }
    fs::create_directories(out);
    write_json(out / "config.json", to_json(config));

    Stages stages(log);
    std::vector<sim::MaterialSpec> materials;
    std::vector<sim::DatasetRow> rows;
    std::vector<TaskRun> runs;
    const std::uint64_t seed = config.seed;

    stages.run("materials", [&] {
        materials = load_run_materials(config);
        sim::save_materials(out / "materials.json", materials);
    });
    stages.run("gen-data", [&] {
        const auto ds = sim::generate_dataset(materials, config.recipe, seed, config.sim, jobs);
        rows = ds.rows;
        sim::write_dataset(out / "data" / "dataset.jsonl", rows);
        auto summary = dataset_summary(rows);
        summary["warnings"] = ds.warnings;
        summary["seed"] = seed;
        write_json(out / "data" / "summary.json", summary);
    });
    stages.run("label", [&] {
        const auto rep = label_report(rows);
        auto j = to_json(rep);
        j["source"] = config.recipe.use_labeler ? "changepoint" : "ground truth";
        write_json(out / "labels" / "report.json", j);
        std::ostringstream csv;
        write_confusion_csv(csv, rep.confusion);
        write_text(out / "labels" / "confusion.csv", csv.str());
    });
    stages.run("train", [&] {
        runs = train_tasks(rows, all_tasks(), signals::FeatureMask::full(), config.train, seed, jobs);
        for (const auto& r : runs) {
            write_json(out / "models" / model_file(r.task), classify::to_json(r.result.model));
        }
        write_json(out / "models" / "params.json", to_json(seq::ParamTable::from_materials(materials)));
    });
    stages.run("eval", [&] {
        const TaskRun* six = nullptr;
        for (const auto& r : runs) {
            if (r.task == Task::SliceNet) {
                six = &r;
            }
        }
        for (const auto& r : runs) {
            auto j = classify::to_json(r.result.report);
            j["task"] = task_name(r.task);
            j["seed"] = seed;
            j["samples"] = r.data.size();
            j["test_samples"] = r.result.split.test.size();
            if (r.task != Task::Regression) {
                j["truth_weighted_f1"] = truth_f1(r, rows);
                std::ostringstream csv;
                write_confusion_csv(csv, r.result.report);
                write_text(out / "reports" / (std::string(task_name(r.task)) + "_confusion.csv"), csv.str());
            }
            write_json(out / "reports" / (std::string(task_name(r.task)) + ".json"), j);
        }
        nlohmann::json subsets = nlohmann::json::array();
        for (const auto& r : runs) {
            if (r.task == Task::Hitting || r.task == Task::Slicing) {
                const auto c = compare_subset(r, *six);
                subsets.push_back({{"task", task_name(c.task)},
                                   {"windows", c.windows},
                                   {"subset_f1", c.subset_f1},
                                   {"six_way_f1", c.six_way_f1}});
            }
        }
        write_json(out / "reports" / "subsets.json", {{"seed", seed}, {"subsets", subsets}});
    });
    stages.run("ablate", [&] {
        const auto table = run_ablation(rows, config.train, seed, jobs);
        std::ostringstream csv;
        write_ablation_csv(csv, table);
        write_text(out / "ablation" / "features.csv", csv.str());
    });
    dmp::SlicingModel slicing;
    stages.run("dmp", [&] {
        const dmp::DemoShape shape;
        const auto demos = dmp::synthetic_slicing_demos(config.demos, derive_seed(seed, "demos"), shape);
        slicing = dmp::learn_slicing_model(demos, dmp::DmpConfig::uniform_basis(), 1e-8, shape.duration);
        write_json(out / "models" / "slicing_dmp.json", dmp::to_json(slicing));
        std::ostringstream csv;
        dmp::write_trajectory_csv(csv, demos.front());
        write_text(out / "dmp" / "demo_0.csv", csv.str());
    });
    stages.run("bench", [&] {
        const seq::Models models = seq::Models::load(out / "models");
        const auto table = seq::ParamTable::from_materials(materials);
        const std::size_t k = config.sequencer.smoothing;
        const seq::MonitorFactory factory = [&](const sim::MaterialSpec&) {
            return std::make_unique<seq::LearnedMonitor>(models, k);
        };
        seq::Policy fixed;
        fixed.fixed_x = config.bench.fixed_x;
        fixed.fixed_z = config.bench.fixed_z;
        seq::Policy adaptive = fixed;
        adaptive.adaptive = true;
        const auto soft = seq::soft_materials(materials, config.bench.max_hardness);
        if (soft.empty()) {
            throw ConfigError("no cuttable materials at or below hardness " + std::to_string(config.bench.max_hardness));
        }
        const auto result = seq::bench(soft, factory, table, slicing, config.bench.trials, config.bench.slices,
                                       derive_seed(seed, "bench"), fixed, adaptive, config.sequencer, config.sim, jobs);
        std::ostringstream csv;
        seq::write_bench_csv(csv, result);
        write_text(out / "bench" / "policies.csv", csv.str());

        std::ostringstream eps;
        eps << "material,policy,trial,slices_completed,actions,actions_per_slice,seconds_per_slice,failures,outcome\n";
        for (const auto& r : result.rows) {
            eps << r.material << ',' << r.policy << ',' << r.seed << ',' << r.slices_completed << ',' << r.actions
                << ',' << csv_double(r.actions_per_slice) << ',' << csv_double(r.seconds_per_slice) << ','
                << r.failures << ',' << r.outcome << '\n';
        }
        write_text(out / "bench" / "episodes.csv", eps.str());

        // Uncuttable items under the adaptive policy.
        nlohmann::json hard = nlohmann::json::array();
        for (const auto& m : materials) {
            if (m.cuttable()) {
                continue;
            }
            for (std::size_t t = 0; t < config.bench.trials; ++t) {
                seq::LearnedMonitor monitor(models, k);
                seq::EpisodeRequest req;
                req.material = m;
                req.sim = config.sim;
                req.config = config.sequencer;
                req.policy = adaptive;
                req.slices = config.bench.slices;
                req.seed = derive_seed(seed, "uncuttable:" + m.name, t);
                const auto log = seq::run_episode(req, monitor, table, slicing);
                hard.push_back({{"material", m.name},
                                {"trial", t},
                                {"outcome", log.outcome},
                                {"predicted_material",
                                 log.predicted_material ? nlohmann::json(*log.predicted_material) : nullptr},
                                {"params", {log.phi_x, log.phi_z}},
                                {"slices_completed", log.slices_completed},
                                {"failures", log.failures.size()}});
            }
        }
        write_json(out / "bench" / "uncuttable.json", {{"seed", seed}, {"episodes", hard}});
        nlohmann::json per = nlohmann::json::array();
        for (const auto& s : result.per_material) {
            per.push_back({{"material", s.material},
                           {"fixed_actions", s.fixed_actions},
                           {"adaptive_actions", s.adaptive_actions},
                           {"reduction", s.reduction},
                           {"fixed_failures", s.fixed_failures},
                           {"adaptive_failures", s.adaptive_failures}});
        }
        write_json(out / "bench" / "summary.json",
                   {{"seed", seed},
                    {"materials", per},
                    {"overall",
                     {{"fixed_actions", result.overall.fixed_actions},
                      {"adaptive_actions", result.overall.adaptive_actions},
                      {"reduction", result.overall.reduction},
                      {"fixed_failures", result.overall.fixed_failures},
                      {"adaptive_failures", result.overall.adaptive_failures},
                      {"fixed_seconds", result.overall.fixed_seconds},
                      {"adaptive_seconds", result.overall.adaptive_seconds}}}});
    });

    ReproduceResult r;
    r.manifest_json = write_manifest(out, config, stages.names);
    r.manifest = out / "manifest.json";
    r.stage_seconds = stages.seconds;
    return r;
}

}  // namespace slicekit::pipeline
