#include "slicekit/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace slicekit;
using nlohmann::json;

namespace {

constexpr int kConfigExit = 2;
constexpr int kPipelineExit = 3;

struct Common {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> config;
    std::optional<std::string> materials;
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());

    pipeline::RunConfig run_config() const {
        auto c = config ? pipeline::RunConfig::from_file(*config) : pipeline::RunConfig{};
        if (seed) {
            c.seed = *seed;
        }
        if (materials) {
            c.materials = fs::path(*materials);
        }
        return c;
    }
};

void add_common(CLI::App* app, Common& c, bool with_materials = false) {
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
    if (with_materials) {
        app->add_option("--materials", c.materials, "Material library JSON")->check(CLI::ExistingFile);
    }
}

void emit(const json& j, const std::optional<std::string>& out) {
    if (out) {
        pipeline::write_json(*out, j);
    } else {
        std::cout << j.dump(2) << '\n';
    }
}

std::vector<sim::DatasetRow> read_rows(const std::string& path) {
    auto rows = sim::read_dataset(path);
    if (rows.empty()) {
        throw ConfigError("dataset " + path + " has no rows");
    }
    return rows;
}

signals::FeatureMask mask_of(const std::string& text) {
    try {
        return signals::FeatureMask::parse(text);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

seq::Policy policy_of(const std::string& name, const pipeline::BenchSettings& b) {
    seq::Policy p;
    p.fixed_x = b.fixed_x;
    p.fixed_z = b.fixed_z;
    if (name == "adaptive" || name == "adaptive-direct") {
        p.adaptive = true;
        p.mode = name == "adaptive" ? seq::AdaptMode::Lookup : seq::AdaptMode::Direct;
    } else if (name != "fixed") {
        throw ConfigError("unknown policy '" + name + "'");
    }
    return p;
}

dmp::SlicingModel slicing_model_in(const std::optional<std::string>& models) {
    if (models && fs::is_regular_file(fs::path(*models) / "slicing_dmp.json")) {
        std::ifstream in(fs::path(*models) / "slicing_dmp.json");
        return dmp::slicing_model_from_json(json::parse(in));
    }
    return dmp::default_slicing_model();
}

seq::ParamTable table_for(const std::optional<std::string>& models, const std::vector<sim::MaterialSpec>& materials) {
    if (models && fs::is_regular_file(fs::path(*models) / "params.json")) {
        std::ifstream in(fs::path(*models) / "params.json");
        return seq::param_table_from_json(json::parse(in));
    }
    return seq::ParamTable::from_materials(materials);
}

struct EpisodeArgs {
    Common common;
    std::string material;
    std::size_t slices = 3;
    std::string policy = "adaptive";
    std::optional<std::string> models;
    bool oracle = false;
    bool windows = false;
    std::optional<std::string> out;
};

void add_episode(CLI::App* cmd, EpisodeArgs& a, bool models_required) {
    add_common(cmd, a.common, true);
    cmd->add_option("--material", a.material, "Item to cut")->required();
    cmd->add_option("--slices", a.slices, "Slices to cut")->check(CLI::PositiveNumber);
    cmd->add_option("--policy", a.policy, "adaptive, adaptive-direct or fixed")
        ->check(CLI::IsMember({"adaptive", "adaptive-direct", "fixed"}));
    auto* m = cmd->add_option("--models", a.models, "Directory of trained models")->check(CLI::ExistingDirectory);
    if (models_required) {
        m->required();
    } else {
        cmd->add_flag("--oracle", a.oracle, "Use simulator ground truth as the event monitor")->excludes(m);
    }
    cmd->add_flag("--windows", a.windows, "Include every monitored window in the log");
    cmd->add_option("--out", a.out, "Write the episode log here instead of stdout");
}

int run_episode_cmd(const EpisodeArgs& a) {
    const auto cfg = a.common.run_config();
    const auto materials = pipeline::load_run_materials(cfg);
    seq::EpisodeRequest req;
    try {
        req.material = sim::find_material(materials, a.material);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    req.sim = cfg.sim;
    req.config = cfg.sequencer;
    req.policy = policy_of(a.policy, cfg.bench);
    req.slices = a.slices;
    req.seed = cfg.seed;
    req.keep_windows = a.windows;

    std::optional<seq::Models> models;
    std::unique_ptr<seq::Monitor> monitor;
    const auto table = table_for(a.models, materials);
    seq::EpisodeLog log;
    try {
        if (a.models) {
            models = seq::Models::load(*a.models);
            monitor = std::make_unique<seq::LearnedMonitor>(*models, cfg.sequencer.smoothing);
        } else {
            monitor = std::make_unique<seq::OracleMonitor>(req.material.name);
        }
        log = seq::run_episode(req, *monitor, table, slicing_model_in(a.models));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    emit(seq::to_json(log), a.out);
    std::cerr << a.material << ": " << log.outcome << ", " << log.slices_completed << " slices, "
              << log.total_actions() << " actions, " << log.failures.size() << " failures\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slicekit: multimodal event monitoring and adaptive slicing in simulation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "slicekit 0.1.0");

    // sim ----------------------------------------------------------------------
    auto* sim_cmd = app.add_subcommand("sim", "Simulator: materials, datasets and single episodes");
    sim_cmd->require_subcommand(1);

    Common mat_common;
    auto* materials_cmd = sim_cmd->add_subcommand("materials", "Print the material library");
    add_common(materials_cmd, mat_common, true);

    Common gen_common;
    std::string gen_out;
    std::string gen_labels = "changepoint";
    auto* gen_cmd = sim_cmd->add_subcommand("gen-data", "Generate a labeled window dataset (JSON lines)");
    add_common(gen_cmd, gen_common, true);
    gen_cmd->add_option("--out", gen_out, "Output .jsonl")->required();
    gen_cmd->add_option("--labels", gen_labels, "Label source: changepoint or truth")
        ->check(CLI::IsMember({"changepoint", "truth"}));

    EpisodeArgs sim_ep;
    auto* episode_cmd = sim_cmd->add_subcommand("episode", "Run one cutting episode");
    add_episode(episode_cmd, sim_ep, false);

    EpisodeArgs cut_ep;
    auto* cut_cmd = app.add_subcommand("cut", "Cut an item with trained models");
    add_episode(cut_cmd, cut_ep, true);

    // label / train / eval --------------------------------------------------------
    Common label_common;
    std::string label_data;
    std::optional<std::string> label_out;
    auto* label_cmd = app.add_subcommand("label", "Agreement of dataset labels with ground truth");
    add_common(label_cmd, label_common);
    label_cmd->add_option("--data", label_data, "Dataset .jsonl")->required()->check(CLI::ExistingFile);
    label_cmd->add_option("--out", label_out, "Report JSON");

    Common train_common;
    std::string train_data, train_task = "slicenet", train_mask = "full", train_out;
    auto* train_cmd = app.add_subcommand("train", "Train one network");
    add_common(train_cmd, train_common);
    train_cmd->add_option("--data", train_data, "Dataset .jsonl")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--task", train_task, "slicenet, hitting, slicing, foodnet or regress");
    train_cmd->add_option("--mask", train_mask, "Input features, e.g. full, forces, sound, mfcc+forces");
    train_cmd->add_option("--out", train_out, "Model JSON")->required();

    Common eval_common;
    std::string eval_data, eval_model, eval_task = "slicenet";
    std::optional<std::string> eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained network on a dataset");
    add_common(eval_cmd, eval_common);
    eval_cmd->add_option("--data", eval_data, "Dataset .jsonl")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--model", eval_model, "Model JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--task", eval_task, "Task the model was trained for");
    eval_cmd->add_option("--out", eval_out, "Report JSON");

    // dmp ---------------------------------------------------------------------------
    auto* dmp_cmd = app.add_subcommand("dmp", "Dynamic movement primitives");
    dmp_cmd->require_subcommand(1);

    Common demos_common;
    std::size_t demo_count = 10;
    std::string demos_out;
    auto* demos_cmd = dmp_cmd->add_subcommand("demos", "Write synthetic slicing demonstrations as CSV");
    add_common(demos_cmd, demos_common);
    demos_cmd->add_option("--count", demo_count, "Number of demonstrations")->check(CLI::Range(2, 1000));
    demos_cmd->add_option("--out", demos_out, "Output directory")->required();

    Common fit_common;
    std::vector<std::string> fit_demos;
    std::string fit_out;
    double fit_lambda = 1e-8;
    std::size_t fit_basis = 30;
    auto* fit_cmd = dmp_cmd->add_subcommand("fit", "Fit the slicing primitive to demonstrations");
    add_common(fit_cmd, fit_common);
    fit_cmd->add_option("--demos", fit_demos, "Demo CSV files or a directory of them")->required();
    fit_cmd->add_option("--lambda", fit_lambda, "Ridge regularization")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--basis", fit_basis, "Basis functions")->check(CLI::Range(1, 500));
    fit_cmd->add_option("--out", fit_out, "Model JSON")->required();

    Common roll_common;
    std::optional<std::string> roll_model;
    double roll_x = 0.02, roll_z = 0.01;
    std::string roll_out;
    auto* roll_cmd = dmp_cmd->add_subcommand("rollout", "Roll out the slicing primitive for given parameters");
    add_common(roll_cmd, roll_common);
    roll_cmd->add_option("--model", roll_model, "Model JSON (built-in model when omitted)")
        ->check(CLI::ExistingFile);
    roll_cmd->add_option("--phi-x", roll_x, "Sawing amplitude (m)");
    roll_cmd->add_option("--phi-z", roll_z, "Descent per action (m)");
    roll_cmd->add_option("--out", roll_out, "Trajectory CSV")->required();

    // bench / ablate / reproduce ------------------------------------------------------
    Common bench_common;
    std::optional<std::string> bench_models;
    bool bench_oracle = false;
    std::optional<std::size_t> bench_trials;
    std::string bench_out;
    auto* bench_cmd = app.add_subcommand("bench", "Compare fixed and adaptive slicing on the soft materials");
    add_common(bench_cmd, bench_common, true);
    auto* bm = bench_cmd->add_option("--models", bench_models, "Directory of trained models")
                   ->check(CLI::ExistingDirectory);
    bench_cmd->add_flag("--oracle", bench_oracle, "Use ground truth as the event monitor")->excludes(bm);
    bench_cmd->add_option("--trials", bench_trials, "Episodes per material and policy")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--out", bench_out, "Output directory")->required();

    Common ablate_common;
    std::string ablate_data, ablate_out;
    auto* ablate_cmd = app.add_subcommand("ablate", "Input feature ablation for event and material networks");
    add_common(ablate_cmd, ablate_common);
    ablate_cmd->add_option("--data", ablate_data, "Dataset .jsonl")->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--out", ablate_out, "Table CSV")->required();

    Common repro_common;
    std::string repro_out;
    auto* repro_cmd = app.add_subcommand("reproduce", "Run every stage and write a hashed manifest");
    add_common(repro_cmd, repro_common, true);
    repro_cmd->add_option("--out", repro_out, "Output directory (must be empty or absent)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigExit;
    }

    try {
        if (*materials_cmd) {
            const auto materials = pipeline::load_run_materials(mat_common.run_config());
            json arr = json::array();
            for (const auto& m : materials) {
                arr.push_back(sim::to_json(m));
            }
            std::cout << arr.dump(2) << '\n';
        } else if (*gen_cmd) {
            auto cfg = gen_common.run_config();
            cfg.recipe.use_labeler = gen_labels == "changepoint";
            const auto ds = sim::generate_dataset(pipeline::load_run_materials(cfg), cfg.recipe, cfg.seed, cfg.sim,
                                                  gen_common.jobs);
            sim::write_dataset(gen_out, ds.rows);
            for (const auto& w : ds.warnings) {
                std::cerr << "warning: " << w << '\n';
            }
            std::cout << pipeline::dataset_summary(ds.rows).dump(2) << '\n';
        } else if (*episode_cmd) {
            return run_episode_cmd(sim_ep);
        } else if (*cut_cmd) {
            return run_episode_cmd(cut_ep);
        } else if (*label_cmd) {
            emit(pipeline::to_json(pipeline::label_report(read_rows(label_data))), label_out);
        } else if (*train_cmd) {
            const auto cfg = train_common.run_config();
            const auto rows = read_rows(train_data);
            const auto run = pipeline::train_task(rows, pipeline::task_from_name(train_task), mask_of(train_mask),
                                                  cfg.train, cfg.seed);
            pipeline::write_json(train_out, classify::to_json(run.result.model));
            auto rep = classify::to_json(run.result.report);
            rep["samples"] = run.data.size();
            if (run.task != pipeline::Task::Regression) {
                rep["truth_weighted_f1"] = pipeline::truth_f1(run, rows);
            }
            std::cout << rep.dump(2) << '\n';
        } else if (*eval_cmd) {
            const auto cfg = eval_common.run_config();
            std::ifstream in(eval_model);
            const auto model = classify::model_from_json(json::parse(in));
            const auto mask = model.feature_mask == "full" ? signals::FeatureMask::full() : mask_of(model.feature_mask);
            auto settings = cfg.train;
            settings.cap_per_class = std::numeric_limits<std::size_t>::max();
            const auto data = pipeline::task_dataset(read_rows(eval_data), pipeline::task_from_name(eval_task), mask,
                                                     settings, cfg.seed);
            emit(classify::to_json(classify::evaluate(model, data)), eval_out);
        } else if (*demos_cmd) {
            const auto cfg = demos_common.run_config();
            const auto demos = dmp::synthetic_slicing_demos(demo_count, derive_seed(cfg.seed, "demos"));
            fs::create_directories(demos_out);
            for (std::size_t i = 0; i < demos.size(); ++i) {
                dmp::write_trajectory_csv(fs::path(demos_out) / ("demo_" + std::to_string(i) + ".csv"), demos[i]);
            }
            std::cout << "wrote " << demos.size() << " demonstrations to " << demos_out << '\n';
        } else if (*fit_cmd) {
            std::vector<fs::path> files;
            for (const auto& d : fit_demos) {
                if (fs::is_directory(d)) {
                    for (const auto& e : fs::directory_iterator(d)) {
                        if (e.path().extension() == ".csv") {
                            files.push_back(e.path());
                        }
                    }
                } else if (fs::is_regular_file(d)) {
                    files.push_back(d);
                } else {
                    throw ConfigError("demo path " + d + " does not exist");
                }
            }
            std::sort(files.begin(), files.end());
            if (files.size() < 2) {
                throw ConfigError("at least two demonstrations are needed");
            }
            std::vector<dmp::Trajectory> demos;
            for (const auto& f : files) {
                demos.push_back(dmp::read_trajectory_csv(f));
            }
            const double duration = demos.front().times.back() - demos.front().times.front();
            const auto model = dmp::learn_slicing_model(demos, dmp::DmpConfig::uniform_basis(fit_basis), fit_lambda,
                                                        duration);
            pipeline::write_json(fit_out, dmp::to_json(model));
            std::cout << "fitted " << demos.size() << " demonstrations, " << fit_basis << " basis functions\n";
        } else if (*roll_cmd) {
            dmp::SlicingModel model = dmp::default_slicing_model();
            if (roll_model) {
                std::ifstream in(*roll_model);
                model = dmp::slicing_model_from_json(json::parse(in));
            }
            const dmp::ChainSegment seg{&model.skill, dmp::slicing_features(roll_x, roll_z)};
            const auto traj = dmp::chain(std::span(&seg, 1), dmp::Pose{0.0, 0.0, 0.0});
            dmp::write_trajectory_csv(roll_out, traj);
        } else if (*bench_cmd) {
            auto cfg = bench_common.run_config();
            if (bench_trials) {
                cfg.bench.trials = *bench_trials;
            }
            if (!bench_models && !bench_oracle) {
                throw ConfigError("bench needs --models or --oracle");
            }
            const auto materials = pipeline::load_run_materials(cfg);
            std::optional<seq::Models> models;
            if (bench_models) {
                models = seq::Models::load(*bench_models);
            }
            const std::size_t k = cfg.sequencer.smoothing;
            const seq::MonitorFactory factory = [&](const sim::MaterialSpec& m) -> std::unique_ptr<seq::Monitor> {
                if (models) {
                    return std::make_unique<seq::LearnedMonitor>(*models, k);
                }
                return std::make_unique<seq::OracleMonitor>(m.name);
            };
            const auto soft = seq::soft_materials(materials, cfg.bench.max_hardness);
            if (soft.empty()) {
                throw ConfigError("no cuttable materials at or below the hardness limit");
            }
            seq::Policy fixed = policy_of("fixed", cfg.bench);
            seq::Policy adaptive = policy_of("adaptive", cfg.bench);
            const auto result = seq::bench(soft, factory, table_for(bench_models, materials),
                                           slicing_model_in(bench_models), cfg.bench.trials, cfg.bench.slices,
                                           derive_seed(cfg.seed, "bench"), fixed, adaptive, cfg.sequencer, cfg.sim,
                                           bench_common.jobs);
            std::ostringstream csv;
            seq::write_bench_csv(csv, result);
            pipeline::write_text(fs::path(bench_out) / "policies.csv", csv.str());
            std::cout << csv.str();
        } else if (*ablate_cmd) {
            const auto cfg = ablate_common.run_config();
            const auto table = pipeline::run_ablation(read_rows(ablate_data), cfg.train, cfg.seed, ablate_common.jobs);
            std::ostringstream csv;
            pipeline::write_ablation_csv(csv, table);
            pipeline::write_text(ablate_out, csv.str());
            std::cout << csv.str();
        } else if (*repro_cmd) {
            const auto cfg = repro_common.run_config();
            const auto r = pipeline::reproduce(cfg, repro_out, repro_common.jobs, &std::cerr);
            std::cout << "manifest " << r.manifest.string() << " (" << r.manifest_json["outputs"].size()
                      << " files)\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << '\n';
        return kConfigExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kPipelineExit;
    }
    return 0;
}
