#pragma once

#include "slicekit/classify.hpp"
#include "slicekit/dmp.hpp"
#include "slicekit/sequencer.hpp"
#include "slicekit/simulator.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace slicekit::pipeline {

enum class Task { SliceNet, Hitting, Slicing, FoodNet, Regression };

const std::vector<Task>& all_tasks();
const char* task_name(Task t);
/// Throws ConfigError for unknown names.
Task task_from_name(const std::string& name);
/// File name of the trained model inside a model directory.
std::string model_file(Task t);
/// Event classes of the per-skill networks; empty for the other tasks.
std::vector<std::string> task_events(Task t);

enum class LabelField { Label, Truth };

struct TrainSettings {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double test_fraction = 0.2;
    std::size_t cap_per_class = 400;  // windows kept per class, chosen by a seeded shuffle
    LabelField labels = LabelField::Label;
};

/// Dataset rows for one task. FoodNet and the regression see only the touching
/// windows of the approach onto the item.
/// `source`, when given, receives the index into `rows` of every sample.
classify::Dataset task_dataset(const std::vector<sim::DatasetRow>& rows, Task task, const signals::FeatureMask& mask,
                               const TrainSettings& settings, std::uint64_t seed,
                               std::vector<std::size_t>* source = nullptr);

struct TaskRun {
    Task task;
    signals::FeatureMask mask;
    classify::Dataset data;
    std::vector<std::size_t> source;  // dataset row of each sample
    classify::TrainResult result;
};

TaskRun train_task(const std::vector<sim::DatasetRow>& rows, Task task, const signals::FeatureMask& mask,
                   const TrainSettings& settings, std::uint64_t seed);

/// Trains the requested tasks, in parallel when jobs > 1; results keep `tasks` order.
std::vector<TaskRun> train_tasks(const std::vector<sim::DatasetRow>& rows, const std::vector<Task>& tasks,
                                 const signals::FeatureMask& mask, const TrainSettings& settings,
                                 std::uint64_t seed, std::size_t jobs);

/// A per-skill network against the six-way network on the same held-out windows.
/// Six-way predictions outside the subset count as an extra "other" class.
struct SubsetComparison {
    Task task;
    std::size_t windows = 0;
    double subset_f1 = 0.0;
    double six_way_f1 = 0.0;
};

SubsetComparison compare_subset(const TaskRun& subset, const TaskRun& six_way);

/// Weighted F1 of a classifier against ground truth events on its held-out split.
double truth_f1(const TaskRun& run, const std::vector<sim::DatasetRow>& rows);

// Ablation over input features --------------------------------------------------

struct AblationEntry {
    std::string name;  // row label
    std::string mask;  // FeatureMask::parse text
};

/// The thirteen input configurations, combined features first.
const std::vector<AblationEntry>& ablation_masks();

struct AblationRow {
    std::string name;
    std::string mask;
    std::size_t features = 0;
    double event_f1 = 0.0;
    double material_f1 = 0.0;
};

std::vector<AblationRow> run_ablation(const std::vector<sim::DatasetRow>& rows, const TrainSettings& settings,
                                      std::uint64_t seed, std::size_t jobs,
                                      const std::vector<AblationEntry>& masks = ablation_masks());
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

// Reports ---------------------------------------------------------------------------

void write_confusion_csv(std::ostream& out, const classify::EvalReport& report);

/// Labeler labels against ground truth over dataset rows.
struct LabelReport {
    std::size_t windows = 0;
    double agreement = 0.0;
    classify::EvalReport confusion;  // truth rows, labeler columns
};

LabelReport label_report(const std::vector<sim::DatasetRow>& rows);
nlohmann::json to_json(const LabelReport& r);

nlohmann::json dataset_summary(const std::vector<sim::DatasetRow>& rows);

// Run configuration -----------------------------------------------------------------

struct BenchSettings {
    std::size_t trials = 5;
    std::size_t slices = 3;
    double max_hardness = 0.5;
    double fixed_x = 0.02;
    double fixed_z = 0.01;
};

struct RunConfig {
    std::uint64_t seed = 7;
    std::optional<std::filesystem::path> materials;  // default library when unset
    sim::DatasetRecipe recipe = [] {
        sim::DatasetRecipe r;
        r.use_labeler = true;  // train on changepoint labels
        return r;
    }();
    sim::SimConfig sim;
    seq::SequencerConfig sequencer;
    TrainSettings train;
    BenchSettings bench;
    std::size_t demos = 10;

    /// Applies the keys of a JSON object; unknown keys throw ConfigError.
    void apply(const nlohmann::json& j);
    static RunConfig from_file(const std::filesystem::path& path);
};

nlohmann::json to_json(const RunConfig& c);
/// SHA-256 of the canonical JSON of the configuration.
std::string config_digest(const RunConfig& c);

std::vector<sim::MaterialSpec> load_run_materials(const RunConfig& c);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Failure inside a named stage of a multi-stage run.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct ReproduceResult {
    std::filesystem::path manifest;
    nlohmann::json manifest_json;
    std::vector<std::pair<std::string, double>> stage_seconds;  // wall time, not part of the manifest
};

/// Data generation, labeling, training, evaluation, ablation, DMP fitting and the
/// policy comparison, written under `out`. `log` receives progress lines.
ReproduceResult reproduce(const RunConfig& config, const std::filesystem::path& out, std::size_t jobs,
                          std::ostream* log = nullptr);

/// Writes `manifest.json` listing every other file below `dir` with its hash.
nlohmann::json write_manifest(const std::filesystem::path& dir, const RunConfig& config,
                              const std::vector<std::string>& stages);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace slicekit::pipeline
