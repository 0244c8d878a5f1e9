#include "slicekit/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <thread>

namespace slicekit::pipeline {

namespace {

const std::string kApproach = "move_down_onto_object";

const std::string& class_of(const sim::DatasetRow& r, Task task, LabelField field) {
    if (task == Task::FoodNet || task == Task::Regression) {
        return r.material;
    }
    return field == LabelField::Label ? r.label : r.truth;
}

bool wanted(const sim::DatasetRow& r, Task task, LabelField field) {
    if (task == Task::FoodNet || task == Task::Regression) {
        const std::string& event = field == LabelField::Label ? r.label : r.truth;
        return r.skill == kApproach && event != event_name(Event::InAir);
    }
    return true;
}

classify::TrainConfig train_config(const TrainSettings& s, std::uint64_t seed) {
    classify::TrainConfig c;
    c.epochs = s.epochs;
    c.batch_size = s.batch_size;
    c.lr = s.lr;
    c.test_fraction = s.test_fraction;
    c.seed = seed;
    return c;
}

template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n);
    for (std::size_t t = 0; t < jobs; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += jobs) {
                try {
                    body(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace

const std::vector<Task>& all_tasks() {
    static const std::vector<Task> t{Task::SliceNet, Task::Hitting, Task::Slicing, Task::FoodNet, Task::Regression};
    return t;
}

const char* task_name(Task t) {
    switch (t) {
        case Task::SliceNet: return "slicenet";
        case Task::Hitting: return "hitting";
        case Task::Slicing: return "slicing";
        case Task::FoodNet: return "foodnet";
        case Task::Regression: return "regress";
    }
    return "?";
}

Task task_from_name(const std::string& name) {
    for (const Task t : all_tasks()) {
        if (name == task_name(t)) {
            return t;
        }
    }
    throw ConfigError("unknown task '" + name + "' (expected slicenet, hitting, slicing, foodnet or regress)");
}

std::string model_file(Task t) { return std::string(task_name(t)) + ".json"; }

std::vector<std::string> task_events(Task t) {
    auto names = [](std::initializer_list<Event> events) {
        std::vector<std::string> out;
        for (const Event e : events) {
            out.emplace_back(event_name(e));
        }
        return out;
    };
    switch (t) {
        case Task::Hitting: return names({Event::InAir, Event::HittingBoard, Event::HittingObject});
        case Task::Slicing:
            return names({Event::SlicingObject, Event::ScrapingObject, Event::HittingBoard, Event::ScrapingBoard});
        default: return {};
    }
}

classify::Dataset task_dataset(const std::vector<sim::DatasetRow>& rows, Task task, const signals::FeatureMask& mask,
                               const TrainSettings& settings, std::uint64_t seed, std::vector<std::size_t>* source) {
    if (task == Task::Hitting || task == Task::Slicing) {
        // Same windows and split as the six-way network, restricted to the skill's events.
        std::vector<std::size_t> all;
        const classify::Dataset six = task_dataset(rows, Task::SliceNet, mask, settings, seed, &all);
        const auto events = task_events(task);
        if (source != nullptr) {
            source->clear();
            for (std::size_t i = 0; i < six.size(); ++i) {
                const auto& name = six.classes[static_cast<std::size_t>(six.labels[i])];
                if (std::find(events.begin(), events.end(), name) != events.end()) {
                    source->push_back(all[i]);
                }
            }
        }
        return six.restrict_classes(events);
    }
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (wanted(rows[i], task, settings.labels)) {
            by_class[class_of(rows[i], task, settings.labels)].push_back(i);
        }
    }
    if (by_class.empty()) {
        throw std::invalid_argument(std::string("no dataset rows for task ") + task_name(task));
    }
    std::vector<char> keep(rows.size(), 0);
    classify::Dataset d;
    for (auto& [name, idx] : by_class) {
        d.classes.push_back(name);
        if (settings.cap_per_class > 0 && idx.size() > settings.cap_per_class) {
            Rng rng(derive_seed(seed, "cap:" + name));
            for (std::size_t i = idx.size(); i > 1; --i) {
                std::swap(idx[i - 1], idx[rng.index(i)]);
            }
            idx.resize(settings.cap_per_class);
        }
        for (const std::size_t i : idx) {
            keep[i] = 1;
        }
    }
    const auto cols = mask.indices();
    if (cols.empty()) {
        throw ConfigError("feature mask '" + mask.to_string() + "' selects no features");
    }
    const auto n = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1));
    d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
    const bool regression = task == Task::Regression;
    if (regression) {
        d.targets.resize(static_cast<Eigen::Index>(n), 2);
        d.target_names = {"phi_x", "phi_z"};
    }
    if (source != nullptr) {
        source->clear();
    }
    std::size_t r = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!keep[i]) {
            continue;
        }
        const auto& row = rows[i];
        if (row.features.size() != signals::FeatureMask::full().length()) {
            throw std::invalid_argument("dataset row " + std::to_string(row.window_id) +
                                        " does not hold the full feature layout");
        }
        for (std::size_t c = 0; c < cols.size(); ++c) {
            d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row.features[cols[c]];
        }
        const std::string& name = class_of(row, task, settings.labels);
        d.labels.push_back(static_cast<int>(std::find(d.classes.begin(), d.classes.end(), name) - d.classes.begin()));
        if (regression) {
            d.targets(static_cast<Eigen::Index>(r), 0) = row.phi_x;
            d.targets(static_cast<Eigen::Index>(r), 1) = row.phi_z;
        }
        if (source != nullptr) {
            source->push_back(i);
        }
        ++r;
    }
    return d;
}

TaskRun train_task(const std::vector<sim::DatasetRow>& rows, Task task, const signals::FeatureMask& mask,
                   const TrainSettings& settings, std::uint64_t seed) {
    TaskRun run{task, mask, {}, {}, {}};
    run.data = task_dataset(rows, task, mask, settings, seed, &run.source);
    classify::MlpSpec spec;
    spec.head = task == Task::Regression ? classify::Head::Regression : classify::Head::Softmax;
    run.result = classify::train(run.data, spec, train_config(settings, seed));
    run.result.model.feature_mask = mask == signals::FeatureMask::full() ? "full" : mask.to_string();
    return run;
}

std::vector<TaskRun> train_tasks(const std::vector<sim::DatasetRow>& rows, const std::vector<Task>& tasks,
                                 const signals::FeatureMask& mask, const TrainSettings& settings,
                                 std::uint64_t seed, std::size_t jobs) {
    std::vector<std::optional<TaskRun>> out(tasks.size());
    parallel_for(tasks.size(), jobs, [&](std::size_t i) { out[i] = train_task(rows, tasks[i], mask, settings, seed); });
    std::vector<TaskRun> runs;
    for (auto& r : out) {
        runs.push_back(std::move(*r));
    }
    return runs;
}

SubsetComparison compare_subset(const TaskRun& subset, const TaskRun& six_way) {
    if (six_way.task != Task::SliceNet || (subset.task != Task::Hitting && subset.task != Task::Slicing)) {
        throw std::invalid_argument("compare_subset: needs a per-skill run and the six-way run");
    }
    SubsetComparison c;
    c.task = subset.task;
    c.subset_f1 = subset.result.report.weighted_f1;

    const auto& test = subset.result.split.test;
    c.windows = test.size();
    const classify::Dataset held = subset.data.subset(test);
    const auto predicted = classify::predict_classes(six_way.result.model, held.x);
    std::vector<std::string> labels = subset.data.classes;
    labels.emplace_back("other");
    const std::size_t k = labels.size();
    std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < held.size(); ++i) {
        const std::string& name = six_way.result.model.labels[static_cast<std::size_t>(predicted[i])];
        const auto it = std::find(labels.begin(), labels.end() - 1, name);
        const auto col = static_cast<std::size_t>(it - labels.begin());
        ++confusion[static_cast<std::size_t>(held.labels[i])][col];
    }
    c.six_way_f1 = classify::report_from_confusion(labels, confusion).weighted_f1;
    return c;
}

double truth_f1(const TaskRun& run, const std::vector<sim::DatasetRow>& rows) {
    if (run.task == Task::FoodNet || run.task == Task::Regression) {
        return run.result.report.weighted_f1;
    }
    std::vector<std::string> labels;
    for (const Event e : kAllEvents) {
        labels.emplace_back(event_name(e));
    }
    auto index_of = [&](const std::string& s) {
        return static_cast<std::size_t>(std::find(labels.begin(), labels.end(), s) - labels.begin());
    };
    const auto& test = run.result.split.test;
    const classify::Dataset held = run.data.subset(test);
    const auto predicted = classify::predict_classes(run.result.model, held.x);
    std::vector<std::vector<std::size_t>> confusion(labels.size(), std::vector<std::size_t>(labels.size(), 0));
    for (std::size_t i = 0; i < test.size(); ++i) {
        const std::string& truth = rows[run.source[test[i]]].truth;
        const std::string& pred = run.result.model.labels[static_cast<std::size_t>(predicted[i])];
        ++confusion[index_of(truth)][index_of(pred)];
    }
    return classify::report_from_confusion(labels, confusion).weighted_f1;
}

const std::vector<AblationEntry>& ablation_masks() {
    static const std::vector<AblationEntry> m{
        {"combined sound and force", "full"},
        {"forces", "forces"},
        {"sound", "sound"},
        {"board mic 1", "mic1"},
        {"board mic 2", "mic2"},
        {"knife mic", "mic3"},
        {"tong mic", "mic4"},
        {"mfcc", "mfcc"},
        {"chroma", "chroma"},
        {"mel", "mel"},
        {"spectral contrast", "contrast"},
        {"tonnetz", "tonnetz"},
        {"mfcc and forces", "mfcc+forces"},
    };
    return m;
}

std::vector<AblationRow> run_ablation(const std::vector<sim::DatasetRow>& rows, const TrainSettings& settings,
                                      std::uint64_t seed, std::size_t jobs,
                                      const std::vector<AblationEntry>& masks) {
    std::vector<AblationRow> out(masks.size());
    std::vector<signals::FeatureMask> parsed;
    for (const auto& m : masks) {
        parsed.push_back(signals::FeatureMask::parse(m.mask));
        if (parsed.back().length() == 0) {
            throw ConfigError("ablation mask '" + m.mask + "' selects no features");
        }
    }
    parallel_for(masks.size() * 2, jobs, [&](std::size_t i) {
        const std::size_t m = i / 2;
        const Task task = i % 2 == 0 ? Task::SliceNet : Task::FoodNet;
        const TaskRun run = train_task(rows, task, parsed[m], settings, seed);
        AblationRow& row = out[m];
        (task == Task::SliceNet ? row.event_f1 : row.material_f1) = run.result.report.weighted_f1;
    });
    for (std::size_t m = 0; m < masks.size(); ++m) {
        out[m].name = masks[m].name;
        out[m].mask = masks[m].mask;
        out[m].features = parsed[m].length();
    }
    return out;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "inputs,mask,features,slicenet_f1,foodnet_f1\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.4f,%.4f\n", r.name.c_str(), r.mask.c_str(), r.features,
                      r.event_f1, r.material_f1);
        out << buf;
    }
}

void write_confusion_csv(std::ostream& out, const classify::EvalReport& report) {
    out << "truth\\predicted";
    for (const auto& l : report.labels) {
        out << ',' << l;
    }
    out << '\n';
    for (std::size_t i = 0; i < report.confusion.size(); ++i) {
        out << report.labels[i];
        for (const std::size_t v : report.confusion[i]) {
            out << ',' << v;
        }
        out << '\n';
    }
}

LabelReport label_report(const std::vector<sim::DatasetRow>& rows) {
    std::vector<std::string> labels;
    for (const Event e : kAllEvents) {
        labels.emplace_back(event_name(e));
    }
    auto index_of = [&](const std::string& s) {
        const auto it = std::find(labels.begin(), labels.end(), s);
        if (it == labels.end()) {
            throw std::invalid_argument("unknown event label '" + s + "'");
        }
        return static_cast<std::size_t>(it - labels.begin());
    };
    std::vector<std::vector<std::size_t>> confusion(labels.size(), std::vector<std::size_t>(labels.size(), 0));
    std::size_t agree = 0;
    for (const auto& r : rows) {
        ++confusion[index_of(r.truth)][index_of(r.label)];
        agree += r.truth == r.label;
    }
    LabelReport rep;
    rep.windows = rows.size();
    rep.agreement = rows.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(rows.size());
    rep.confusion = classify::report_from_confusion(labels, confusion);
    return rep;
}

nlohmann::json to_json(const LabelReport& r) {
    return {{"windows", r.windows}, {"agreement", r.agreement}, {"per_event", classify::to_json(r.confusion)}};
}

nlohmann::json dataset_summary(const std::vector<sim::DatasetRow>& rows) {
    std::map<std::string, std::size_t> truth, label, material, skill;
    std::map<std::size_t, int> episodes;
    for (const auto& r : rows) {
        ++truth[r.truth];
        ++label[r.label];
        ++material[r.material];
        ++skill[r.skill];
        episodes[r.episode_id] = 1;
    }
    return {{"windows", rows.size()}, {"episodes", episodes.size()}, {"truth", truth},
            {"label", label},         {"material", material},        {"skill", skill}};
}

}  // namespace slicekit::pipeline
