#pragma once

#include "slicekit/signals.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace slicekit::changepoint {

/// Normal-Inverse-Gamma prior on (mean, variance) of the observations.
struct NigPrior {
    double mu0 = 0.0;
    double kappa0 = 0.01;
    double alpha0 = 10.0;
    double beta0 = 0.1;

    void validate() const;
};

/// Run-length filter with a Gaussian observation model and constant hazard.
///
/// After update i (0-based), run length r > 0 means the current run holds
/// the last r observations; r = 0 is the hypothesis that a new run starts
/// with the next observation.
class BocdState {
public:
    BocdState(NigPrior prior, double hazard, double prune_below = 1e-8);

    struct Step {
        std::size_t map_run_length = 0;
        bool reset = false;              // MAP run length dropped relative to the previous step
        std::size_t changepoint = 0;     // index of the first observation of the MAP run
    };

    Step update(double obs);

    /// Dense posterior over run lengths 0..max; pruned entries are 0.
    std::vector<double> posterior() const;
    std::size_t map_run_length() const { return map_; }
    std::size_t observations() const { return count_; }
    std::size_t hypotheses() const { return runs_.size(); }
    double hazard() const { return hazard_; }

private:
    struct Run {
        std::size_t length;
        double prob;
        double mu, kappa, alpha, beta;
    };
    NigPrior prior_;
    double hazard_;
    double prune_;
    std::vector<Run> runs_;
    std::size_t map_ = 0;
    std::size_t count_ = 0;
};

/// Student-t predictive density of the NIG posterior.
double student_t_predictive(double x, double mu, double kappa, double alpha, double beta);

/// True iff some consecutive difference exceeds `threshold` in magnitude.
bool force_gradient_trigger(std::span<const double> trace, double threshold);

enum class SkillKind { Approach, ConstantContact };

/// Time range of one executed skill, in window indices [start, end).
struct SkillSpan {
    std::string skill;
    std::size_t start = 0;
    std::size_t end = 0;
    SkillKind kind = SkillKind::Approach;
    std::string pre_contact_label = "in air";
    std::string contact_label;
    signals::ForceAxis motion_axis = signals::Fz;
};

enum class LabelSource { Changepoint, ForceThreshold, SkillContext };
const char* source_name(LabelSource s);

struct SegmentLabel {
    std::size_t start = 0;
    std::size_t end = 0;
    std::string label;
    LabelSource source = LabelSource::SkillContext;
    std::string skill;
};

struct LabelerConfig {
    double hazard = 1.0 / 200.0;
    double force_threshold = 2.0;  // N per sample
    std::size_t coincidence = 3;   // windows
    // Prior centered on the first window's observation: vague on the mean,
    // noise scale around 0.05 in log-RMS units.
    double prior_kappa = 0.01;
    double prior_alpha = 10.0;
    double prior_beta = 0.025;
};

struct LabelResult {
    std::vector<SegmentLabel> segments;
    std::vector<std::string> warnings;
};

/// BOCD observation for a window: log RMS of the knife microphone.
double window_observation(const signals::SensorWindow& window);

/// Labels windows from sound and force change detection within each skill.
/// The timeline must partition [0, windows.size()).
LabelResult label_episode(std::span<const signals::SensorWindow> windows, std::span<const SkillSpan> timeline,
                          const LabelerConfig& config = {});

/// Per-window labels expanded from segments.
std::vector<std::string> expand(std::span<const SegmentLabel> segments, std::size_t n_windows);

nlohmann::json to_json(const SegmentLabel& s);

}  // namespace slicekit::changepoint
