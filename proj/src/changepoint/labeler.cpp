#include "slicekit/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace slicekit::changepoint {

const char* source_name(LabelSource s) {
    switch (s) {
        case LabelSource::Changepoint: return "changepoint";
        case LabelSource::ForceThreshold: return "force-threshold";
        case LabelSource::SkillContext: return "skill-context";
    }
    return "unknown";
}

double window_observation(const signals::SensorWindow& window) {
    return std::log(std::max(signals::rms(window.vibration[signals::KnifeMic]), 1e-12));
}

namespace {

void check_timeline(std::span<const SkillSpan> timeline, std::size_t n) {
    if (timeline.empty()) {
        throw std::invalid_argument("label_episode: missing skill timeline");
    }
    std::size_t cursor = 0;
    for (const SkillSpan& s : timeline) {
        if (s.start != cursor || s.end <= s.start) {
            throw std::invalid_argument("label_episode: skill timeline must partition the episode (gap or overlap at '" +
                                        s.skill + "')");
        }
        if (s.kind == SkillKind::Approach && s.contact_label.empty()) {
            throw std::invalid_argument("label_episode: approach skill '" + s.skill + "' has no contact label");
        }
        cursor = s.end;
    }
    if (cursor != n) {
        throw std::invalid_argument("label_episode: skill timeline does not cover every window");
    }
}

bool window_force_trigger(std::span<const signals::SensorWindow> windows, std::size_t w, signals::ForceAxis axis,
                          double threshold) {
    std::vector<double> trace;
    trace.reserve(signals::kForceSamples + 1);
    if (w > 0) {
        trace.push_back(windows[w - 1].forces.back()[axis]);
    }
    for (const auto& s : windows[w].forces) {
        trace.push_back(s[axis]);
    }
    return force_gradient_trigger(trace, threshold);
}

}  // namespace

LabelResult label_episode(std::span<const signals::SensorWindow> windows, std::span<const SkillSpan> timeline,
                          const LabelerConfig& config) {
    check_timeline(timeline, windows.size());
    LabelResult result;
    for (const SkillSpan& span : timeline) {
        if (span.kind == SkillKind::ConstantContact) {
            result.segments.push_back({span.start, span.end, span.contact_label, LabelSource::SkillContext, span.skill});
            continue;
        }

        NigPrior prior{window_observation(windows[span.start]), config.prior_kappa, config.prior_alpha,
                       config.prior_beta};
        BocdState bocd(prior, config.hazard);
        std::vector<std::size_t> changepoints;
        std::vector<std::size_t> force_hits;
        for (std::size_t w = span.start; w < span.end; ++w) {
            const auto step = bocd.update(window_observation(windows[w]));
            if (step.reset) {
                changepoints.push_back(span.start + step.changepoint);
            }
            if (window_force_trigger(windows, w, span.motion_axis, config.force_threshold)) {
                force_hits.push_back(w);
            }
        }

        // Earliest coincidence of a sound change and a force change.
        std::optional<std::size_t> boundary;
        LabelSource source = LabelSource::Changepoint;
        std::size_t confirmed = std::numeric_limits<std::size_t>::max();
        for (const std::size_t cp : changepoints) {
            for (const std::size_t f : force_hits) {
                const std::size_t gap = cp > f ? cp - f : f - cp;
                if (gap > config.coincidence) {
                    continue;
                }
                const std::size_t at = std::max(cp, f);
                if (at < confirmed) {
                    confirmed = at;
                    boundary = std::min(cp, f);
                    source = cp <= f ? LabelSource::Changepoint : LabelSource::ForceThreshold;
                }
            }
        }

        if (!boundary) {
            result.warnings.push_back("no joint sound/force change detected in skill '" + span.skill + "' (windows " +
                                      std::to_string(span.start) + "-" + std::to_string(span.end) +
                                      "); labeled as '" + span.pre_contact_label + "'");
            result.segments.push_back(
                {span.start, span.end, span.pre_contact_label, LabelSource::SkillContext, span.skill});
            continue;
        }
        const std::size_t b = std::clamp(*boundary, span.start, span.end);
        if (b > span.start) {
            result.segments.push_back({span.start, b, span.pre_contact_label, LabelSource::SkillContext, span.skill});
        }
        if (b < span.end) {
            result.segments.push_back({b, span.end, span.contact_label, source, span.skill});
        }
    }
    return result;
}

std::vector<std::string> expand(std::span<const SegmentLabel> segments, std::size_t n_windows) {
    std::vector<std::string> out(n_windows);
    std::vector<bool> seen(n_windows, false);
    for (const SegmentLabel& s : segments) {
        if (s.end > n_windows || s.end <= s.start) {
            throw std::invalid_argument("expand: segment out of range");
        }
        for (std::size_t i = s.start; i < s.end; ++i) {
            if (seen[i]) {
                throw std::invalid_argument("expand: overlapping segments");
            }
            seen[i] = true;
            out[i] = s.label;
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw std::invalid_argument("expand: segments leave a gap");
    }
    return out;
}

nlohmann::json to_json(const SegmentLabel& s) {
    return {{"start", s.start}, {"end", s.end}, {"label", s.label}, {"source", source_name(s.source)},
            {"skill", s.skill}};
}

}  // namespace slicekit::changepoint
