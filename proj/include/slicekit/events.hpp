#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace slicekit {

/// Contact events monitored while cutting.
enum class Event { InAir = 0, HittingBoard, HittingObject, ScrapingObject, SlicingObject, ScrapingBoard };

inline constexpr std::size_t kEventCount = 6;

inline constexpr std::array<Event, kEventCount> kAllEvents{Event::InAir,          Event::HittingBoard,
                                                           Event::HittingObject,  Event::ScrapingObject,
                                                           Event::SlicingObject,  Event::ScrapingBoard};

inline std::string_view event_name(Event e) {
    switch (e) {
        case Event::InAir: return "in air";
        case Event::HittingBoard: return "hitting cutting board";
        case Event::HittingObject: return "hitting object";
        case Event::ScrapingObject: return "scraping object";
        case Event::SlicingObject: return "slicing object";
        case Event::ScrapingBoard: return "scraping cutting board";
    }
    return "unknown";
}

inline std::optional<Event> event_from_name(std::string_view name) {
    for (const Event e : kAllEvents) {
        if (event_name(e) == name) {
            return e;
        }
    }
    return std::nullopt;
}

}  // namespace slicekit
