#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evcnn {

/// Timestamps are microseconds.
using Timestamp = std::uint64_t;

struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    Timestamp ts = 0;
    std::int8_t polarity = 1;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Events sorted by non-decreasing timestamp, all inside the sensor.
struct EventStream {
    int width = 0;
    int height = 0;
    std::vector<Event> events;

    friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Events with window_start <= ts < window_end, in stream order.
struct EventBatch {
    Timestamp window_start = 0;
    Timestamp window_end = 0;
    std::vector<Event> events;

    Timestamp length() const { return window_end - window_start; }
};

enum class StreamFormat { text, binary };

/// Parses a stream. Throws MalformedRecord, NonMonotoneTimestamp or
/// CoordinateOutOfBounds.
EventStream read_stream(std::span<const std::uint8_t> source, StreamFormat format);
EventStream read_stream(const std::string& source, StreamFormat format);

/// Picks the format from the leading magic bytes.
StreamFormat detect_format(std::span<const std::uint8_t> source);

std::vector<std::uint8_t> write_stream(const EventStream& stream, StreamFormat format);

EventStream load_stream(const std::string& path);
void save_stream(const EventStream& stream, const std::string& path, StreamFormat format);

/// Checks ordering and bounds; throws the same errors as read_stream.
void validate(const EventStream& stream);

/// Splits the stream into consecutive half-open windows of `window` microseconds
/// anchored at the first timestamp. Empty windows between events are kept.
std::vector<EventBatch> window_events(const EventStream& stream, Timestamp window);

/// Same, anchored at `origin`; with `end` the windows continue until one
/// reaches it. Throws ZeroWindow, TimestampRegression for events before `origin`.
std::vector<EventBatch> window_events(const EventStream& stream, Timestamp window, Timestamp origin,
                                      std::optional<Timestamp> end = std::nullopt);

}  // namespace evcnn
