#include "evcnn/event.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string_view>

#include "evcnn/errors.hpp"

namespace evcnn {
namespace {

constexpr char kTextMagic[] = "EVT";
constexpr char kBinaryMagic[] = "EVT1";
constexpr std::size_t kBinaryHeader = 8;
constexpr std::size_t kBinaryRecord = 13;

void check_event(const Event& e, int width, int height, Timestamp prev_ts, bool has_prev,
                 std::size_t position) {
    if (e.x >= width || e.y >= height) {
        throw CoordinateOutOfBounds("event (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                                    ") outside " + std::to_string(width) + "x" +
                                    std::to_string(height) + " sensor at record " +
                                    std::to_string(position));
    }
    if (has_prev && e.ts < prev_ts) {
        throw NonMonotoneTimestamp("timestamp " + std::to_string(e.ts) + " precedes " +
                                   std::to_string(prev_ts) + " at record " +
                                   std::to_string(position));
    }
}

template <typename T>
bool parse_field(std::string_view field, T& out) {
    if (field.empty()) return false;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
    return ec == std::errc() && ptr == field.data() + field.size();
}

EventStream read_text(std::string_view text) {
    EventStream stream;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    Timestamp prev_ts = 0;

    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;

        if (!header_seen) {
            // EVT width height
            if (line.substr(0, 4) != "EVT ") throw MalformedRecord("missing EVT header", line_no);
            std::string_view rest = line.substr(4);
            std::size_t sp = rest.find(' ');
            if (sp == std::string_view::npos) throw MalformedRecord("bad header", line_no);
            int w = 0, h = 0;
            if (!parse_field(rest.substr(0, sp), w) || !parse_field(rest.substr(sp + 1), h) ||
                w <= 0 || h <= 0 || w > 65535 || h > 65535) {
                throw MalformedRecord("bad sensor dimensions", line_no);
            }
            stream.width = w;
            stream.height = h;
            header_seen = true;
            continue;
        }
        if (line.empty() && pos >= text.size()) break;  // trailing newline

        std::string_view fields[4];
        std::size_t start = 0;
        for (int i = 0; i < 4; ++i) {
            std::size_t comma = i < 3 ? line.find(',', start) : line.size();
            if (comma == std::string_view::npos) throw MalformedRecord("expected ts,x,y,p", line_no);
            fields[i] = line.substr(start, comma - start);
            start = comma + 1;
        }
        Event e;
        int pol = 0;
        unsigned x = 0, y = 0;
        if (!parse_field(fields[0], e.ts) || !parse_field(fields[1], x) ||
            !parse_field(fields[2], y) || !parse_field(fields[3], pol)) {
            throw MalformedRecord("unparsable event record", line_no);
        }
        if (pol != 1 && pol != -1) throw MalformedRecord("polarity must be 1 or -1", line_no);
        if (x > 65535 || y > 65535) {
            throw CoordinateOutOfBounds("coordinate overflow at line " + std::to_string(line_no));
        }
        e.x = static_cast<std::uint16_t>(x);
        e.y = static_cast<std::uint16_t>(y);
        e.polarity = static_cast<std::int8_t>(pol);
        check_event(e, stream.width, stream.height, prev_ts, !stream.events.empty(), line_no);
        prev_ts = e.ts;
        stream.events.push_back(e);
    }
    if (!header_seen) throw MalformedRecord("empty input", 0);
    return stream;
}

std::uint64_t load_le(const std::uint8_t* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void store_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

EventStream read_binary(std::span<const std::uint8_t> data) {
    if (data.size() < kBinaryHeader || std::memcmp(data.data(), kBinaryMagic, 4) != 0) {
        throw MalformedRecord("missing EVT1 header", 0);
    }
    EventStream stream;
    stream.width = static_cast<int>(load_le(data.data() + 4, 2));
    stream.height = static_cast<int>(load_le(data.data() + 6, 2));
    if (stream.width == 0 || stream.height == 0) throw MalformedRecord("zero sensor dimension", 4);

    std::size_t body = data.size() - kBinaryHeader;
    if (body % kBinaryRecord != 0) {
        throw MalformedRecord("truncated record", kBinaryHeader + body / kBinaryRecord * kBinaryRecord);
    }
    stream.events.reserve(body / kBinaryRecord);
    Timestamp prev_ts = 0;
    for (std::size_t off = kBinaryHeader; off < data.size(); off += kBinaryRecord) {
        const std::uint8_t* p = data.data() + off;
        Event e;
        e.ts = load_le(p, 8);
        e.x = static_cast<std::uint16_t>(load_le(p + 8, 2));
        e.y = static_cast<std::uint16_t>(load_le(p + 10, 2));
        e.polarity = static_cast<std::int8_t>(p[12]);
        if (e.polarity != 1 && e.polarity != -1) {
            throw MalformedRecord("polarity must be +1 or -1", off + 12);
        }
        check_event(e, stream.width, stream.height, prev_ts, !stream.events.empty(), off);
        prev_ts = e.ts;
        stream.events.push_back(e);
    }
    return stream;
}

}  // namespace

StreamFormat detect_format(std::span<const std::uint8_t> source) {
    if (source.size() >= 4 && std::memcmp(source.data(), kBinaryMagic, 4) == 0) {
        return StreamFormat::binary;
    }
    return StreamFormat::text;
}

EventStream read_stream(std::span<const std::uint8_t> source, StreamFormat format) {
    if (format == StreamFormat::binary) return read_binary(source);
    return read_text(std::string_view(reinterpret_cast<const char*>(source.data()), source.size()));
}

EventStream read_stream(const std::string& source, StreamFormat format) {
    return read_stream(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(source.data()),
                                      source.size()),
        format);
}

std::vector<std::uint8_t> write_stream(const EventStream& stream, StreamFormat format) {
    std::vector<std::uint8_t> out;
    if (format == StreamFormat::binary) {
        out.reserve(kBinaryHeader + kBinaryRecord * stream.events.size());
        out.insert(out.end(), kBinaryMagic, kBinaryMagic + 4);
        store_le(out, static_cast<std::uint64_t>(stream.width), 2);
        store_le(out, static_cast<std::uint64_t>(stream.height), 2);
        for (const Event& e : stream.events) {
            store_le(out, e.ts, 8);
            store_le(out, e.x, 2);
            store_le(out, e.y, 2);
            out.push_back(static_cast<std::uint8_t>(e.polarity));
        }
        return out;
    }
    std::string text = std::string(kTextMagic) + " " + std::to_string(stream.width) + " " +
                       std::to_string(stream.height) + "\n";
    for (const Event& e : stream.events) {
        text += std::to_string(e.ts);
        text += ',';
        text += std::to_string(e.x);
        text += ',';
        text += std::to_string(e.y);
        text += e.polarity > 0 ? ",1\n" : ",-1\n";
    }
    out.assign(text.begin(), text.end());
    return out;
}

EventStream load_stream(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open stream file " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return read_stream(bytes, detect_format(bytes));
}

void save_stream(const EventStream& stream, const std::string& path, StreamFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write stream file " + path);
    auto bytes = write_stream(stream, format);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path);
}

void validate(const EventStream& stream) {
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
        check_event(stream.events[i], stream.width, stream.height,
                    i ? stream.events[i - 1].ts : 0, i > 0, i);
        if (stream.events[i].polarity != 1 && stream.events[i].polarity != -1) {
            throw MalformedRecord("polarity must be +1 or -1", i);
        }
    }
}

std::vector<EventBatch> window_events(const EventStream& stream, Timestamp window) {
    if (window == 0) throw ZeroWindow();
    if (stream.events.empty()) return {};
    return window_events(stream, window, stream.events.front().ts);
}

std::vector<EventBatch> window_events(const EventStream& stream, Timestamp window, Timestamp origin,
                                      std::optional<Timestamp> end) {
    if (window == 0) throw ZeroWindow();
    std::vector<EventBatch> batches;
    if (stream.events.empty() && !end) return batches;
    if (!stream.events.empty() && stream.events.front().ts < origin) {
        throw TimestampRegression("event at " + std::to_string(stream.events.front().ts) +
                                  " precedes window origin " + std::to_string(origin));
    }

    EventBatch current{origin, origin + window, {}};
    auto close = [&] {
        Timestamp next = current.window_end;
        batches.push_back(std::move(current));
        current = EventBatch{next, next + window, {}};
    };
    for (const Event& e : stream.events) {
        while (e.ts >= current.window_end) close();
        current.events.push_back(e);
    }
    if (end) {
        while (current.window_end < *end) close();
    }
    batches.push_back(std::move(current));
    return batches;
}

}  // namespace evcnn
