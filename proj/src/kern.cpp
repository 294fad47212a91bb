// SPDX-License-Identifier: Apache-2.0
#include "polyscore/kern.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string_view>

namespace polyscore::kern {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::unparseable_token: return "UnparseableToken";
        case ErrorKind::inconsistent_spine_count: return "InconsistentSpineCount";
        case ErrorKind::unsupported_construct: return "UnsupportedConstruct";
        case ErrorKind::too_many_parts: return "TooManyParts";
        case ErrorKind::rhythm_error: return "RhythmError";
        case ErrorKind::no_kern_spine: return "NoKernSpine";
        case ErrorKind::unrepresentable_duration: return "UnrepresentableDuration";
    }
    return "KernError";
}

namespace {

std::string describe(ErrorKind kind, std::size_t line, std::size_t column, const std::string& token,
                     const std::string& detail) {
    std::ostringstream os;
    os << to_string(kind);
    if (line > 0) os << " at line " << line;
    if (line > 0 && column > 0) os << ", column " << column;
    if (!token.empty()) os << " ('" << token << "')";
    if (!detail.empty()) os << ": " << detail;
    return os.str();
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

bool is_manipulator(const std::string& tok) {
    return tok == "*^" || tok == "*v" || tok == "*-" || tok == "*+" || tok == "*x";
}

// Signifiers with no bearing on pitch or rhythm.
constexpr std::string_view kIgnoredSignifiers = ";:/\\(){}'\"`~^LJKk<>&|yxXvuTtMmWwSs$ROoHhNPpZz@+=!,";

int letter_semitone(char lower) {
    switch (lower) {
        case 'c': return 0;
        case 'd': return 2;
        case 'e': return 4;
        case 'f': return 5;
        case 'g': return 7;
        case 'a': return 9;
        case 'b': return 11;
        default: return -1;
    }
}

}  // namespace

KernError::KernError(ErrorKind kind, std::size_t line, std::size_t column, std::string token, const std::string& detail)
    : std::runtime_error(describe(kind, line, column, token, detail)),
      kind_(kind),
      line_(line),
      column_(column),
      token_(std::move(token)) {}

std::size_t ParseReport::skipped_total() const {
    std::size_t n = 0;
    for (const auto& [c, count] : skipped_signifiers) n += count;
    return n;
}

RationalTime recip_to_beats(const std::string& recip) {
    auto pct = recip.find('%');
    RationalTime value;
    if (pct != std::string::npos) {
        std::string a = recip.substr(0, pct);
        std::string b = recip.substr(pct + 1);
        if (a.empty() || b.empty()) throw std::invalid_argument("bad rational recip: " + recip);
        std::int64_t n = std::stoll(a);
        std::int64_t d = std::stoll(b);
        if (n <= 0 || d <= 0) throw std::invalid_argument("bad rational recip: " + recip);
        value = RationalTime(n, d);
    } else {
        if (recip.empty()) throw std::invalid_argument("empty recip");
        if (std::all_of(recip.begin(), recip.end(), [](char c) { return c == '0'; })) {
            // "0" = breve, "00" = long, "000" = maxima.
            return RationalTime(std::int64_t{4} << recip.size());
        }
        value = RationalTime(std::stoll(recip));
    }
    return RationalTime(4) / value;
}

NoteToken parse_note_token(const std::string& token, ParseReport* report, bool strict) {
    NoteToken out;
    std::string recip;
    std::size_t dots = 0;
    char letter = 0;
    std::size_t letter_count = 0;
    int accidental = 0;
    bool rest = false;
    bool recip_closed = false;
    auto fail = [&](const std::string& why) { throw KernError(ErrorKind::unparseable_token, 0, 0, token, why); };

    for (std::size_t i = 0; i < token.size(); ++i) {
        char c = token[i];
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '%' && !recip.empty())) {
            if (recip_closed) fail("duration digits are not contiguous");
            recip.push_back(c);
            continue;
        }
        if (!recip.empty()) recip_closed = true;
        if (c == '.') {
            if (recip.empty()) fail("augmentation dot without duration");
            ++dots;
            continue;
        }
        char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (letter_semitone(lower) >= 0) {
            if (letter != 0 && c != letter) fail("more than one pitch name");
            if (letter != 0 && i > 0 && token[i - 1] != c) fail("pitch letters are not contiguous");
            letter = c;
            ++letter_count;
            continue;
        }
        switch (c) {
            case '#': ++accidental; continue;
            case '-': --accidental; continue;
            case 'n': continue;
            case 'r': rest = true; continue;
            case '[': out.tie_start = true; continue;
            case ']': out.tie_end = true; continue;
            case '_': out.tie_start = out.tie_end = true; continue;
            case 'q':
            case 'Q': out.grace = true; continue;
            default: break;
        }
        if (kIgnoredSignifiers.find(c) != std::string_view::npos) continue;
        if (strict) {
            throw KernError(ErrorKind::unsupported_construct, 0, 0, token, std::string("unknown signifier '") + c + "'");
        }
        if (report) ++report->skipped_signifiers[c];
    }

    if (!rest && letter == 0) fail("neither a pitch nor a rest");
    if (rest && letter != 0) {
        // "4r" carrying a display pitch ("4ee-r") is still a rest.
        letter = 0;
    }
    if (!recip.empty()) {
        try {
            RationalTime beats = recip_to_beats(recip);
            RationalTime add = beats;
            for (std::size_t d = 0; d < dots; ++d) {
                add = add / RationalTime(2);
                beats += add;
            }
            out.duration = beats;
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    } else {
        out.grace = true;
    }
    if (out.grace && rest) fail("grace rest");
    if (letter != 0) {
        char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(letter)));
        int base = letter_semitone(lower);
        int octave_shift = static_cast<int>(letter_count) - 1;
        int midi = std::islower(static_cast<unsigned char>(letter)) ? 60 + base + 12 * octave_shift
                                                                     : 48 + base - 12 * octave_shift;
        midi += accidental;
        if (midi < 0 || midi > 127) fail("pitch outside MIDI range");
        out.midi = midi;
    }
    return out;
}

// SpineTracker ----------------------------------------------------------------

SpineTracker::SpineTracker(std::vector<std::string> exclusive_interpretations, std::size_t max_parts, bool strict)
    : max_parts_(max_parts), strict_(strict) {
    for (auto& ex : exclusive_interpretations) {
        SpineColumn col{std::move(ex), -1};
        if (col.exclusive == "**kern") {
            if (track_count_ >= max_parts_) {
                throw KernError(ErrorKind::too_many_parts, 1, 0, "", "more kern spines than the part limit");
            }
            col.track = static_cast<int>(track_count_++);
            live_.push_back(true);
        }
        columns_.push_back(std::move(col));
    }
    initial_live_ = live_;
}

int SpineTracker::allocate_track(std::size_t line) {
    for (std::size_t t = 0; t < track_count_; ++t) {
        if (!live_[t]) {
            live_[t] = true;
            return static_cast<int>(t);
        }
    }
    if (track_count_ >= max_parts_) {
        throw KernError(ErrorKind::too_many_parts, line, 0, "",
                        "resolution needs more than " + std::to_string(max_parts_) + " part tracks");
    }
    live_.push_back(true);
    return static_cast<int>(track_count_++);
}

std::vector<bool> SpineTracker::live_tracks() const { return live_; }

bool SpineTracker::apply(const SpineManipulation& manip) {
    const auto& tokens = manip.tokens;
    if (tokens.size() != columns_.size()) {
        throw KernError(ErrorKind::inconsistent_spine_count, manip.line, 0, "",
                        "expected " + std::to_string(columns_.size()) + " tokens, found " + std::to_string(tokens.size()));
    }
    std::vector<SpineColumn> next;
    std::vector<Edge> edges;
    std::vector<bool> touched(track_count_ + max_parts_, false);
    bool changed = false;

    for (std::size_t i = 0; i < tokens.size();) {
        const std::string& tok = tokens[i];
        const SpineColumn& col = columns_[i];
        if (tok == "*^") {
            next.push_back(col);
            SpineColumn child = col;
            if (col.track >= 0) {
                child.track = allocate_track(manip.line);
                edges.push_back({col.track, col.track});
                edges.push_back({child.track, col.track});
                touched[static_cast<std::size_t>(col.track)] = true;
                touched[static_cast<std::size_t>(child.track)] = true;
                changed = true;
            }
            next.push_back(child);
            ++i;
        } else if (tok == "*v") {
            std::size_t j = i;
            while (j < tokens.size() && tokens[j] == "*v") ++j;
            if (j - i == 1) {
                next.push_back(col);
                ++i;
                continue;
            }
            SpineColumn merged = col;
            merged.track = -1;
            for (std::size_t k = i; k < j; ++k) {
                if (columns_[k].track >= 0) {
                    merged.track = columns_[k].track;
                    merged.exclusive = columns_[k].exclusive;
                    break;
                }
            }
            for (std::size_t k = i; k < j; ++k) {
                int t = columns_[k].track;
                if (t < 0) continue;
                edges.push_back({merged.track, t});
                touched[static_cast<std::size_t>(t)] = true;
                if (t != merged.track) {
                    live_[static_cast<std::size_t>(t)] = false;
                    changed = true;
                }
            }
            next.push_back(merged);
            i = j;
        } else if (tok == "*-") {
            if (col.track >= 0) {
                live_[static_cast<std::size_t>(col.track)] = false;
                touched[static_cast<std::size_t>(col.track)] = true;
                changed = true;
            }
            ++i;
        } else if (tok == "*+") {
            if (strict_) throw KernError(ErrorKind::unsupported_construct, manip.line, i + 1, tok, "spine addition");
            next.push_back(col);
            next.push_back(SpineColumn{"", -1});
            ++i;
        } else if (tok == "*x") {
            if (i + 1 < tokens.size() && tokens[i + 1] == "*x") {
                next.push_back(columns_[i + 1]);
                next.push_back(col);
                i += 2;
            } else {
                throw KernError(ErrorKind::unparseable_token, manip.line, i + 1, tok, "unpaired spine exchange");
            }
        } else {
            next.push_back(col);
            ++i;
        }
    }
    columns_ = std::move(next);
    if (!changed || columns_.empty()) return changed;

    for (std::size_t t = 0; t < track_count_; ++t) {
        if (live_[t] && !touched[t]) edges.push_back({static_cast<int>(t), static_cast<int>(t)});
    }
    steps_.push_back(Step{manip.time, std::move(edges)});
    return true;
}

void SpineTracker::declare(std::size_t column, const std::string& exclusive) {
    auto& col = columns_.at(column);
    if (!col.exclusive.empty()) return;
    col.exclusive = exclusive;
    if (exclusive != "**kern") return;
    std::vector<Edge> edges;
    for (std::size_t t = 0; t < track_count_; ++t)
        if (live_[t]) edges.push_back({static_cast<int>(t), static_cast<int>(t)});
    col.track = allocate_track(0);
    // A spontaneously emerging part has no source.
    RationalTime when = steps_.empty() ? RationalTime(0) : steps_.back().time;
    steps_.push_back(Step{when, std::move(edges)});
}

std::vector<FlowStep> SpineTracker::flows() const {
    std::vector<FlowStep> out;
    FlowMatrix initial(track_count_);
    for (std::size_t t = 0; t < initial_live_.size(); ++t)
        if (initial_live_[t]) initial.set(t, t, 1);
    out.push_back(FlowStep{RationalTime(0), initial});
    for (const auto& step : steps_) {
        FlowMatrix m(track_count_);
        for (const auto& e : step.edges) m.set(static_cast<std::size_t>(e.dest), static_cast<std::size_t>(e.src), 1);
        out.push_back(FlowStep{step.time, std::move(m)});
    }
    return out;
}

FlowResolution resolve_flows(const std::vector<std::string>& exclusive_interpretations,
                             const std::vector<SpineManipulation>& manipulations, std::size_t max_parts) {
    SpineTracker tracker(exclusive_interpretations, max_parts, false);
    FlowResolution out;
    for (const auto& m : manipulations) {
        tracker.apply(m);
        out.layouts.push_back(tracker.columns());
    }
    out.track_count = tracker.track_count();
    out.flows = tracker.flows();
    return out;
}

// Parser -------------------------------------------------------------------------

namespace {

struct TrackEvent {
    Event event;
    bool tie_open = false;
};

struct TrackBuilder {
    std::vector<TrackEvent> events;
    RationalTime clock;
    std::vector<std::string> instruments;
};

bool looks_piano(const std::string& s) {
    std::string l;
    for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (const char* key : {"piano", "klav", "cemba", "hpschd", "forte"}) {
        if (l.find(key) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

Score parse_kern(const std::string& text, const ParseOptions& options, ParseReport* report) {
    ParseReport local;
    ParseReport& rep = report ? *report : local;
    Score score;
    std::optional<SpineTracker> tracker;
    std::vector<TrackBuilder> tracks;
    std::vector<RationalTime> col_end;
    RationalTime now;
    bool finished = false;

    auto ensure_tracks = [&]() {
        while (tracks.size() < tracker->track_count()) tracks.emplace_back();
    };

    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (raw.empty() || finished) continue;
        if (starts_with(raw, "!!")) {
            if (starts_with(raw, "!!!OTL:")) score.meta.title = raw.substr(raw.find(':') + 1);
            if (starts_with(raw, "!!!COM:")) score.meta.composer = raw.substr(raw.find(':') + 1);
            if (starts_with(raw, "!!!AIN:") && looks_piano(raw)) score.meta.piano = true;
            for (auto* field : {&score.meta.title, &score.meta.composer}) {
                auto b = field->find_first_not_of(" \t");
                *field = b == std::string::npos ? std::string() : field->substr(b);
            }
            continue;
        }
        auto tokens = split(raw, '\t');
        if (!tracker) {
            if (starts_with(tokens[0], "**")) {
                if (std::none_of(tokens.begin(), tokens.end(), [](const std::string& t) { return t == "**kern"; })) {
                    throw KernError(ErrorKind::no_kern_spine, line_no, 0, "", "no **kern spine in header");
                }
                tracker.emplace(tokens, options.max_parts, options.strict);
                ensure_tracks();
                col_end.assign(tokens.size(), RationalTime(0));
                continue;
            }
            if (tokens[0][0] == '!') continue;
            throw KernError(ErrorKind::no_kern_spine, line_no, 0, "", "data before exclusive interpretation");
        }
        if (tokens.size() != tracker->columns().size()) {
            throw KernError(ErrorKind::inconsistent_spine_count, line_no, 0, "",
                            "expected " + std::to_string(tracker->columns().size()) + " spines, found " +
                                std::to_string(tokens.size()));
        }
        const char lead = tokens[0].empty() ? '\0' : tokens[0][0];
        if (lead == '!' || lead == '=') continue;
        if (lead == '*') {
            for (std::size_t c = 0; c < tokens.size(); ++c) {
                if (starts_with(tokens[c], "**")) {
                    tracker->declare(c, tokens[c]);
                    ensure_tracks();
                }
                int t = tracker->columns()[c].track;
                if (t >= 0 && starts_with(tokens[c], "*I") && tokens[c].size() > 2) {
                    std::string code = tokens[c].substr(2);
                    tracks[static_cast<std::size_t>(t)].instruments.push_back(code);
                    score.meta.instruments.push_back(code);
                    if (looks_piano(code)) score.meta.piano = true;
                }
            }
            if (std::any_of(tokens.begin(), tokens.end(), is_manipulator)) {
                if (std::all_of(tokens.begin(), tokens.end(), [](const std::string& t) { return t == "*-"; })) {
                    finished = true;
                    continue;
                }
                // Work out which old columns feed each new column so the
                // running end times follow the layout change.
                std::vector<RationalTime> next_end;
                for (std::size_t i = 0; i < tokens.size();) {
                    if (tokens[i] == "*^") {
                        next_end.push_back(col_end[i]);
                        next_end.push_back(col_end[i]);
                        ++i;
                    } else if (tokens[i] == "*v") {
                        std::size_t j = i;
                        RationalTime end = col_end[i];
                        while (j < tokens.size() && tokens[j] == "*v") end = std::max(end, col_end[j++]);
                        next_end.push_back(j - i == 1 ? col_end[i] : end);
                        i = j;
                    } else if (tokens[i] == "*-") {
                        ++i;
                    } else if (tokens[i] == "*+") {
                        next_end.push_back(col_end[i]);
                        next_end.push_back(now);
                        ++i;
                    } else if (tokens[i] == "*x" && i + 1 < tokens.size()) {
                        next_end.push_back(col_end[i + 1]);
                        next_end.push_back(col_end[i]);
                        i += 2;
                    } else {
                        next_end.push_back(col_end[i]);
                        ++i;
                    }
                }
                tracker->apply(SpineManipulation{now, tokens, line_no});
                ensure_tracks();
                col_end = std::move(next_end);
            }
            continue;
        }

        // Data record.
        for (std::size_t c = 0; c < tokens.size(); ++c) {
            int t = tracker->columns()[c].track;
            if (t < 0) continue;
            const std::string& tok = tokens[c];
            if (tok == ".") continue;
            std::vector<int> pitches;
            std::optional<RationalTime> duration;
            std::size_t tie_starts = 0;
            std::size_t tie_ends = 0;
            std::size_t sounding = 0;
            bool mixed = false;
            for (const auto& sub : split(tok, ' ')) {
                if (sub.empty()) continue;
                NoteToken note;
                try {
                    note = parse_note_token(sub, &rep, options.strict);
                } catch (const KernError& e) {
                    throw KernError(e.kind(), line_no, c + 1, tok, e.what());
                }
                if (note.grace) {
                    ++rep.grace_notes_dropped;
                    continue;
                }
                if (duration && *note.duration != *duration) {
                    mixed = true;
                    duration = std::min(*duration, *note.duration);
                } else if (!duration) {
                    duration = note.duration;
                }
                if (note.midi) {
                    pitches.push_back(*note.midi);
                    ++sounding;
                    if (note.tie_start) ++tie_starts;
                    if (note.tie_end) ++tie_ends;
                }
            }
            if (mixed) ++rep.mixed_chord_durations;
            if (!duration) continue;  // grace notes only
            if (col_end[c] > now) {
                throw KernError(ErrorKind::rhythm_error, line_no, c + 1, tok,
                                "new event while the previous one sounds until " + col_end[c].to_string());
            }
            col_end[c] = now + *duration;

            auto& track = tracks[static_cast<std::size_t>(t)];
            if (now < track.clock) {
                throw KernError(ErrorKind::rhythm_error, line_no, c + 1, tok, "event precedes the part clock");
            }
            if (now > track.clock) {
                Event filler;
                filler.duration = now - track.clock;
                filler.padding = true;
                track.events.push_back(TrackEvent{filler, false});
                ++rep.gaps_padded;
            }
            Event ev = make_event(*duration, pitches);
            bool all_end = sounding > 0 && tie_ends == sounding;
            bool all_start = sounding > 0 && tie_starts == sounding;
            bool partial = (tie_ends > 0 && !all_end) || (tie_starts > 0 && !all_start);
            if (partial) {
                if (options.strict) throw KernError(ErrorKind::unsupported_construct, line_no, c + 1, tok, "partial tie");
                ++rep.partial_ties;
            }
            TrackEvent* last = track.events.empty() ? nullptr : &track.events.back();
            if (all_end && last && last->tie_open && !last->event.padding && last->event.pitches == ev.pitches) {
                last->event.duration += ev.duration;
                last->tie_open = all_start;
            } else {
                if (all_end && !(last && last->tie_open)) ++rep.partial_ties;
                track.events.push_back(TrackEvent{std::move(ev), all_start});
            }
            track.clock = now + *duration;
        }
        std::optional<RationalTime> next;
        for (std::size_t c = 0; c < col_end.size(); ++c) {
            if (tracker->columns()[c].track < 0) continue;
            if (col_end[c] > now && (!next || col_end[c] < *next)) next = col_end[c];
        }
        if (next) now = *next;
    }
    if (!tracker) throw KernError(ErrorKind::no_kern_spine, 0, 0, "", "no exclusive interpretation line");

    RationalTime total = now;
    for (const auto& t : tracks) total = std::max(total, t.clock);
    for (auto& t : tracks) {
        Part part;
        for (auto& te : t.events) part.events.push_back(std::move(te.event));
        if (t.clock < total) {
            Event filler;
            filler.duration = total - t.clock;
            filler.padding = true;
            part.events.push_back(filler);
        }
        if (!t.instruments.empty()) part.name = t.instruments.front();
        score.parts.push_back(std::move(part));
    }
    score.flows = tracker->flows();
    return score;
}

Score parse_kern_file(const std::string& path, const ParseOptions& options, ParseReport* report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    Score s = parse_kern(ss.str(), options, report);
    s.meta.source_path = path;
    return s;
}

// Serializer -----------------------------------------------------------------

std::string beats_to_recip(const RationalTime& beats, bool allow_rational) {
    if (beats <= RationalTime(0)) {
        throw KernError(ErrorKind::unrepresentable_duration, 0, 0, beats.to_string(), "duration must be positive");
    }
    for (int dots = 0; dots <= 3; ++dots) {
        // dotted value = base * (2 - 2^-dots)
        RationalTime factor = RationalTime(2) - RationalTime(1, std::int64_t{1} << dots);
        RationalTime base = beats / factor;
        RationalTime recip = RationalTime(4) / base;
        std::string digits;
        if (recip.is_integer()) {
            digits = std::to_string(recip.num());
        } else if (recip.num() == 1 && (recip.den() == 2 || recip.den() == 4 || recip.den() == 8)) {
            digits = recip.den() == 2 ? "0" : recip.den() == 4 ? "00" : "000";
        } else {
            continue;
        }
        return digits + std::string(static_cast<std::size_t>(dots), '.');
    }
    if (!allow_rational) {
        throw KernError(ErrorKind::unrepresentable_duration, 0, 0, beats.to_string(), "no dotted recip spelling");
    }
    RationalTime recip = RationalTime(4) / beats;
    return std::to_string(recip.num()) + "%" + std::to_string(recip.den());
}

std::string midi_to_kern_pitch(int midi) {
    static const char* names[12] = {"c", "c#", "d", "d#", "e", "f", "f#", "g", "g#", "a", "a#", "b"};
    int pc = ((midi % 12) + 12) % 12;
    int octave = (midi - pc) / 12 - 1;  // C4 = 60
    std::string name = names[pc];
    char letter = name[0];
    std::string acc = name.substr(1);
    std::string out;
    if (octave >= 4) {
        out.assign(static_cast<std::size_t>(octave - 3), letter);
    } else {
        out.assign(static_cast<std::size_t>(4 - octave), static_cast<char>(std::toupper(static_cast<unsigned char>(letter))));
    }
    return out + acc;
}

std::string serialize_kern(const Score& score, const SerializeOptions& options) {
    std::ostringstream os;
    if (!score.meta.composer.empty()) os << "!!!COM: " << score.meta.composer << "\n";
    if (!score.meta.title.empty()) os << "!!!OTL: " << score.meta.title << "\n";
    const std::size_t parts = std::max<std::size_t>(score.parts.size(), 1);
    for (std::size_t p = 0; p < parts; ++p) os << (p ? "\t" : "") << "**kern";
    os << "\n";

    // Onset timeline across parts.
    std::vector<std::vector<RationalTime>> onsets;
    std::vector<RationalTime> times;
    for (const auto& part : score.parts) {
        onsets.push_back(part.onsets());
        times.insert(times.end(), onsets.back().begin(), onsets.back().end());
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    std::vector<std::size_t> cursor(score.parts.size(), 0);
    for (const auto& t : times) {
        for (std::size_t p = 0; p < score.parts.size(); ++p) {
            if (p) os << "\t";
            const auto& evs = score.parts[p].events;
            if (cursor[p] < evs.size() && onsets[p][cursor[p]] == t) {
                const Event& e = evs[cursor[p]++];
                const std::string recip = beats_to_recip(e.duration, options.allow_rational_recip);
                if (e.pitches.empty()) {
                    os << recip << "r";
                } else {
                    for (std::size_t i = 0; i < e.pitches.size(); ++i) {
                        os << (i ? " " : "") << recip << midi_to_kern_pitch(e.pitches[i].midi);
                    }
                }
            } else {
                os << ".";
            }
        }
        os << "\n";
    }
    for (std::size_t p = 0; p < parts; ++p) os << (p ? "\t" : "") << "*-";
    os << "\n";
    return os.str();
}

}  // namespace polyscore::kern
