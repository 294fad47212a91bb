// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "polyscore/kern.hpp"

#include <random>

using namespace polyscore;
using namespace polyscore::kern;

namespace {

const std::string kData = POLYSCORE_TEST_DATA;

Score parse_one(const std::string& body, ParseReport* rep = nullptr, ParseOptions opts = {}) {
    return parse_kern("**kern\n" + body + "\n*-\n", opts, rep);
}

std::vector<int> midis(const Event& e) {
    std::vector<int> out;
    for (auto p : e.pitches) out.push_back(p.midi);
    return out;
}

ErrorKind kind_of(const std::string& text, ParseOptions opts = {}) {
    try {
        parse_kern(text, opts);
    } catch (const KernError& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::unparseable_token;
}

}  // namespace

TEST_CASE("note tokens") {
    auto n = parse_note_token("4c");
    CHECK(*n.duration == RationalTime(1));
    CHECK(*n.midi == 60);

    n = parse_note_token("2.r");
    CHECK(*n.duration == RationalTime(3));
    CHECK_FALSE(n.midi.has_value());

    CHECK(*parse_note_token("8cc").midi == 72);
    CHECK(*parse_note_token("8ee").midi == 76);
    CHECK(*parse_note_token("4C").midi == 48);
    CHECK(*parse_note_token("4CC").midi == 36);
    CHECK(*parse_note_token("4AAA").midi == 33);
    CHECK(*parse_note_token("4AAAA").midi == 21);
    CHECK(*parse_note_token("4b-").midi == 70);
    CHECK(*parse_note_token("4BB-").midi == 46);
    CHECK(*parse_note_token("4f##").midi == 67);
    CHECK(*parse_note_token("4an").midi == 69);
    CHECK(*parse_note_token("4ccc#").midi == 85);

    CHECK(*parse_note_token("16c").duration == RationalTime(1, 4));
    CHECK(*parse_note_token("4..c").duration == RationalTime(7, 4));
    CHECK(*parse_note_token("3c").duration == RationalTime(4, 3));
    CHECK(*parse_note_token("12c").duration == RationalTime(1, 3));
    CHECK(*parse_note_token("0c").duration == RationalTime(8));
    CHECK(*parse_note_token("00c").duration == RationalTime(16));
    CHECK(*parse_note_token("3%2c").duration == RationalTime(8, 3));
    CHECK(*parse_note_token("(8f/L").midi == 65);

    n = parse_note_token("[4c");
    CHECK(n.tie_start);
    CHECK_FALSE(n.tie_end);
    n = parse_note_token("4c_");
    CHECK((n.tie_start && n.tie_end));
    CHECK(parse_note_token("8cq").grace);
    CHECK(parse_note_token("cc").grace);
}

TEST_CASE("malformed note tokens are rejected") {
    CHECK_THROWS_AS(parse_note_token("4"), KernError);
    CHECK_THROWS_AS(parse_note_token("4cd"), KernError);
    CHECK_THROWS_AS(parse_note_token("4c4"), KernError);
    CHECK_THROWS_AS(parse_note_token("4cgc"), KernError);
    ParseReport rep;
    parse_note_token("4c@", &rep);
    parse_note_token("4c?", &rep);
    CHECK(rep.skipped_signifiers['?'] == 1);
    CHECK_THROWS_AS(parse_note_token("4c?", nullptr, true), KernError);
}

TEST_CASE("chords and rests") {
    Score s = parse_one("8cc 8ee\n4.r");
    REQUIRE(s.parts.size() == 1);
    REQUIRE(s.parts[0].events.size() == 2);
    CHECK(s.parts[0].events[0].duration == RationalTime(1, 2));
    CHECK(midis(s.parts[0].events[0]) == std::vector<int>{72, 76});
    CHECK(s.parts[0].events[1].is_rest());
    CHECK(s.parts[0].events[1].duration == RationalTime(3, 2));

    ParseReport rep;
    s = parse_one("4g 8c 4g", &rep);
    CHECK(rep.mixed_chord_durations == 1);
    CHECK(s.parts[0].events[0].duration == RationalTime(1, 2));
    CHECK(midis(s.parts[0].events[0]) == std::vector<int>{60, 67});
}

TEST_CASE("terminator-only spine gives one empty part") {
    Score s = parse_kern("**kern\n*-\n");
    REQUIRE(s.parts.size() == 1);
    CHECK(s.parts[0].events.empty());
    REQUIRE(s.flows.size() == 1);
    CHECK(s.flows[0].matrix.is_identity());
}

TEST_CASE("ties merge into one event") {
    Score s = parse_kern_file(kData + "/fixtures/ties.krn");
    const auto& ev = s.parts[0].events;
    REQUIRE(ev.size() == 4);
    CHECK(ev[0].duration == RationalTime(2));
    CHECK(midis(ev[0]) == std::vector<int>{60});
    CHECK(ev[1].duration == RationalTime(3));
    CHECK(ev[2].duration == RationalTime(1, 2));

    ParseReport rep;
    s = parse_one("[4c 4e\n4c] 4e", &rep);
    CHECK(rep.partial_ties == 2);
    CHECK(s.parts[0].events.size() == 2);
    CHECK_THROWS_AS(parse_one("[4c 4e\n4c] 4e", nullptr, ParseOptions{true, 6}), KernError);
}

TEST_CASE("grace notes are dropped and counted") {
    ParseReport rep;
    Score s = parse_kern("**kern\t**kern\n8cq\t.\n4d\t4f\n*-\t*-\n", {}, &rep);
    CHECK(rep.grace_notes_dropped == 1);
    REQUIRE(s.parts[0].events.size() == 1);
    CHECK(s.parts[0].events[0].duration == RationalTime(1));
}

TEST_CASE("four-part texture fixture") {
    Score s = parse_kern_file(kData + "/fixtures/texture4.krn");
    CHECK(s.meta.title == "Four-part texture");
    REQUIRE(s.parts.size() == 4);
    validate_score(s);
    CHECK(s.length() == RationalTime(6));
    const auto& p1 = s.parts[0].events;
    REQUIRE(p1.size() == 9);
    CHECK(p1[0].duration == RationalTime(3, 2));
    CHECK(midis(p1[0]) == std::vector<int>{70});
    CHECK(midis(p1[7]) == std::vector<int>{82});
    const auto& p4 = s.parts[3].events;
    REQUIRE(p4.size() == 5);
    CHECK(midis(p4[0]) == std::vector<int>{58});
    CHECK(midis(p4[1]) == std::vector<int>{55});
    CHECK(p4[3].duration == RationalTime(3, 2));
    CHECK(s.flow_free());
    CHECK(s.note_count() == 17);
}

TEST_CASE("non-kern spines are ignored and triplets stay exact") {
    Score s = parse_kern_file(kData + "/fixtures/triplets.krn");
    REQUIRE(s.parts.size() == 2);
    validate_score(s);
    CHECK(s.parts[1].events[0].duration == RationalTime(1, 3));
    CHECK(s.parts[1].onsets()[3] == RationalTime(1));
    CHECK(midis(s.parts[0].events[2]) == std::vector<int>{77});
}

TEST_CASE("split and merge become flow steps") {
    Score s = parse_kern_file(kData + "/fixtures/split_merge.krn");
    validate_score(s);
    REQUIRE(s.parts.size() == 3);
    REQUIRE(s.flows.size() == 3);
    const auto& f0 = s.flows[0].matrix;
    CHECK(f0.at(0, 0) == 1);
    CHECK(f0.at(1, 1) == 1);
    CHECK(f0.at(2, 2) == 0);

    const auto& split = s.flows[1];
    CHECK(split.time == RationalTime(4));
    CHECK(split.matrix.at(1, 1) == 1);
    CHECK(split.matrix.at(2, 1) == 1);
    CHECK(split.matrix.at(0, 0) == 1);
    CHECK(split.matrix.col_sum(1) == 2);

    const auto& merge = s.flows[2];
    CHECK(merge.time == RationalTime(6));
    CHECK(merge.matrix.at(1, 1) == 1);
    CHECK(merge.matrix.at(1, 2) == 1);
    CHECK(merge.matrix.row_sum(2) == 0);
    CHECK(merge.matrix.col_sum(2) == 1);

    // Connectivity over the split/merge pair is the identity on live tracks.
    FlowMatrix net = merge.matrix.compose_after(split.matrix);
    CHECK(net.at(0, 0) == 1);
    CHECK(net.at(1, 1) == 1);
    CHECK(net.row_sum(0) == 1);
    CHECK(net.row_sum(1) == 1);
    CHECK(net.row_sum(2) == 0);

    const auto& child = s.parts[2].events;
    REQUIRE(child.size() == 4);
    CHECK(child[0].padding);
    CHECK(child[0].duration == RationalTime(4));
    CHECK(midis(child[1]) == std::vector<int>{79});
    CHECK(child[3].padding);
    CHECK(s.parts[1].events.back().duration == RationalTime(2));
}

TEST_CASE("resolver reuses dead tracks and enforces the part limit") {
    using V = std::vector<std::string>;
    std::vector<SpineManipulation> m = {
        {RationalTime(1), V{"*^", "*"}, 3},
        {RationalTime(2), V{"*v", "*v", "*"}, 5},
        {RationalTime(3), V{"*", "*^"}, 7},
    };
    auto r = resolve_flows(V{"**kern", "**kern"}, m, 6);
    CHECK(r.track_count == 3);
    REQUIRE(r.flows.size() == 4);
    CHECK(r.flows[3].matrix.at(2, 1) == 1);
    CHECK(r.layouts.back().size() == 3);
    CHECK(r.layouts.back()[2].track == 2);

    std::vector<SpineManipulation> grow = {
        {RationalTime(1), V{"*^", "*"}, 3},
        {RationalTime(2), V{"*^", "*", "*"}, 4},
    };
    CHECK_THROWS_AS(resolve_flows(V{"**kern", "**kern"}, grow, 3), KernError);
    try {
        resolve_flows(V{"**kern", "**kern"}, grow, 3);
    } catch (const KernError& e) {
        CHECK(e.kind() == ErrorKind::too_many_parts);
    }
    CHECK(resolve_flows(V{"**kern"}, {}, 6).flows.size() == 1);
}

TEST_CASE("structural errors") {
    CHECK(kind_of("**kern\t**kern\n4c\n*-\t*-\n") == ErrorKind::inconsistent_spine_count);
    CHECK(kind_of("**dynam\np\n*-\n") == ErrorKind::no_kern_spine);
    CHECK(kind_of("**kern\n4x\n*-\n") == ErrorKind::unparseable_token);
    CHECK(kind_of("**kern\t**kern\n*\t*^\n4c\t4d\t4e\n*^\t*\t*\n*^\t*\t*\t*\n*\t*\t*\t*\t*\n*-\t*-\t*-\t*-\t*-\n",
                  ParseOptions{false, 4}) == ErrorKind::too_many_parts);
    try {
        parse_kern("**kern\n4c\n4q1\n*-\n");
        FAIL("expected error");
    } catch (const KernError& e) {
        CHECK(e.line() == 3);
        CHECK(e.column() == 1);
    }
}

TEST_CASE("serialize spells durations and pitches") {
    CHECK(beats_to_recip(RationalTime(1)) == "4");
    CHECK(beats_to_recip(RationalTime(3, 2)) == "4.");
    CHECK(beats_to_recip(RationalTime(7, 4)) == "4..");
    CHECK(beats_to_recip(RationalTime(8)) == "0");
    CHECK(beats_to_recip(RationalTime(12)) == "0.");
    CHECK(beats_to_recip(RationalTime(1, 3)) == "12");
    CHECK(beats_to_recip(RationalTime(5, 4)) == "6...");
    CHECK(beats_to_recip(RationalTime(5, 3)) == "12%5");
    CHECK_THROWS_AS(beats_to_recip(RationalTime(5, 3), false), KernError);
    CHECK(midi_to_kern_pitch(60) == "c");
    CHECK(midi_to_kern_pitch(72) == "cc");
    CHECK(midi_to_kern_pitch(59) == "B");
    CHECK(midi_to_kern_pitch(46) == "AA#");
    CHECK(midi_to_kern_pitch(21) == "AAAA");

    Score one;
    one.parts.push_back(Part{{make_event(RationalTime(1), {60})}, ""});
    std::string out = serialize_kern(one);
    CHECK(out.find("\n4c\n") != std::string::npos);

    Score empty;
    empty.parts.resize(1);
    CHECK(serialize_kern(empty) == "**kern\n*-\n");
}

TEST_CASE("parse and serialize reach a fixed point on fixtures") {
    for (const char* name : {"texture4.krn", "ties.krn", "chords.krn", "triplets.krn"}) {
        Score a = parse_kern_file(kData + "/fixtures/" + name);
        std::string text = serialize_kern(a);
        Score b = parse_kern(text);
        CHECK_MESSAGE(events_equal(a, b), name);
        CHECK(serialize_kern(b) == text);
    }
}

TEST_CASE("random flow-free scores survive a round trip") {
    std::mt19937_64 rng(11);
    const std::vector<RationalTime> durs = {RationalTime(1, 4), RationalTime(1, 3), RationalTime(1, 2),
                                            RationalTime(1),    RationalTime(3, 2), RationalTime(2),
                                            RationalTime(3),    RationalTime(5, 4)};
    for (int trial = 0; trial < 200; ++trial) {
        Score s;
        std::size_t parts = 1 + rng() % 4;
        for (std::size_t p = 0; p < parts; ++p) {
            Part part;
            for (int k = 0; k < 6; ++k) {
                std::vector<int> notes;
                std::size_t chord = rng() % 3;
                for (std::size_t c = 0; c < chord; ++c) notes.push_back(30 + static_cast<int>(rng() % 70));
                part.events.push_back(make_event(durs[rng() % durs.size()], notes));
            }
            s.parts.push_back(part);
        }
        RationalTime total = s.length();
        for (auto& p : s.parts) {
            RationalTime gap = total - p.length();
            if (gap > RationalTime(0)) p.events.push_back(make_event(gap, {}));
        }
        Score back = parse_kern(serialize_kern(s));
        REQUIRE(events_equal(s, back));
    }
}
