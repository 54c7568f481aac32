#include "fitosim/trace.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace fitosim;

namespace
{
    Trace sample()
    {
        Trace t;
        t.emit(0, TraceKind::EpisodeMarker, {{"marker", "run-start"}, {"seed", 42}});
        t.emit(10, TraceKind::Mutate, {{"resource", 3}, {"version", 1}});
        t.emit(20, TraceKind::Snapshot,
               {{"purpose", t.intern("trigger")}, {"resources", IntList{1, 2}}, {"versions", IntList{0, 5}}});
        t.emit(30, TraceKind::EpisodeMarker, {{"marker", "run-end"}});
        return t;
    }
} // namespace

TEST(Trace, KindNamesRoundTrip)
{
    for (int k = 0; k <= static_cast<int>(TraceKind::EpisodeMarker); ++k)
    {
        const auto kind = static_cast<TraceKind>(k);
        EXPECT_EQ(trace_kind_from_string(to_string(kind)), kind);
    }
    EXPECT_FALSE(trace_kind_from_string("bogus"));
}

TEST(Trace, LineFormat)
{
    const Trace t = sample();
    EXPECT_EQ(Trace::to_json_line(t[1]), R"({"at":10,"kind":"mutate","attributes":{"resource":3,"version":1}})");
    EXPECT_EQ(Trace::to_json_line(t[2]),
              R"({"at":20,"kind":"snapshot","attributes":{"purpose":"trigger","resources":[1,2],"versions":[0,5]}})");
}

TEST(Trace, JsonlRoundTrip)
{
    const Trace t = sample();
    std::istringstream in(t.to_jsonl());
    const Trace back = Trace::read_jsonl(in);
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        EXPECT_EQ(back[i], t[i]);
    EXPECT_EQ(back.to_jsonl(), t.to_jsonl());
    EXPECT_TRUE(back.complete());
}

TEST(Trace, AppendOnlyInTimeOrder)
{
    Trace t;
    t.emit(100, TraceKind::Mutate, {{"resource", 0}});
    EXPECT_THROW(t.emit(99, TraceKind::Mutate, {{"resource", 0}}), std::logic_error);
}

TEST(Trace, CompletenessNeedsRunEnd)
{
    Trace t;
    EXPECT_FALSE(t.complete());
    t.emit(0, TraceKind::EpisodeMarker, {{"marker", "run-start"}});
    EXPECT_FALSE(t.complete());
    t.emit(5, TraceKind::EpisodeMarker, {{"marker", "run-end"}});
    EXPECT_TRUE(t.complete());
}

TEST(Trace, ReaderReportsLineOfBadRecord)
{
    std::istringstream in("{\"at\":0,\"kind\":\"mutate\",\"attributes\":{}}\n{\"at\":1,\"kind\":\"nope\",\"attributes\":{}}\n");
    try
    {
        Trace::read_jsonl(in);
        FAIL();
    }
    catch (const TraceFormatError &e)
    {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(Trace, RecordAccessors)
{
    const Trace t = sample();
    EXPECT_EQ(t[1].get_int("resource"), 3);
    EXPECT_EQ(t[1].get_int_or("missing", -7), -7);
    EXPECT_EQ(t[2].get_str("purpose"), "trigger");
    EXPECT_EQ(t[2].get_list("versions"), (IntList{0, 5}));
    EXPECT_TRUE(t[0].is(TraceKind::EpisodeMarker, "marker", "run-start"));
    EXPECT_THROW(t[1].get_str("resource"), std::exception);
}
