#include "fitosim/diagnostics.hpp"
#include "fitosim/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fitosim;

namespace
{
    void start(Trace &t, std::int64_t seed = 1, std::string_view digest = "d")
    {
        t.emit(0, TraceKind::EpisodeMarker,
               {{"marker", "run-start"},
                {"mode", "fito"},
                {"seed", seed},
                {"resources", 2},
                {"workload_digest", t.intern(digest)},
                {"rng", "xoshiro256**"}});
    }

    void end(Trace &t, SimTime at) { t.emit(at, TraceKind::EpisodeMarker, {{"marker", "run-end"}, {"stopped", 0}, {"events", 0}}); }

    void outcome(Trace &t, SimTime at, bool committed, std::int64_t resource, std::int64_t observed,
                 std::int64_t current)
    {
        t.emit(at, TraceKind::CommitOutcome,
               {{"txn", static_cast<std::int64_t>(t.size())},
                {"core", 0},
                {"result", committed ? "Committed" : "Aborted"},
                {"check", "version-compare"},
                {"t1", at - 750},
                {"t3", at},
                {"window", 750},
                {"resources", IntList{resource}},
                {"observed", IntList{observed}},
                {"current", IntList{current}},
                {"versions", IntList{committed ? current + 1 : current}},
                {"payload", 3}});
    }

    // Ten commits on resource 0 and five aborts on resource 1, which a
    // mutation moved under each aborted decision.
    Trace constructed()
    {
        Trace t;
        start(t);
        SimTime at = 1000;
        for (int i = 0; i < 10; ++i, at += 1000)
            outcome(t, at, true, 0, i, i);
        for (int i = 0; i < 5; ++i, at += 1000)
        {
            t.emit(at - 10, TraceKind::Mutate, {{"resource", 1}, {"version", i + 1}});
            outcome(t, at, false, 1, i, i + 1);
        }
        end(t, at);
        return t;
    }

    ExperimentConfig preset(const std::string &name) { return ConfigBuilder().preset(name).build(); }
} // namespace

TEST(Diagnostics, AbortRateAndWindowPercentiles)
{
    const MetricsSummary m = summarize(constructed());
    EXPECT_EQ(m.committed, 10u);
    EXPECT_EQ(m.aborted, 5u);
    EXPECT_DOUBLE_EQ(m.abort_rate, 1.0 / 3.0);
    EXPECT_EQ(m.window.count, 15u);
    EXPECT_EQ(m.window.p50_ns, 750u);
    EXPECT_EQ(m.window.p99_ns, 750u);
    EXPECT_EQ(m.mutations, 5u);
}

TEST(Diagnostics, WindowStatsNearestRank)
{
    std::vector<SimTime> v;
    for (SimTime i = 1; i <= 100; ++i)
        v.push_back(101 - i);
    const WindowStats s = window_stats(v);
    EXPECT_EQ(s.count, 100u);
    EXPECT_EQ(s.p50_ns, 50u);
    EXPECT_EQ(s.p90_ns, 90u);
    EXPECT_EQ(s.p99_ns, 99u);
    EXPECT_EQ(s.max_ns, 100u);
    EXPECT_DOUBLE_EQ(s.mean_ns, 50.5);
    std::uint64_t total = 0;
    for (const auto &[k, n] : s.log2_buckets)
        total += n;
    EXPECT_EQ(total, 100u);
    EXPECT_EQ(s.log2_buckets.at(6), 37u); // 64..100

    EXPECT_EQ(window_stats({}).count, 0u);
}

TEST(Diagnostics, ScoreOfConstructedTraceHasOnlyCommitCriteria)
{
    const FitoScore s = fito_score(constructed());
    EXPECT_TRUE(s.c1_clocks);
    EXPECT_FALSE(s.c2_timeouts);
    EXPECT_TRUE(s.c3_abort_resolution);
    EXPECT_FALSE(s.c4_forward_recovery);
    EXPECT_EQ(s.total, 2);
    EXPECT_EQ(s.evidence[0].size(), 8u); // capped
    EXPECT_EQ(s.evidence[2].size(), 5u);
    EXPECT_NE(to_string(s).find("2/4"), std::string::npos);
}

TEST(Diagnostics, FlpPresetScoresFourOfFour)
{
    const RunResult r = run_single(preset("flp-3.2"), Mode::Fito);
    const FitoScore s = fito_score(r.trace);
    EXPECT_EQ(s.total, 4) << to_string(s);
    for (const auto &e : s.evidence)
        for (auto i : e)
            ASSERT_LT(i, r.trace.size());
}

TEST(Diagnostics, HealthyBilateralScoresZero)
{
    ExperimentConfig c = preset("bilateral-5");
    c.workload.fault_episodes.clear();
    c.workload.run_duration_ns = 5 * kNsPerMs;
    const FitoScore s = fito_score(run_single(c, Mode::Bilateral).trace);
    EXPECT_EQ(s.total, 0) << to_string(s);
}

TEST(Diagnostics, NoMutationsMeansNoAbortResolution)
{
    ExperimentConfig c = preset("flp-3.2");
    c.workload.mutation_rate_per_s = 0;
    const FitoScore s = fito_score(run_single(c, Mode::Fito).trace);
    EXPECT_FALSE(s.c3_abort_resolution);
    EXPECT_TRUE(s.c1_clocks);
}

TEST(Diagnostics, TruncatedTraceIsRejected)
{
    Trace t;
    start(t);
    outcome(t, 1000, true, 0, 0, 0);
    EXPECT_THROW(fito_score(t), TraceFormatError);
    EXPECT_THROW(summarize(t), TraceFormatError);
    EXPECT_THROW(replay(t), TraceFormatError);
}

TEST(Diagnostics, ReplayRebuildsStateAndCatchesGaps)
{
    const auto state = replay(constructed());
    ASSERT_EQ(state.size(), 2u);
    EXPECT_EQ(state[0], (ResourceFinal{10, 3}));
    EXPECT_EQ(state[1], (ResourceFinal{5, 0}));

    Trace bad;
    start(bad);
    bad.emit(10, TraceKind::Mutate, {{"resource", 0}, {"version", 2}});
    end(bad, 20);
    EXPECT_THROW(replay(bad), ReplayError);

    Trace unknown;
    start(unknown);
    unknown.emit(10, TraceKind::Mutate, {{"resource", 7}, {"version", 1}});
    end(unknown, 20);
    EXPECT_THROW(replay(unknown), ReplayError);
}

TEST(Diagnostics, MetricsFromFileMatchMemory)
{
    ExperimentConfig c = preset("paper-2.3");
    c.workload.mutation_rate_per_s = 1e5;
    const RunResult r = run_single(c, Mode::Fito);
    const auto path = std::filesystem::temp_directory_path() / "fitosim-diag-trace.jsonl";
    {
        std::ofstream out(path);
        r.trace.write_jsonl(out);
    }
    const Trace back = Trace::read_jsonl_file(path.string());
    std::filesystem::remove(path);
    EXPECT_EQ(metrics_csv(summarize(back)), metrics_csv(r.summary));
    EXPECT_EQ(replay(back), r.final_state);
    EXPECT_EQ(fito_score(back).total, fito_score(r.trace).total);
}

TEST(Diagnostics, CsvHasOneRowPerSummary)
{
    const MetricsSummary m = summarize(constructed());
    const std::string csv = metrics_csv(m);
    EXPECT_EQ(csv.rfind(metrics_csv_header(), 0), 0u);
    std::size_t lines = 0;
    for (char ch : csv)
        lines += ch == '\n';
    EXPECT_EQ(lines, 2u);
    EXPECT_FALSE(summary_text(m).empty());
}

TEST(Diagnostics, CompareRequiresSameSeedAndWorkload)
{
    Trace a = constructed();
    Trace b;
    start(b, 2);
    end(b, 10);
    EXPECT_THROW(compare(a, b), ComparisonError);
    Trace d;
    start(d, 1, "other");
    end(d, 10);
    EXPECT_THROW(compare(a, d), ComparisonError);
    Trace same;
    start(same, 1, "d");
    end(same, 10);
    const ComparisonReport rep = compare(a, same);
    EXPECT_TRUE(rep.bilateral_no_aborts);
    EXPECT_FALSE(rep.detection_ratio.has_value());
}

TEST(Diagnostics, PairedComparisonContrastsDetection)
{
    const PairedResult p = run_paired(preset("bilateral-5"));
    const ComparisonReport &rep = p.comparison;
    EXPECT_TRUE(rep.bilateral_no_aborts);
    EXPECT_TRUE(rep.bilateral_no_timeouts);
    ASSERT_TRUE(rep.detection_ratio.has_value());
    EXPECT_GE(*rep.detection_ratio, 1e4);
    EXPECT_GT(rep.fito.aborted, 0u);
    EXPECT_EQ(rep.bilateral.swap_window_min_ns, 750u);
    EXPECT_EQ(rep.bilateral.swap_window_max_ns, 750u);
}
