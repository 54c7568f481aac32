#include "fitosim/workload.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fitosim;

TEST(GenMutations, ZeroRateGivesNothing) { EXPECT_TRUE(gen_mutations(0.0, kNsPerSec, 1).empty()); }

TEST(GenMutations, CountWithinThreeSigma)
{
    const auto times = gen_mutations(1e5, kNsPerSec, 11);
    const double sigma = std::sqrt(1e5);
    EXPECT_NEAR(double(times.size()), 1e5, 3 * sigma);
    for (std::size_t i = 1; i < times.size(); ++i)
        ASSERT_LE(times[i - 1], times[i]);
    EXPECT_LT(times.back(), kNsPerSec);
}

TEST(GenMutations, SeedDeterministic)
{
    EXPECT_EQ(gen_mutations(1e5, 10 * kNsPerMs, 3), gen_mutations(1e5, 10 * kNsPerMs, 3));
    EXPECT_NE(gen_mutations(1e5, 10 * kNsPerMs, 3), gen_mutations(1e5, 10 * kNsPerMs, 4));
}

TEST(GenRequests, MeanGap)
{
    const auto times = gen_requests(1e6, 100 * kNsPerMs, 5);
    EXPECT_NEAR(double(times.size()), 1e5, 3 * std::sqrt(1e5));
}

TEST(WorkloadConfig, Validation)
{
    WorkloadConfig c;
    EXPECT_NO_THROW(c.validate());
    c.mutation_rate_per_s = -1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.fault_episodes = {{EpisodeKind::Slow, 100, 50}, {EpisodeKind::Slow, 120, 10}};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    // Different kinds may overlap.
    c.fault_episodes = {{EpisodeKind::Slow, 100, 50}, {EpisodeKind::Crash, 120, 0}};
    EXPECT_NO_THROW(c.validate());
    c = {};
    c.request_mode = RequestMode::Open;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

namespace
{
    // Completes every request after a fixed overhead.
    struct FixedOverhead : RequestHandler
    {
        Engine &engine;
        Workload *wl = nullptr;
        SimTime overhead;
        std::uint64_t mutations = 0;
        std::vector<Trigger> triggers;

        FixedOverhead(Engine &e, SimTime o) : engine(e), overhead(o) {}
        void on_trigger(const Trigger &t) override
        {
            triggers.push_back(t);
            engine.schedule(overhead, ModuleId::Test, [this, core = t.core] { wl->complete(core, RequestStatus::Ok); });
        }
        void on_mutation(ResourceId) override { ++mutations; }
    };

    struct Rig
    {
        Engine engine;
        Trace trace;
        HostModel host;
        Workload wl;
        FixedOverhead handler;

        Rig(WorkloadConfig c, SimTime overhead, std::uint64_t seed = 1)
            : host(engine, trace, c.resource_counts), wl(engine, trace, host, c, seed), handler(engine, overhead)
        {
            handler.wl = &wl;
        }
    };
} // namespace

TEST(Workload, ClosedLoopThroughputIsInverseOverhead)
{
    WorkloadConfig c;
    c.run_duration_ns = 10 * kNsPerMs;
    Rig r(c, 4000);
    r.wl.start(r.handler);
    r.engine.run_until(c.run_duration_ns);
    // 10^9 / 4000 = 250k req/s -> 2500 in 10 ms.
    EXPECT_EQ(r.wl.requests_completed(), 2500u);
}

TEST(Workload, TriggerKeysAndPeek)
{
    WorkloadConfig c;
    c.cores = 2;
    c.targets_per_txn = 2;
    Rig r(c, 1000);
    r.wl.start(r.handler);
    r.engine.run_until(0);
    ASSERT_EQ(r.handler.triggers.size(), 2u);
    const Trigger next0 = r.wl.peek_next(0);
    r.engine.run_until(1000);
    ASSERT_EQ(r.handler.triggers.size(), 4u);
    const Trigger &t = r.handler.triggers[2].core == 0 ? r.handler.triggers[2] : r.handler.triggers[3];
    EXPECT_EQ(t.key, next0.key);
    EXPECT_EQ(t.resources, next0.resources);
    EXPECT_EQ(t.resources.size(), 2u);
    EXPECT_NE(t.resources[0], t.resources[1]);
}

TEST(Workload, MaxRequestsStopsRun)
{
    WorkloadConfig c;
    c.max_requests = 10;
    Rig r(c, 100);
    r.wl.start(r.handler);
    r.engine.run_until(kNsPerSec);
    EXPECT_TRUE(r.engine.stopped());
    EXPECT_EQ(r.wl.requests_completed(), 10u);
}

TEST(Workload, OpenLoopQueuesWhenBusy)
{
    WorkloadConfig c;
    c.request_mode = RequestMode::Open;
    c.event_arrival_rate_per_s = 1e6; // mean gap 1 us, service 2 us: queues build
    c.run_duration_ns = kNsPerMs;
    Rig r(c, 2000);
    r.wl.start(r.handler);
    r.engine.run_until(c.run_duration_ns);
    EXPECT_LE(r.wl.requests_completed(), 500u);
    bool waited = false;
    for (const auto &rec : r.trace.records())
        if (rec.kind == TraceKind::RequestComplete && rec.get_int("latency") > rec.get_int("overhead"))
            waited = true;
    EXPECT_TRUE(waited);
}

TEST(Workload, MutationsFollowConfiguredRate)
{
    WorkloadConfig c;
    c.mutation_rate_per_s = 1e5;
    c.run_duration_ns = 100 * kNsPerMs;
    c.resource_counts = {4, 0, 0};
    Rig r(c, 1000);
    r.wl.start(r.handler);
    r.engine.run_until(c.run_duration_ns);
    // 4 resources x 1e5/s x 0.1 s
    EXPECT_NEAR(double(r.handler.mutations), 4e4, 3 * std::sqrt(4e4));
    EXPECT_EQ(r.handler.mutations, r.wl.mutations_generated());
}

TEST(Workload, EpisodesDriveGroundTruth)
{
    WorkloadConfig c;
    c.fault_episodes = {{EpisodeKind::Slow, 1000, 500}, {EpisodeKind::Crash, 3000, 0}};
    Rig r(c, 100);
    r.wl.start(r.handler);
    r.engine.run_until(1000);
    EXPECT_TRUE(r.wl.faults().slow());
    EXPECT_FALSE(r.wl.faults().healthy());
    bool resumed = false;
    r.wl.faults().when_resumed([&] { resumed = true; });
    r.engine.run_until(1500);
    EXPECT_FALSE(r.wl.faults().slow());
    EXPECT_TRUE(resumed);
    r.engine.run_until(3000);
    EXPECT_TRUE(r.wl.faults().crashed());
    r.wl.faults().reset_on_restart();
    EXPECT_TRUE(r.wl.faults().healthy());
}

TEST(Workload, SameSeedSameTrace)
{
    WorkloadConfig c;
    c.mutation_rate_per_s = 1e5;
    c.cores = 3;
    c.run_duration_ns = kNsPerMs;
    Rig a(c, 700, 9), b(c, 700, 9);
    a.wl.start(a.handler);
    b.wl.start(b.handler);
    a.engine.run_until(c.run_duration_ns);
    b.engine.run_until(c.run_duration_ns);
    EXPECT_EQ(a.trace.to_jsonl(), b.trace.to_jsonl());
}
