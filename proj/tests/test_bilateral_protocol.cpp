#include "fitosim/bilateral_protocol.hpp"
#include "fitosim/experiment.hpp"

#include <gtest/gtest.h>

using namespace fitosim;

namespace
{
    struct World
    {
        Engine engine;
        Trace trace;
        Interconnect link;
        HostModel host;
        AgentSupervisor supervisor;
        Workload workload;
        BilateralSimulation sim;

        static WorkloadConfig quiet()
        {
            WorkloadConfig w;
            w.request_mode = RequestMode::Open;
            w.event_arrival_rate_per_s = 1e-6;
            w.resource_counts = {4, 0, 0};
            return w;
        }

        World()
            : link(engine, trace, {}), host(engine, trace, {4, 0, 0}), supervisor(engine, trace, 1000),
              workload(engine, trace, host, quiet(), 1), sim(engine, trace, link, host, supervisor, workload, {})
        {
            sim.start();
        }

        void at(SimTime t, std::function<void()> fn)
        {
            engine.schedule_at(t, ModuleId::Test, std::move(fn));
            engine.run_until(t);
        }
    };

    std::vector<const TraceRecord *> of(const Trace &t, TraceKind k)
    {
        std::vector<const TraceRecord *> out;
        for (const auto &r : t.records())
            if (r.kind == k)
                out.push_back(&r);
        return out;
    }

    ExperimentConfig base()
    {
        ExperimentConfig c;
        c.mode = Mode::Bilateral;
        c.workload.run_duration_ns = 5 * kNsPerMs;
        c.workload.resource_counts = {4, 0, 0};
        return c;
    }
} // namespace

TEST(Bilateral, HealthySwapCompletesInOneRoundTrip)
{
    World w;
    SwapId id = 0;
    w.at(0, [&] { id = w.sim.initiate_swap({1}, 77); });
    EXPECT_TRUE(w.sim.held(1));
    w.engine.run_until(749);
    EXPECT_TRUE(w.sim.ledger().resolved.empty());
    w.engine.run_until(750);
    ASSERT_EQ(w.sim.ledger().resolved.size(), 1u);
    const SwapFrame &f = w.sim.ledger().resolved[0];
    EXPECT_EQ(f.swap_id, id);
    EXPECT_EQ(f.outcome, SwapOutcome::Completed);
    EXPECT_EQ(f.resolved_at, 750u);
    EXPECT_EQ(f.host_committed, f.nic_committed);
    EXPECT_EQ(w.host.resource(1).applied_payload, 77u);
    EXPECT_EQ(w.sim.nic_state()[1], (ResourceFinal{1, 77}));
    EXPECT_FALSE(w.sim.held(1));
}

TEST(Bilateral, CrashedPeerLeavesStateUntouched)
{
    World w;
    w.workload.faults().begin(EpisodeKind::Crash);
    w.at(0, [&] { w.sim.initiate_swap({2}, 5); });
    w.engine.run_until(750);
    ASSERT_EQ(w.sim.ledger().resolved.size(), 1u);
    const SwapFrame &f = w.sim.ledger().resolved[0];
    EXPECT_EQ(f.outcome, SwapOutcome::NotCompleted);
    EXPECT_EQ(f.resolved_at, 750u);
    EXPECT_TRUE(f.host_committed.empty());
    EXPECT_EQ(w.host.resource(2).version, 0u);
    EXPECT_EQ(w.host.resource(2).applied_payload, 0u);
    EXPECT_EQ(w.sim.counters().restarts, 1u);
}

TEST(Bilateral, CrashAfterReflectionStillCompletes)
{
    World w;
    w.at(0, [&] { w.sim.initiate_swap({0}, 9); });
    w.at(500, [&] { w.workload.faults().begin(EpisodeKind::Crash); });
    w.engine.run_until(750);
    EXPECT_EQ(w.sim.ledger().resolved.at(0).outcome, SwapOutcome::Completed);
}

TEST(Bilateral, MutationDuringSwapIsDeferred)
{
    World w;
    w.at(0, [&] { w.sim.initiate_swap({1}, 11); });
    w.at(300, [&] { w.sim.on_mutation(1); });
    EXPECT_EQ(w.host.resource(1).version, 0u);
    w.engine.run_until(750);
    EXPECT_EQ(w.host.resource(1).version, 2u);
    EXPECT_EQ(w.sim.counters().deferred_mutations, 1u);

    // The swap lands first, then the mutation that arrived at 300.
    std::size_t resolve = 0, mutate = 0;
    for (std::size_t i = 0; i < w.trace.size(); ++i)
    {
        if (w.trace[i].kind == TraceKind::SwapResolve)
            resolve = i;
        if (w.trace[i].kind == TraceKind::Mutate)
            mutate = i;
    }
    ASSERT_GT(mutate, resolve);
    EXPECT_EQ(w.trace[mutate].at, 750u);
    EXPECT_EQ(w.trace[mutate].get_int("deferred_from"), 300);
    EXPECT_EQ(w.trace[mutate].get_int("version"), 2);
}

TEST(Bilateral, SwapOnHeldResourceWaits)
{
    World w;
    SwapId second = 0;
    w.at(0, [&] { w.sim.initiate_swap({0, 1}, 1); });
    w.at(100, [&] { second = w.sim.initiate_swap({1}, 2); });
    EXPECT_EQ(w.sim.counters().swaps_queued, 1u);
    w.engine.run_until(2000);
    ASSERT_EQ(w.sim.ledger().resolved.size(), 2u);
    const SwapFrame &f = w.sim.ledger().resolved[1];
    EXPECT_EQ(f.swap_id, second);
    EXPECT_EQ(f.initiated_at, 750u);
    EXPECT_EQ(f.resolved_at, 1500u);
    EXPECT_EQ(w.host.resource(1).version, 2u);
    EXPECT_EQ(w.host.resource(1).applied_payload, 2u);

    const auto initiates = of(w.trace, TraceKind::SwapInitiate);
    ASSERT_EQ(initiates.size(), 3u);
    EXPECT_EQ(initiates[1]->get_str("status"), "held");
    EXPECT_EQ(initiates[2]->get_str("status"), "started");
    EXPECT_EQ(initiates[2]->get_int("queued_since"), 100);
}

TEST(Bilateral, RejectsBadSwaps)
{
    World w;
    EXPECT_THROW(w.sim.initiate_swap({}, 1), std::invalid_argument);
    EXPECT_THROW(w.sim.initiate_swap({9}, 1), std::out_of_range);
}

TEST(Bilateral, EveryFrameResolvesAtExactlyOneRoundTrip)
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        ExperimentConfig c = base();
        c.seed = seed;
        c.workload.cores = 1 + seed % 3;
        c.workload.mutation_rate_per_s = 1e5 * static_cast<double>(seed);
        c.workload.targets_per_txn = 1 + seed % 2;
        if (seed % 2)
            c.workload.fault_episodes = {{EpisodeKind::Crash, kNsPerMs, 0},
                                         {EpisodeKind::Slow, 2 * kNsPerMs, 100 * kNsPerUs}};
        const RunResult r = run_single(c, Mode::Bilateral);

        std::size_t started = 0;
        for (const auto *s : of(r.trace, TraceKind::SwapInitiate))
            started += s->get_str("status") == "started";
        const auto resolved = of(r.trace, TraceKind::SwapResolve);
        // Frames still open at the end of the run are the only unresolved ones.
        EXPECT_LE(started - resolved.size(), c.workload.cores);
        for (const auto *s : resolved)
        {
            EXPECT_EQ(s->get_int("window"), 750);
            const auto outcome = s->get_str("outcome");
            EXPECT_TRUE(outcome == "completed" || outcome == "not-completed");
            if (outcome == "completed")
                EXPECT_EQ(s->get_list("versions"), s->get_list("nic_versions"));
        }
        EXPECT_EQ(r.asymmetric_swaps, 0u);
        EXPECT_TRUE(of(r.trace, TraceKind::CommitOutcome).empty());
        EXPECT_TRUE(of(r.trace, TraceKind::WatchdogArm).empty());
        EXPECT_TRUE(r.consistency_errors.empty()) << "seed " << seed;
        EXPECT_EQ(r.final_state, r.replayed_state);
    }
}

TEST(Bilateral, CrashDetectedWithinTwoRoundTrips)
{
    ExperimentConfig c = base();
    c.workload.fault_episodes = {{EpisodeKind::Crash, 2 * kNsPerMs + 123, 0}};
    const RunResult r = run_single(c, Mode::Bilateral);
    const auto restarts = of(r.trace, TraceKind::AgentRestart);
    ASSERT_EQ(restarts.size(), 1u);
    EXPECT_LE(restarts[0]->at, 2 * kNsPerMs + 123 + 2 * 750);
    EXPECT_EQ(restarts[0]->get_str("reason"), "swap-not-completed");

    // The request caught by the crash is serviced again after recovery.
    SimTime after = 0;
    for (const auto *s : of(r.trace, TraceKind::SwapResolve))
        if (s->get_str("outcome") == "completed" && s->at > restarts[0]->at)
            after = s->at;
    EXPECT_GT(after, 0u);
    EXPECT_EQ(r.online.requests_failed, 0u);
}

TEST(Bilateral, Deterministic)
{
    ExperimentConfig c = base();
    c.workload.cores = 2;
    c.workload.mutation_rate_per_s = 3e5;
    EXPECT_EQ(run_single(c, Mode::Bilateral).trace.to_jsonl(), run_single(c, Mode::Bilateral).trace.to_jsonl());
}
