#include "fitosim/sim_core.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace fitosim;

TEST(Engine, ScheduleFiresAtOffset)
{
    Engine e;
    SimTime seen = 0;
    e.schedule(750, ModuleId::Test, [&] { seen = e.now(); });
    e.run_until(1000);
    EXPECT_EQ(seen, 750u);
}

TEST(Engine, SameTimeEventsRunInInsertionOrder)
{
    Engine e;
    std::vector<int> order;
    for (int i = 0; i < 5; ++i)
        e.schedule_at(10, ModuleId::Test, [&order, i] { order.push_back(i); });
    e.run_until(10);
    EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(Engine, ZeroDelayFiresAfterCurrentEventAtSameTime)
{
    Engine e;
    std::vector<std::pair<int, SimTime>> log;
    e.schedule_at(100, ModuleId::Test, [&] {
        e.schedule(0, ModuleId::Test, [&] { log.emplace_back(2, e.now()); });
        log.emplace_back(1, e.now());
    });
    e.schedule_at(100, ModuleId::Test, [&] { log.emplace_back(3, e.now()); });
    e.run_until(100);
    ASSERT_EQ(log.size(), 3u);
    // The zero-delay event got a later sequence than the second pre-scheduled one.
    EXPECT_EQ(log[0], std::make_pair(1, SimTime{100}));
    EXPECT_EQ(log[1], std::make_pair(3, SimTime{100}));
    EXPECT_EQ(log[2], std::make_pair(2, SimTime{100}));
}

TEST(Engine, EmptyQueueAdvancesToDeadline)
{
    Engine e;
    EXPECT_EQ(e.now(), 0u);
    EXPECT_EQ(e.run_until(1'000'000), 0u);
    EXPECT_EQ(e.now(), 1'000'000u);
}

TEST(Engine, DeadlineIsInclusive)
{
    Engine e;
    for (SimTime t : {1, 2, 3})
        e.schedule_at(t, ModuleId::Test, [] {});
    EXPECT_EQ(e.run_until(2), 2u);
    EXPECT_EQ(e.now(), 2u);
    EXPECT_EQ(e.pending(), 1u);
}

TEST(Engine, NowInsideHandler)
{
    Engine e;
    SimTime seen = 0;
    e.schedule_at(426, ModuleId::Test, [&] { seen = e.now(); });
    e.run_until(20 * kNsPerMs);
    EXPECT_EQ(seen, 426u);
    EXPECT_EQ(e.now(), 20 * kNsPerMs);
}

TEST(Engine, HandlerErrorIdentifiesEvent)
{
    Engine e;
    e.schedule_at(5, ModuleId::Test, [] {});
    e.schedule_at(7, ModuleId::Nic, [] { throw std::runtime_error("boom"); });
    try
    {
        e.run_until(100);
        FAIL() << "expected SimulationError";
    }
    catch (const SimulationError &err)
    {
        EXPECT_EQ(err.fire_at, 7u);
        EXPECT_EQ(err.sequence, 1u);
        EXPECT_EQ(err.target, ModuleId::Nic);
        EXPECT_NE(std::string(err.what()).find("boom"), std::string::npos);
    }
}

TEST(Engine, StopRequestEndsAtLastEvent)
{
    Engine e;
    e.schedule_at(50, ModuleId::Test, [&] { e.request_stop(); });
    e.schedule_at(60, ModuleId::Test, [] {});
    e.run_until(1000);
    EXPECT_EQ(e.now(), 50u);
    EXPECT_EQ(e.pending(), 1u);
}

TEST(Engine, DeadlineBeforeNowRejected)
{
    Engine e;
    e.run_until(10);
    EXPECT_THROW(e.run_until(5), std::logic_error);
}

// Property: random schedules dispatch in nondecreasing time, and
// scheduled = dispatched + pending.
TEST(EngineProperty, NoTimeTravelAndConservation)
{
    for (std::uint64_t seed = 1; seed <= 50; ++seed)
    {
        Engine e;
        Rng rng(seed);
        std::vector<SimTime> fired;
        std::function<void()> spawn = [&] {
            fired.push_back(e.now());
            if (rng.below(3) != 0)
                e.schedule(rng.below(100), ModuleId::Test, spawn);
        };
        for (int i = 0; i < 20; ++i)
            e.schedule(rng.below(1000), ModuleId::Test, spawn);
        e.run_until(500);
        for (std::size_t i = 1; i < fired.size(); ++i)
            ASSERT_LE(fired[i - 1], fired[i]);
        EXPECT_EQ(e.scheduled(), e.dispatched() + e.pending());
    }
}

TEST(Rng, SameSeedSameSequence)
{
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i)
    {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs |= x != c.next_u64();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, StreamsAreIndependentByName)
{
    Rng a = Rng::stream(7, "nic/compute");
    Rng b = Rng::stream(7, "nic/predictor");
    Rng a2 = Rng::stream(7, "nic/compute");
    EXPECT_NE(a.next_u64(), b.next_u64());
    a2.next_u64();
    EXPECT_EQ(a.next_u64(), a2.next_u64());
}

TEST(Rng, UniformAndBelowRanges)
{
    Rng r(1);
    for (int i = 0; i < 10000; ++i)
    {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(r.below(7), 7u);
    }
}

// Sample mean of the exponential within 4 standard errors of the target.
TEST(Rng, ExponentialMean)
{
    Rng r(99);
    const double mean = 300.0;
    const int n = 200000;
    double sum = 0;
    for (int i = 0; i < n; ++i)
        sum += static_cast<double>(r.exponential_ns(mean));
    const double se = mean / std::sqrt(double(n));
    EXPECT_NEAR(sum / n, mean, 4 * se);
}

TEST(Rng, BernoulliEdges)
{
    Rng r(3);
    for (int i = 0; i < 1000; ++i)
    {
        EXPECT_TRUE(r.bernoulli(1.0));
        EXPECT_FALSE(r.bernoulli(0.0));
    }
}
