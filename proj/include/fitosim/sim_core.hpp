#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fitosim
{
    // Virtual time in integer nanoseconds. All arithmetic is exact.
    using SimTime = std::uint64_t;

    inline constexpr SimTime kNsPerUs = 1'000;
    inline constexpr SimTime kNsPerMs = 1'000'000;
    inline constexpr SimTime kNsPerSec = 1'000'000'000;

    // Which actor an event belongs to. Only used to identify failing events.
    enum class ModuleId : std::uint8_t
    {
        Sim,
        Interconnect,
        Host,
        Nic,
        Workload,
        Watchdog,
        Bilateral,
        Test,
    };

    std::string_view to_string(ModuleId id) noexcept;

    struct EventHandle
    {
        std::uint64_t sequence = 0;
        SimTime fire_at = 0;
    };

    struct SimEvent
    {
        SimTime fire_at = 0;
        std::uint64_t sequence = 0;
        ModuleId target = ModuleId::Sim;
        std::function<void()> payload;
    };

    // Raised by run_until when an event handler throws. Identifies the event.
    class SimulationError : public std::runtime_error
    {
      public:
        SimulationError(const SimEvent &ev, const std::string &what);

        SimTime fire_at;
        std::uint64_t sequence;
        ModuleId target;
    };

    // Single-threaded discrete-event engine. Events are dispatched in
    // (fire_at, sequence) order; equal timestamps run in insertion order.
    class Engine
    {
      public:
        Engine() = default;
        Engine(const Engine &) = delete;
        Engine &operator=(const Engine &) = delete;

        EventHandle schedule(SimTime delay, ModuleId target, std::function<void()> payload);
        EventHandle schedule_at(SimTime at, ModuleId target, std::function<void()> payload);

        // Dispatches every event with fire_at <= deadline, then advances the
        // clock to the deadline. A stop request ends the run early at the
        // time of the last dispatched event.
        std::uint64_t run_until(SimTime deadline);

        void request_stop() noexcept { stop_requested_ = true; }
        bool stopped() const noexcept { return stop_requested_; }

        SimTime now() const noexcept { return now_; }
        bool finished() const noexcept { return finished_; }
        void finish() noexcept { finished_ = true; }

        std::uint64_t scheduled() const noexcept { return next_sequence_; }
        std::uint64_t dispatched() const noexcept { return dispatched_; }
        std::size_t pending() const noexcept { return queue_.size(); }

      private:
        struct Later
        {
            bool operator()(const SimEvent &a, const SimEvent &b) const noexcept
            {
                if (a.fire_at != b.fire_at)
                    return a.fire_at > b.fire_at;
                return a.sequence > b.sequence;
            }
        };

        std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
        SimTime now_ = 0;
        std::uint64_t next_sequence_ = 0;
        std::uint64_t dispatched_ = 0;
        bool stop_requested_ = false;
        bool finished_ = false;
    };

    // xoshiro256** seeded through splitmix64. Streams for independent
    // consumers are derived from the master seed and a stream name, so
    // adding a consumer never perturbs another consumer's draws.
    class Rng
    {
      public:
        static constexpr std::string_view kAlgorithm = "xoshiro256**/splitmix64";

        explicit Rng(std::uint64_t seed = 0) noexcept;

        static Rng stream(std::uint64_t master_seed, std::string_view name) noexcept;

        std::uint64_t next_u64() noexcept;
        // Uniform in [0, 1) with 53 bits of precision.
        double uniform() noexcept;
        // Uniform integer in [0, bound). bound must be > 0.
        std::uint64_t below(std::uint64_t bound) noexcept;
        bool bernoulli(double p) noexcept;
        // Exponential with the given mean, rounded to the nearest ns.
        SimTime exponential_ns(double mean_ns) noexcept;

        std::uint64_t seed() const noexcept { return seed_; }

      private:
        std::uint64_t seed_;
        std::uint64_t s_[4];
    };

    std::uint64_t splitmix64(std::uint64_t &state) noexcept;
    std::uint64_t fnv1a64(std::string_view text) noexcept;
} // namespace fitosim
