#pragma once

#include "fitosim/host_model.hpp"
#include "fitosim/sim_core.hpp"
#include "fitosim/trace.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace fitosim
{
    enum class EpisodeKind : std::uint8_t
    {
        Crash,
        Slow,
    };

    std::string_view to_string(EpisodeKind k) noexcept;

    struct FaultEpisode
    {
        EpisodeKind kind = EpisodeKind::Crash;
        SimTime start = 0;
        SimTime duration = 0;
    };

    enum class RequestMode : std::uint8_t
    {
        Closed,
        Open,
    };

    struct WorkloadConfig
    {
        // Per-resource Poisson mutation rate (lambda).
        double mutation_rate_per_s = 0.0;
        // Open-loop request arrival rate (all cores together).
        double event_arrival_rate_per_s = 0.0;
        RequestMode request_mode = RequestMode::Closed;
        std::uint32_t cores = 1;
        // Host work per request before its offload decision is triggered.
        SimTime request_service_ns = 0;
        SimTime run_duration_ns = 10 * kNsPerMs;
        // Stop once this many requests have completed (0 = run for the full duration).
        std::uint64_t max_requests = 0;
        std::uint32_t targets_per_txn = 1;
        ResourceCounts resource_counts;
        std::vector<FaultEpisode> fault_episodes;

        void validate() const;
    };

    // Poisson arrivals: exponential gaps with mean 1/rate, integer ns.
    class PoissonProcess
    {
      public:
        PoissonProcess(double rate_per_s, Rng rng) noexcept : rate_per_s_(rate_per_s), rng_(rng) {}

        bool active() const noexcept { return rate_per_s_ > 0.0; }
        SimTime next_gap() noexcept { return rng_.exponential_ns(1e9 / rate_per_s_); }

      private:
        double rate_per_s_;
        Rng rng_;
    };

    // Stream names shared by the generators and the live workload.
    Rng mutation_stream(std::uint64_t seed, ResourceId resource);
    Rng arrival_stream(std::uint64_t seed);
    Rng core_stream(std::uint64_t seed, std::uint32_t core);

    // Mutation times in [0, duration) for one resource's process (resource 0 by default).
    std::vector<SimTime> gen_mutations(double rate_per_s, SimTime duration, std::uint64_t seed, ResourceId resource = 0);
    // Open-loop arrival times in [0, duration).
    std::vector<SimTime> gen_requests(double rate_per_s, SimTime duration, std::uint64_t seed);

    struct Trigger
    {
        std::uint32_t core = 0;
        std::uint64_t request = 0;
        std::uint64_t core_seq = 0;
        // Unique per request; what a predictor has to guess.
        std::uint64_t key = 0;
        std::vector<ResourceId> resources;
        std::string_view event_kind;
        SimTime arrived_at = 0;
        SimTime triggered_at = 0;
    };

    // Ground truth of the NIC actor's health. Drives the simulated NIC; host
    // protocol logic has no access to it.
    class NicFaultState
    {
      public:
        bool crashed() const noexcept { return crashed_; }
        bool slow() const noexcept { return slow_; }
        bool healthy() const noexcept { return !crashed_ && !slow_; }

        // Runs `fn` once the current slow episode ends (immediately if not slow).
        void when_resumed(std::function<void()> fn);

        void begin(EpisodeKind kind);
        void end_slow();
        // A restarted agent is a fresh incarnation with no active episode.
        void reset_on_restart();

      private:
        bool crashed_ = false;
        bool slow_ = false;
        std::vector<std::function<void()>> on_resume_;
    };

    class RequestHandler
    {
      public:
        virtual ~RequestHandler() = default;
        virtual void on_trigger(const Trigger &trigger) = 0;
        virtual void on_mutation(ResourceId resource) = 0;
    };

    enum class RequestStatus : std::uint8_t
    {
        Ok,
        Failed,
    };

    class Workload
    {
      public:
        Workload(Engine &engine, Trace &trace, const HostModel &host, WorkloadConfig config, std::uint64_t seed);

        const WorkloadConfig &config() const noexcept { return config_; }
        NicFaultState &faults() noexcept { return faults_; }
        const NicFaultState &faults() const noexcept { return faults_; }

        void start(RequestHandler &handler);

        // The protocol applied (or gave up on) the decision for `core`.
        void complete(std::uint32_t core, RequestStatus status);

        // The next trigger `core` will issue. Used only by the oracle predictor.
        const Trigger &peek_next(std::uint32_t core) const { return cores_.at(core).next; }

        std::uint64_t requests_completed() const noexcept { return completed_; }
        std::uint64_t requests_failed() const noexcept { return failed_; }
        std::uint64_t mutations_generated() const noexcept { return mutations_generated_; }

      private:
        struct CoreState
        {
            Rng rng{0};
            std::uint64_t seq = 0;
            Trigger next;
            std::optional<Trigger> active;
            std::deque<SimTime> queued_arrivals;
            bool busy = false;
        };

        void draw_next(std::uint32_t core);
        void begin_request(std::uint32_t core, SimTime arrived_at);
        void schedule_mutation(ResourceId r);
        void schedule_arrival();

        Engine &engine_;
        Trace &trace_;
        const HostModel &host_;
        WorkloadConfig config_;
        std::uint64_t seed_;
        RequestHandler *handler_ = nullptr;
        NicFaultState faults_;
        std::vector<CoreState> cores_;
        std::vector<PoissonProcess> mutation_processes_;
        PoissonProcess arrivals_;
        std::uint32_t next_core_ = 0;
        std::uint64_t next_request_ = 0;
        std::uint64_t completed_ = 0;
        std::uint64_t failed_ = 0;
        std::uint64_t mutations_generated_ = 0;
    };
} // namespace fitosim
