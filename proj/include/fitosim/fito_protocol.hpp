#pragma once

#include "fitosim/host_model.hpp"
#include "fitosim/interconnect.hpp"
#include "fitosim/sim_core.hpp"
#include "fitosim/trace.hpp"
#include "fitosim/workload.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fitosim
{
    struct OptimizationFlags
    {
        bool wc_enabled = false;
        bool wt_enabled = false;
        bool prestaging_enabled = false;
        bool prefetching_enabled = false;

        static OptimizationFlags all(bool on) noexcept { return {on, on, on, on}; }
        friend bool operator==(const OptimizationFlags &, const OptimizationFlags &) = default;
    };

    // How the host learns that a decision is ready.
    enum class NotifyMode : std::uint8_t
    {
        // Decision is a posted NIC->host write; the host commits on arrival.
        Polled,
        // Decision stays in NIC memory; MSI-X wakes the host, which reads it over MMIO.
        Msix,
    };

    enum class RetryMode : std::uint8_t
    {
        // The abort and a fresh snapshot go back to the agent, which re-decides.
        AgentRedecide,
        // The host immediately re-forwards the event with fresh state.
        AutoRetry,
    };

    enum class ComputeDistribution : std::uint8_t
    {
        Exponential,
        Constant,
    };

    enum class WcFlushPolicy : std::uint8_t
    {
        // Rely on capacity / timeout flushes.
        Timeout,
        // Host flushes right after posting each event.
        Explicit,
    };

    struct FitoOptions
    {
        NotifyMode notify_mode = NotifyMode::Polled;
        RetryMode retry_mode = RetryMode::AgentRedecide;
        // Aborts tolerated per request before it fails; 0 = unlimited.
        std::uint32_t retry_limit = 0;
        WcFlushPolicy wc_flush_policy = WcFlushPolicy::Timeout;
        bool idle_heartbeats = true;
        // Watchdog check interval; 0 means a quarter of the period.
        SimTime watchdog_tick_ns = 0;
        // Probability that a prestaged decision predicts the next trigger.
        double prestage_accuracy = 1.0;
        ComputeDistribution compute_distribution = ComputeDistribution::Exponential;
        SimTime nic_poll_interval_ns = 500;
        SimTime agent_restart_ns = 100 * kNsPerUs;
        std::uint32_t event_bytes = 64;
        std::uint32_t decision_bytes = 64;

        void validate() const;
    };

    struct PrestageSlot
    {
        struct Staged
        {
            std::uint64_t predicted_key = 0;
            SimTime staged_at = 0;
            Transaction txn;
        };

        std::uint32_t core = 0;
        std::optional<Staged> staged;
        std::uint64_t hit_count = 0;
        std::uint64_t miss_count = 0;
    };

    struct PrestageResult
    {
        bool hit = false;
        std::optional<Transaction> txn;
    };

    struct WatchdogState
    {
        SimTime period_ns = 20 * kNsPerMs;
        SimTime tick_ns = 5 * kNsPerMs;
        SimTime last_heartbeat_at = 0;
        std::uint64_t kills = 0;
        std::uint64_t false_positive_kills = 0;
    };

    struct KillEvent
    {
        SimTime at = 0;
        SimTime silence_ns = 0;
        bool false_positive = false;
    };

    struct PollResult
    {
        std::vector<CommitOutcome> outcomes;
        SimTime completes_at = 0;
        bool cache_hit = false;
    };

    struct FitoCounters
    {
        std::uint64_t events_forwarded = 0;
        std::uint64_t decisions = 0;
        std::uint64_t committed = 0;
        std::uint64_t aborted = 0;
        std::uint64_t failed_requests = 0;
        std::uint64_t prestage_hits = 0;
        std::uint64_t prestage_misses = 0;
        std::uint64_t kills = 0;
        std::uint64_t false_positive_kills = 0;
        std::uint64_t restarts = 0;
        std::uint64_t stale_decisions_dropped = 0;
        std::uint64_t heartbeats = 0;
    };

    // Wave-style offload pipeline: events forward over the host->NIC queue,
    // decisions come back over the NIC->host queue, and the host commits or
    // aborts each one against current state. Host and NIC are two actors on
    // the one event loop that share state only through the interconnect.
    class FitoSimulation final : public RequestHandler
    {
      public:
        FitoSimulation(Engine &engine, Trace &trace, Interconnect &link, HostModel &host, AgentSupervisor &supervisor,
                       Workload &workload, FitoOptions options, OptimizationFlags flags, HostCosts costs,
                       std::uint64_t seed);

        // Arms the watchdog and heartbeats and starts the workload.
        void start();

        // --- host side ---
        // Snapshots the trigger's resources (fixing T1) and sends the event.
        MessageId forward_event(const Trigger &trigger);
        std::optional<KillEvent> watchdog_tick();

        // --- NIC side ---
        Transaction txn_create(std::uint32_t core, std::uint64_t payload, const HostSnapshot &snapshot);
        void txns_commit(std::vector<Transaction> batch);
        PollResult poll_txns();
        // Returns when the prefetched outcome line lands (now() when disabled).
        SimTime prefetch_txns();
        void prestage_decision(std::uint32_t core, std::uint64_t predicted_key, Transaction txn);
        PrestageResult consume_prestaged(std::uint32_t core, std::uint64_t actual_key);

        const PrestageSlot &slot(std::uint32_t core) const { return slots_.at(core); }
        const WatchdogState &watchdog() const noexcept { return watchdog_; }
        const FitoCounters &counters() const noexcept { return counters_; }
        const OptimizationFlags &flags() const noexcept { return flags_; }

        void on_trigger(const Trigger &trigger) override;
        void on_mutation(ResourceId resource) override;

        static constexpr Address kOutcomeRing = 0x10;
        static Address slot_address(std::uint32_t core) noexcept { return 0x1000 + core; }
        static Address txn_address(std::uint32_t core) noexcept { return 0x2000 + core; }

      private:
        struct EventMsg
        {
            std::uint32_t core = 0;
            std::uint64_t key = 0;
            std::uint64_t epoch = 0;
            std::uint64_t incarnation = 0;
            HostSnapshot snapshot;
        };

        struct Decision
        {
            Transaction txn;
            std::uint64_t epoch = 0;
            SimTime nic_received_at = 0;
            // False for batches handed to txns_commit() directly rather than
            // produced for a host request.
            bool solicited = true;
        };

        struct RingEntry
        {
            CommitOutcome outcome;
            std::uint32_t core = 0;
            std::uint64_t epoch = 0;
            std::uint64_t incarnation = 0;
            std::vector<ResourceId> resources;
            std::optional<HostSnapshot> fresh;
        };

        struct HostCore
        {
            std::optional<Trigger> trigger;
            std::uint64_t epoch = 0;
            std::uint32_t aborts = 0;
            bool prep_done = false;
            bool waiting_restart = false;
        };

        struct ViewEntry
        {
            std::uint64_t version = 0;
            SimTime as_of = 0;
        };

        struct DecisionMeta
        {
            std::uint64_t epoch = 0;
            SimTime received_at = 0;
        };

        // Ring entries [begin, end) made visible by one poll.
        struct RingWindow
        {
            std::size_t begin = 0;
            std::size_t end = 0;
            SimTime completes_at = 0;
            bool cache_hit = false;
        };

        // host
        void begin_attempt(std::uint32_t core, bool allow_prestage);
        void host_read(std::uint32_t core, Address address, std::uint32_t reads, std::function<void()> then);
        void read_chain(Address address, std::uint32_t left, std::shared_ptr<std::function<void()>> then);
        void host_on_decision(const Decision &d, SimTime notified_at);
        void commit_at_host(std::uint32_t core, Transaction txn, std::vector<Attr> extra, bool solicited = true);
        void finish_request(std::uint32_t core, RequestStatus status);
        void heartbeat() noexcept;
        void schedule_watchdog();
        void restart(std::string_view reason);

        // NIC
        bool nic_ready(std::uint64_t incarnation) const noexcept;
        void nic_on_event(EventMsg ev, SimTime received_at);
        void nic_decide(EventMsg ev, SimTime received_at);
        void nic_prestage(std::uint32_t core);
        void nic_update_view(const HostSnapshot &snapshot);
        void nic_ensure_polling();
        void nic_poll();
        RingWindow poll_ring();
        void nic_heartbeat_loop();
        SimTime sample_compute();
        std::uint64_t decision_payload(std::uint64_t key, const HostSnapshot &snapshot) const noexcept;

        Engine &engine_;
        Trace &trace_;
        Interconnect &link_;
        HostModel &host_;
        AgentSupervisor &supervisor_;
        Workload &workload_;
        FitoOptions options_;
        OptimizationFlags flags_;
        HostCosts costs_;
        Rng compute_rng_;
        Rng predictor_rng_;

        std::vector<HostCore> host_cores_;
        std::vector<RingEntry> ring_;
        WatchdogState watchdog_;
        FitoCounters counters_;

        // NIC-side derived state; discarded on restart.
        bool nic_alive_ = true;
        std::uint64_t nic_incarnation_ = 0;
        std::vector<ViewEntry> nic_view_;
        std::vector<PrestageSlot> slots_;
        std::set<TxnId> outstanding_;
        std::unordered_map<TxnId, DecisionMeta> pending_meta_;
        // Per core: staged txn the NIC still awaits an outcome for (0 = none).
        std::vector<TxnId> prestaged_txn_;
        std::size_t ring_cursor_ = 0;
        bool poll_scheduled_ = false;
        std::uint64_t slot_writes_ = 0;
        TxnId next_txn_ = 1;
    };
} // namespace fitosim
