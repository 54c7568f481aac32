#pragma once

#include "fitosim/host_model.hpp"
#include "fitosim/interconnect.hpp"
#include "fitosim/sim_core.hpp"
#include "fitosim/trace.hpp"
#include "fitosim/workload.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

namespace fitosim
{
    enum class SwapOutcome : std::uint8_t
    {
        Completed,
        NotCompleted,
    };

    std::string_view to_string(SwapOutcome o) noexcept;

    using SwapId = std::uint64_t;

    struct SwapFrame
    {
        SwapId swap_id = 0;
        SimTime initiated_at = 0;
        SimTime window_ns = 0;
        std::vector<ResourceId> resources;
        HostSnapshot host_view;
        std::uint64_t nic_payload = 0;
        // Peer participation, sampled at the reflection point.
        bool participated = false;
        std::optional<SwapOutcome> outcome;
        SimTime resolved_at = 0;
        std::int64_t core = -1;
        // Versions each side committed; equal for every Completed frame.
        std::vector<std::uint64_t> host_committed;
        std::vector<std::uint64_t> nic_committed;
    };

    struct SwapLedger
    {
        std::vector<SwapFrame> resolved;
        // Last resolved swap per resource (0 = none).
        std::vector<SwapId> last_swap;
    };

    struct BilateralOptions
    {
        // Backoff before re-servicing after a failed frame; 0 means one round-trip.
        SimTime reinit_backoff_ns = 0;
    };

    struct BilateralCounters
    {
        std::uint64_t swaps_initiated = 0;
        std::uint64_t swaps_queued = 0;
        std::uint64_t completed = 0;
        std::uint64_t not_completed = 0;
        std::uint64_t deferred_mutations = 0;
        std::uint64_t restarts = 0;
        std::uint64_t reserviced = 0;
    };

    // Bilateral swap: host state and NIC decision cross in one frame whose
    // outcome is known exactly one round-trip after it starts.
    class BilateralSimulation final : public RequestHandler
    {
      public:
        BilateralSimulation(Engine &engine, Trace &trace, Interconnect &link, HostModel &host,
                            AgentSupervisor &supervisor, Workload &workload, BilateralOptions options);

        void start();

        // Starts a frame now, or queues it behind a frame already holding one
        // of the resources. Returns the swap id either way.
        SwapId initiate_swap(std::vector<ResourceId> resources, std::uint64_t nic_payload, std::int64_t core = -1);
        const SwapFrame &resolve_swap(SwapId id);
        // Services one workload event with one frame.
        SwapId bilateral_decision_loop(const Trigger &trigger);

        bool held(ResourceId r) const { return holder_.at(r) != 0; }
        const SwapLedger &ledger() const noexcept { return ledger_; }
        const BilateralCounters &counters() const noexcept { return counters_; }
        // NIC-side committed copy of each resource: (version, payload).
        const std::vector<ResourceFinal> &nic_state() const noexcept { return nic_state_; }

        void on_trigger(const Trigger &trigger) override;
        void on_mutation(ResourceId resource) override;

      private:
        struct Queued
        {
            SwapId id;
            SimTime since;
        };

        void begin_frame(SwapId id, SimTime queued_since);
        bool can_start(const SwapFrame &f) const;
        void start_queued();
        void restart();

        Engine &engine_;
        Trace &trace_;
        Interconnect &link_;
        HostModel &host_;
        AgentSupervisor &supervisor_;
        Workload &workload_;
        BilateralOptions options_;

        SwapId next_swap_ = 1;
        std::unordered_map<SwapId, SwapFrame> active_;
        std::deque<Queued> queued_;
        std::vector<SwapId> holder_;
        // Held-back mutations: (arrived_at, resource), kept in arrival order.
        std::vector<std::pair<SimTime, ResourceId>> deferred_;
        std::vector<Trigger> awaiting_restart_;
        std::unordered_map<SwapId, Trigger> servicing_;
        std::vector<ResourceFinal> nic_state_;
        bool nic_alive_ = true;
        SwapLedger ledger_;
        BilateralCounters counters_;
    };
} // namespace fitosim
