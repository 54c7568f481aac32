#pragma once

#include "fitosim/interconnect.hpp"
#include "fitosim/sim_core.hpp"
#include "fitosim/trace.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace fitosim
{
    using ResourceId = std::uint32_t;
    using TxnId = std::uint64_t;

    enum class ResourceType : std::uint8_t
    {
        Thread,
        Page,
        Flow,
    };

    std::string_view to_string(ResourceType t) noexcept;

    struct ResourceCounts
    {
        std::uint32_t threads = 4;
        std::uint32_t pages = 0;
        std::uint32_t flows = 0;

        std::uint32_t total() const noexcept { return threads + pages + flows; }
    };

    // Host kernel work per applied decision. `kernel_prep_ns` is the part
    // that can overlap with an outstanding prefetch.
    struct HostCosts
    {
        SimTime kernel_prep_ns = 0;
        SimTime context_switch_ns = 0;

        SimTime total() const noexcept { return kernel_prep_ns + context_switch_ns; }
    };

    struct ResourceState
    {
        ResourceId id = 0;
        ResourceType type = ResourceType::Thread;
        std::uint64_t version = 0;
        SimTime last_mutated_at = 0;
        // Last decision applied to this resource (0 = none).
        std::uint64_t applied_payload = 0;
    };

    struct VersionedRef
    {
        ResourceId resource = 0;
        std::uint64_t version = 0;

        friend bool operator==(const VersionedRef &, const VersionedRef &) = default;
    };

    struct HostSnapshot
    {
        SimTime taken_at = 0;
        std::vector<VersionedRef> entries;
    };

    enum class TxnStatus : std::uint8_t
    {
        Pending,
        Committed,
        Aborted,
    };

    std::string_view to_string(TxnStatus s) noexcept;

    struct Transaction
    {
        TxnId txn_id = 0;
        std::uint32_t core = 0;
        std::vector<VersionedRef> targets;
        SimTime t1_observed = 0;
        SimTime t2_decided = 0;
        SimTime t3_arrived = 0;
        std::uint64_t decision_payload = 0;
        std::uint64_t incarnation = 0;
        bool prestaged = false;
        TxnStatus status = TxnStatus::Pending;

        // The interval [T1, T3].
        SimTime window() const noexcept { return t3_arrived - t1_observed; }
    };

    struct CommitOutcome
    {
        TxnId txn_id = 0;
        TxnStatus result = TxnStatus::Pending;
        std::optional<ResourceId> aborted_on;
        SimTime committed_at = 0;
        // Versions of the targets after the attempt.
        std::vector<std::uint64_t> versions;
    };

    class HostStateError : public std::logic_error
    {
      public:
        using std::logic_error::logic_error;
    };

    // Host kernel state as versioned resources. Resource ids are laid out
    // threads first, then pages, then flows.
    class HostModel
    {
      public:
        HostModel(Engine &engine, Trace &trace, ResourceCounts counts);

        std::size_t size() const noexcept { return resources_.size(); }
        const ResourceState &resource(ResourceId id) const;
        const std::vector<ResourceState> &resources() const noexcept { return resources_; }

        // Bumps the version by one. `arrived_at` differs from now() only for
        // mutations that were held back by an in-flight swap.
        std::uint64_t mutate(ResourceId id, std::optional<SimTime> arrived_at = std::nullopt);

        HostSnapshot snapshot(std::span<const ResourceId> ids, std::string_view purpose, std::int64_t core = -1);
        HostSnapshot full_snapshot(std::string_view purpose);

        // Version-compare commit. All targets must be unchanged since T1,
        // otherwise nothing is applied. `extra` is appended to the trace record.
        CommitOutcome attempt_commit(Transaction &txn, std::vector<Attr> extra = {});

        // Applies an already-agreed exchange (no validity check). Returns new versions.
        std::vector<std::uint64_t> apply_exchange(std::span<const ResourceId> ids, std::uint64_t payload);

        std::uint64_t committed() const noexcept { return committed_; }
        std::uint64_t aborted() const noexcept { return aborted_; }
        std::uint64_t mutations() const noexcept { return mutations_; }

      private:
        ResourceState &at(ResourceId id);

        Engine &engine_;
        Trace &trace_;
        std::vector<ResourceState> resources_;
        std::uint64_t committed_ = 0;
        std::uint64_t aborted_ = 0;
        std::uint64_t mutations_ = 0;
    };

    enum class AgentState : std::uint8_t
    {
        Alive,
        Dead,
        Restarting,
    };

    struct RecoveryReport
    {
        std::uint64_t incarnation = 0;
        SimTime started_at = 0;
        SimTime ready_at = 0;
        SimTime downtime_ns = 0;
        std::uint64_t discarded_transactions = 0;
        HostSnapshot rebuild_snapshot;
    };

    // Host-side view of the NIC agent's liveness. The host never sees the
    // injected ground truth; it only sees its own verdicts.
    class AgentSupervisor
    {
      public:
        AgentSupervisor(Engine &engine, Trace &trace, SimTime restart_ns);

        AgentState state() const noexcept { return state_; }
        std::uint64_t incarnation() const noexcept { return incarnation_; }
        bool alive() const noexcept { return state_ == AgentState::Alive; }

        void mark_dead() noexcept
        {
            if (state_ == AgentState::Alive)
                state_ = AgentState::Dead;
        }

        // Discards all NIC-derived state and rebuilds the agent from a full
        // host snapshot moved over DMA. `rebuild` runs when the agent is back.
        RecoveryReport restart_agent(HostModel &host, Interconnect &link, std::uint64_t pending_transactions,
                                     std::string_view reason, std::function<void(const RecoveryReport &)> rebuild);

        std::uint64_t restarts() const noexcept { return restarts_; }

      private:
        Engine &engine_;
        Trace &trace_;
        SimTime restart_ns_;
        AgentState state_ = AgentState::Alive;
        std::uint64_t incarnation_ = 0;
        std::uint64_t restarts_ = 0;
    };

    struct ResourceFinal
    {
        std::uint64_t version = 0;
        std::uint64_t applied_payload = 0;
        friend bool operator==(const ResourceFinal &, const ResourceFinal &) = default;
    };

    std::vector<ResourceFinal> final_state(const HostModel &host);
} // namespace fitosim
