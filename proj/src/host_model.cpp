#include "fitosim/host_model.hpp"

#include <string>

namespace fitosim
{
    std::string_view to_string(ResourceType t) noexcept
    {
        switch (t)
        {
        case ResourceType::Thread: return "thread";
        case ResourceType::Page: return "page";
        case ResourceType::Flow: return "flow";
        }
        return "unknown";
    }

    std::string_view to_string(TxnStatus s) noexcept
    {
        switch (s)
        {
        case TxnStatus::Pending: return "Pending";
        case TxnStatus::Committed: return "Committed";
        case TxnStatus::Aborted: return "Aborted";
        }
        return "unknown";
    }

    HostModel::HostModel(Engine &engine, Trace &trace, ResourceCounts counts) : engine_(engine), trace_(trace)
    {
        resources_.reserve(counts.total());
        auto add = [&](std::uint32_t n, ResourceType type) {
            for (std::uint32_t i = 0; i < n; ++i)
                resources_.push_back(ResourceState{static_cast<ResourceId>(resources_.size()), type, 0, 0, 0});
        };
        add(counts.threads, ResourceType::Thread);
        add(counts.pages, ResourceType::Page);
        add(counts.flows, ResourceType::Flow);
    }

    const ResourceState &HostModel::resource(ResourceId id) const
    {
        if (id >= resources_.size())
            throw HostStateError("unknown resource " + std::to_string(id));
        return resources_[id];
    }

    ResourceState &HostModel::at(ResourceId id)
    {
        if (id >= resources_.size())
            throw HostStateError("unknown resource " + std::to_string(id));
        return resources_[id];
    }

    std::uint64_t HostModel::mutate(ResourceId id, std::optional<SimTime> arrived_at)
    {
        auto &r = at(id);
        ++r.version;
        r.last_mutated_at = engine_.now();
        ++mutations_;
        if (arrived_at)
            trace_.emit(engine_.now(), TraceKind::Mutate,
                        {{"resource", id}, {"version", r.version}, {"deferred_from", *arrived_at}});
        else
            trace_.emit(engine_.now(), TraceKind::Mutate, {{"resource", id}, {"version", r.version}});
        return r.version;
    }

    HostSnapshot HostModel::snapshot(std::span<const ResourceId> ids, std::string_view purpose, std::int64_t core)
    {
        HostSnapshot snap{engine_.now(), {}};
        snap.entries.reserve(ids.size());
        IntList res, ver;
        for (ResourceId id : ids)
        {
            const auto &r = at(id);
            snap.entries.push_back({id, r.version});
            res.push_back(id);
            ver.push_back(static_cast<std::int64_t>(r.version));
        }
        trace_.emit(engine_.now(), TraceKind::Snapshot,
                    {{"purpose", purpose}, {"core", core}, {"resources", std::move(res)}, {"versions", std::move(ver)}});
        return snap;
    }

    HostSnapshot HostModel::full_snapshot(std::string_view purpose)
    {
        std::vector<ResourceId> ids(resources_.size());
        for (std::size_t i = 0; i < ids.size(); ++i)
            ids[i] = static_cast<ResourceId>(i);
        return snapshot(ids, purpose);
    }

    CommitOutcome HostModel::attempt_commit(Transaction &txn, std::vector<Attr> extra)
    {
        if (txn.status != TxnStatus::Pending)
            throw HostStateError("transaction " + std::to_string(txn.txn_id) + " already finalized as " +
                                 std::string(to_string(txn.status)));
        txn.t3_arrived = engine_.now();
        if (!(txn.t1_observed <= txn.t2_decided && txn.t2_decided <= txn.t3_arrived))
            throw HostStateError("transaction " + std::to_string(txn.txn_id) + " has inconsistent T1/T2/T3");

        CommitOutcome out{txn.txn_id, TxnStatus::Committed, std::nullopt, engine_.now(), {}};
        IntList res, observed, current;
        for (const auto &t : txn.targets)
        {
            const auto &r = at(t.resource);
            res.push_back(t.resource);
            observed.push_back(static_cast<std::int64_t>(t.version));
            current.push_back(static_cast<std::int64_t>(r.version));
            if (r.version != t.version && !out.aborted_on)
            {
                out.result = TxnStatus::Aborted;
                out.aborted_on = t.resource;
            }
        }

        IntList after;
        if (out.result == TxnStatus::Committed)
        {
            for (const auto &t : txn.targets)
            {
                auto &r = at(t.resource);
                ++r.version;
                r.last_mutated_at = engine_.now();
                r.applied_payload = txn.decision_payload;
                out.versions.push_back(r.version);
                after.push_back(static_cast<std::int64_t>(r.version));
            }
            ++committed_;
        }
        else
        {
            for (const auto &t : txn.targets)
            {
                out.versions.push_back(at(t.resource).version);
                after.push_back(static_cast<std::int64_t>(at(t.resource).version));
            }
            ++aborted_;
        }
        txn.status = out.result;

        std::vector<Attr> attrs{
            {"txn", txn.txn_id},
            {"core", txn.core},
            {"result", to_string(out.result)},
            {"aborted_on", out.aborted_on ? static_cast<std::int64_t>(*out.aborted_on) : -1},
            {"check", "version-compare"},
            {"t1", txn.t1_observed},
            {"t2", txn.t2_decided},
            {"t3", txn.t3_arrived},
            {"window", txn.window()},
            {"resources", std::move(res)},
            {"observed", std::move(observed)},
            {"current", std::move(current)},
            {"versions", std::move(after)},
            {"payload", static_cast<std::int64_t>(txn.decision_payload)},
            {"prestaged", txn.prestaged ? 1 : 0},
            {"incarnation", txn.incarnation},
        };
        for (auto &e : extra)
            attrs.push_back(std::move(e));
        trace_.emit(engine_.now(), TraceKind::CommitOutcome, std::move(attrs));
        return out;
    }

    std::vector<std::uint64_t> HostModel::apply_exchange(std::span<const ResourceId> ids, std::uint64_t payload)
    {
        std::vector<std::uint64_t> versions;
        versions.reserve(ids.size());
        for (ResourceId id : ids)
        {
            auto &r = at(id);
            ++r.version;
            r.last_mutated_at = engine_.now();
            r.applied_payload = payload;
            versions.push_back(r.version);
        }
        return versions;
    }

    AgentSupervisor::AgentSupervisor(Engine &engine, Trace &trace, SimTime restart_ns)
        : engine_(engine), trace_(trace), restart_ns_(restart_ns)
    {
    }

    RecoveryReport AgentSupervisor::restart_agent(HostModel &host, Interconnect &link,
                                                  std::uint64_t pending_transactions, std::string_view reason,
                                                  std::function<void(const RecoveryReport &)> rebuild)
    {
        if (state_ != AgentState::Dead)
            throw HostStateError(state_ == AgentState::Alive ? "restart_agent while agent is alive"
                                                             : "restart_agent while a restart is in progress");
        state_ = AgentState::Restarting;
        ++incarnation_;
        ++restarts_;

        RecoveryReport report;
        report.incarnation = incarnation_;
        report.started_at = engine_.now();
        report.discarded_transactions = pending_transactions;
        report.rebuild_snapshot = host.full_snapshot("rebuild");
        const std::uint64_t bytes = std::max<std::uint64_t>(1, host.size() * 16);
        report.ready_at = link.dma_transfer(Direction::HostToNic, bytes) + restart_ns_;
        report.downtime_ns = report.ready_at - report.started_at;

        trace_.emit(engine_.now(), TraceKind::AgentRestart,
                    {{"incarnation", incarnation_},
                     {"reason", reason},
                     {"downtime", report.downtime_ns},
                     {"ready_at", report.ready_at},
                     {"discarded", pending_transactions},
                     {"rebuilt_from", "host-snapshot"},
                     {"undone_commits", 0}});

        engine_.schedule_at(report.ready_at, ModuleId::Host, [this, report, rebuild = std::move(rebuild)] {
            state_ = AgentState::Alive;
            if (rebuild)
                rebuild(report);
        });
        return report;
    }

    std::vector<ResourceFinal> final_state(const HostModel &host)
    {
        std::vector<ResourceFinal> out;
        out.reserve(host.size());
        for (const auto &r : host.resources())
            out.push_back({r.version, r.applied_payload});
        return out;
    }
} // namespace fitosim
