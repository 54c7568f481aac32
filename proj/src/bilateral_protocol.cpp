#include "fitosim/bilateral_protocol.hpp"

#include <algorithm>
#include <stdexcept>

namespace fitosim
{
    std::string_view to_string(SwapOutcome o) noexcept
    {
        return o == SwapOutcome::Completed ? "completed" : "not-completed";
    }

    BilateralSimulation::BilateralSimulation(Engine &engine, Trace &trace, Interconnect &link, HostModel &host,
                                             AgentSupervisor &supervisor, Workload &workload,
                                             BilateralOptions options)
        : engine_(engine), trace_(trace), link_(link), host_(host), supervisor_(supervisor), workload_(workload),
          options_(options)
    {
        holder_.assign(host_.size(), 0);
        ledger_.last_swap.assign(host_.size(), 0);
        nic_state_ = final_state(host_);
    }

    void BilateralSimulation::start() { workload_.start(*this); }

    SwapId BilateralSimulation::initiate_swap(std::vector<ResourceId> resources, std::uint64_t nic_payload,
                                              std::int64_t core)
    {
        if (resources.empty())
            throw std::invalid_argument("initiate_swap with no resources");
        for (ResourceId r : resources)
            if (r >= host_.size())
                throw std::out_of_range("initiate_swap on unknown resource " + std::to_string(r));

        const SwapId id = next_swap_++;
        SwapFrame f;
        f.swap_id = id;
        f.resources = std::move(resources);
        f.nic_payload = nic_payload;
        f.core = core;
        f.window_ns = link_.config().mmio_read_rtt_ns;
        ++counters_.swaps_initiated;

        const bool ready = can_start(f);
        active_.emplace(id, std::move(f));
        if (ready)
        {
            begin_frame(id, engine_.now());
            return id;
        }
        ++counters_.swaps_queued;
        IntList res(active_[id].resources.begin(), active_[id].resources.end());
        trace_.emit(engine_.now(), TraceKind::SwapInitiate,
                    {{"swap", id}, {"status", "held"}, {"core", core}, {"resources", std::move(res)}});
        queued_.push_back({id, engine_.now()});
        return id;
    }

    bool BilateralSimulation::can_start(const SwapFrame &f) const
    {
        return std::none_of(f.resources.begin(), f.resources.end(), [&](ResourceId r) { return holder_[r] != 0; });
    }

    void BilateralSimulation::begin_frame(SwapId id, SimTime queued_since)
    {
        auto &f = active_.at(id);
        f.initiated_at = engine_.now();
        f.host_view = host_.snapshot(f.resources, "swap", f.core);
        for (ResourceId r : f.resources)
            holder_[r] = id;

        IntList res(f.resources.begin(), f.resources.end());
        trace_.emit(engine_.now(), TraceKind::SwapInitiate,
                    {{"swap", id},
                     {"status", "started"},
                     {"core", f.core},
                     {"resources", std::move(res)},
                     {"queued_since", queued_since},
                     {"window", f.window_ns}});

        // The peer's half of the exchange happens at the reflection point.
        engine_.schedule(link_.config().one_way_ns, ModuleId::Nic, [this, id] {
            active_.at(id).participated = nic_alive_ && workload_.faults().healthy();
        });
        engine_.schedule(f.window_ns, ModuleId::Bilateral, [this, id] { resolve_swap(id); });
    }

    const SwapFrame &BilateralSimulation::resolve_swap(SwapId id)
    {
        auto node = active_.extract(id);
        if (node.empty())
            throw std::logic_error("resolve_swap of unknown swap " + std::to_string(id));
        SwapFrame f = std::move(node.mapped());
        if (engine_.now() != f.initiated_at + f.window_ns)
            throw std::logic_error("resolve_swap outside its window");
        f.resolved_at = engine_.now();

        if (f.participated)
        {
            // One event-loop step commits the pair on both sides.
            f.outcome = SwapOutcome::Completed;
            f.host_committed = host_.apply_exchange(f.resources, f.nic_payload);
            for (std::size_t i = 0; i < f.resources.size(); ++i)
                nic_state_[f.resources[i]] = {f.host_committed[i], f.nic_payload};
            for (ResourceId r : f.resources)
                f.nic_committed.push_back(nic_state_[r].version);
            ++counters_.completed;
        }
        else
        {
            f.outcome = SwapOutcome::NotCompleted;
            ++counters_.not_completed;
        }

        IntList res(f.resources.begin(), f.resources.end());
        IntList hv(f.host_committed.begin(), f.host_committed.end());
        IntList nv(f.nic_committed.begin(), f.nic_committed.end());
        trace_.emit(engine_.now(), TraceKind::SwapResolve,
                    {{"swap", id},
                     {"outcome", to_string(*f.outcome)},
                     {"core", f.core},
                     {"initiated_at", f.initiated_at},
                     {"window", f.resolved_at - f.initiated_at},
                     {"resources", std::move(res)},
                     {"versions", std::move(hv)},
                     {"nic_versions", std::move(nv)},
                     {"payload", static_cast<std::int64_t>(f.nic_payload)}});

        for (ResourceId r : f.resources)
        {
            holder_[r] = 0;
            ledger_.last_swap[r] = id;
        }

        // Held-back mutations land after the swap, in arrival order.
        std::vector<std::pair<SimTime, ResourceId>> rest;
        for (const auto &[at, r] : deferred_)
        {
            if (holder_[r] == 0)
                host_.mutate(r, at);
            else
                rest.emplace_back(at, r);
        }
        deferred_ = std::move(rest);

        const auto outcome = *f.outcome;
        ledger_.resolved.push_back(std::move(f));
        const SwapFrame &done = ledger_.resolved.back();

        auto svc = servicing_.extract(id);
        if (outcome == SwapOutcome::Completed)
        {
            if (!svc.empty())
                workload_.complete(svc.mapped().core, RequestStatus::Ok);
        }
        else
        {
            if (!svc.empty())
                awaiting_restart_.push_back(std::move(svc.mapped()));
            if (supervisor_.alive())
                restart();
        }
        start_queued();
        return done;
    }

    void BilateralSimulation::start_queued()
    {
        for (auto it = queued_.begin(); it != queued_.end();)
        {
            if (can_start(active_.at(it->id)))
            {
                const Queued q = *it;
                it = queued_.erase(it);
                begin_frame(q.id, q.since);
            }
            else
                ++it;
        }
    }

    void BilateralSimulation::restart()
    {
        supervisor_.mark_dead();
        nic_alive_ = false;
        workload_.faults().reset_on_restart();
        ++counters_.restarts;
        const std::uint64_t pending = awaiting_restart_.size();
        supervisor_.restart_agent(host_, link_, pending, "swap-not-completed", [this](const RecoveryReport &report) {
            nic_alive_ = true;
            for (const auto &e : report.rebuild_snapshot.entries)
                nic_state_[e.resource] = {e.version, host_.resource(e.resource).applied_payload};
            const SimTime backoff = options_.reinit_backoff_ns ? options_.reinit_backoff_ns
                                                               : link_.config().mmio_read_rtt_ns;
            engine_.schedule(backoff, ModuleId::Bilateral, [this] {
                auto waiting = std::move(awaiting_restart_);
                awaiting_restart_.clear();
                for (const auto &t : waiting)
                {
                    ++counters_.reserviced;
                    bilateral_decision_loop(t);
                }
            });
        });
    }

    SwapId BilateralSimulation::bilateral_decision_loop(const Trigger &trigger)
    {
        if (!supervisor_.alive())
        {
            awaiting_restart_.push_back(trigger);
            return 0;
        }
        std::uint64_t st = trigger.key;
        // Low 62 bits keep the payload a positive trace integer.
        const std::uint64_t payload = (splitmix64(st) & 0x3fffffffffffffffULL) | 1;
        const SwapId id = initiate_swap(trigger.resources, payload, trigger.core);
        servicing_.emplace(id, trigger);
        return id;
    }

    void BilateralSimulation::on_trigger(const Trigger &trigger) { bilateral_decision_loop(trigger); }

    void BilateralSimulation::on_mutation(ResourceId resource)
    {
        if (holder_.at(resource) != 0)
        {
            ++counters_.deferred_mutations;
            deferred_.emplace_back(engine_.now(), resource);
            return;
        }
        host_.mutate(resource);
    }
} // namespace fitosim
