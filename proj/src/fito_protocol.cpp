#include "fitosim/fito_protocol.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fitosim
{
    void FitoOptions::validate() const
    {
        if (!(prestage_accuracy >= 0.0 && prestage_accuracy <= 1.0))
            throw std::invalid_argument("fito.prestage_accuracy must be in [0, 1]");
        if (nic_poll_interval_ns == 0)
            throw std::invalid_argument("fito.nic_poll_interval_ns must be > 0");
        if (event_bytes == 0 || decision_bytes == 0)
            throw std::invalid_argument("fito.event_bytes and fito.decision_bytes must be > 0");
    }

    FitoSimulation::FitoSimulation(Engine &engine, Trace &trace, Interconnect &link, HostModel &host,
                                   AgentSupervisor &supervisor, Workload &workload, FitoOptions options,
                                   OptimizationFlags flags, HostCosts costs, std::uint64_t seed)
        : engine_(engine), trace_(trace), link_(link), host_(host), supervisor_(supervisor), workload_(workload),
          options_(options), flags_(flags), costs_(costs), compute_rng_(Rng::stream(seed, "nic/compute")),
          predictor_rng_(Rng::stream(seed, "nic/predictor"))
    {
        options_.validate();
        const auto cores = workload_.config().cores;
        host_cores_.resize(cores);
        slots_.resize(cores);
        prestaged_txn_.assign(cores, 0);
        for (std::uint32_t c = 0; c < cores; ++c)
            slots_[c].core = c;
        watchdog_.period_ns = link_.config().watchdog_period_ns;
        watchdog_.tick_ns = options_.watchdog_tick_ns ? options_.watchdog_tick_ns
                                                      : std::max<SimTime>(1, watchdog_.period_ns / 4);
    }

    void FitoSimulation::start()
    {
        link_.set_write_combining(Direction::HostToNic, flags_.wc_enabled);
        link_.set_write_through(Direction::NicToHost, flags_.wt_enabled);
        link_.set_write_through(Direction::HostToNic, flags_.wt_enabled);
        link_.map(Direction::HostToNic, kOutcomeRing, 0);
        for (std::uint32_t c = 0; c < host_cores_.size(); ++c)
        {
            link_.map(Direction::NicToHost, slot_address(c), 0);
            link_.map(Direction::NicToHost, txn_address(c), 0);
        }

        const HostSnapshot boot = host_.full_snapshot("boot");
        nic_view_.assign(host_.size(), ViewEntry{});
        nic_update_view(boot);

        watchdog_.last_heartbeat_at = engine_.now();
        trace_.emit(engine_.now(), TraceKind::WatchdogArm,
                    {{"period", watchdog_.period_ns}, {"tick", watchdog_.tick_ns}});
        schedule_watchdog();
        if (options_.idle_heartbeats)
            nic_heartbeat_loop();
        if (flags_.prestaging_enabled)
            for (std::uint32_t c = 0; c < host_cores_.size(); ++c)
                nic_prestage(c);

        workload_.start(*this);
    }

    // ---------------------------------------------------------------- host

    void FitoSimulation::on_mutation(ResourceId resource) { host_.mutate(resource); }

    void FitoSimulation::on_trigger(const Trigger &trigger)
    {
        auto &hc = host_cores_.at(trigger.core);
        hc.trigger = trigger;
        hc.aborts = 0;
        hc.prep_done = false;
        ++hc.epoch;
        if (!supervisor_.alive())
        {
            hc.waiting_restart = true;
            return;
        }
        begin_attempt(trigger.core, flags_.prestaging_enabled);
    }

    void FitoSimulation::begin_attempt(std::uint32_t core, bool allow_prestage)
    {
        auto &hc = host_cores_[core];
        const std::uint64_t epoch = ++hc.epoch;
        if (!allow_prestage)
        {
            forward_event(*hc.trigger);
            return;
        }
        host_read(core, slot_address(core), 1, [this, core, epoch] {
            auto &h = host_cores_[core];
            if (h.epoch != epoch || !h.trigger)
                return;
            PrestageResult r = consume_prestaged(core, h.trigger->key);
            if (r.hit)
                commit_at_host(core, std::move(*r.txn), {{"path", "prestaged"}, {"decomposed", 0}});
            else
                forward_event(*h.trigger);
        });
    }

    void FitoSimulation::host_read(std::uint32_t core, Address address, std::uint32_t reads,
                                   std::function<void()> then)
    {
        auto done = std::make_shared<std::function<void()>>(std::move(then));
        auto &hc = host_cores_[core];
        if (flags_.prefetching_enabled && !hc.prep_done)
        {
            // Issue the read, then do the kernel state update while it is in flight.
            link_.prefetch(Direction::NicToHost, address);
            hc.prep_done = true;
            engine_.schedule(costs_.kernel_prep_ns, ModuleId::Host,
                             [this, address, reads, done] { read_chain(address, reads, done); });
            return;
        }
        read_chain(address, reads, std::move(done));
    }

    void FitoSimulation::read_chain(Address address, std::uint32_t left, std::shared_ptr<std::function<void()>> then)
    {
        if (left == 0)
        {
            (*then)();
            return;
        }
        const ReadResult r = link_.blocking_read(Direction::NicToHost, address);
        engine_.schedule_at(r.completes_at, ModuleId::Host,
                            [this, address, left, then] { read_chain(address, left - 1, then); });
    }

    MessageId FitoSimulation::forward_event(const Trigger &trigger)
    {
        auto &hc = host_cores_.at(trigger.core);
        EventMsg ev{trigger.core, trigger.key, hc.epoch, supervisor_.incarnation(),
                    host_.snapshot(trigger.resources, "trigger", trigger.core)};
        ++counters_.events_forwarded;
        const SimTime issue = flags_.wc_enabled ? 0
                                                : link_.config().uc_write_ns * link_.config().event_message_writes;
        const MessageId id = link_.post_write(
            Direction::HostToNic, MessageKind::Event, options_.event_bytes,
            [this, ev](const Message &m) { nic_on_event(ev, *m.delivered_at); }, issue);
        if (flags_.wc_enabled && options_.wc_flush_policy == WcFlushPolicy::Explicit)
            link_.wc_flush(Direction::HostToNic);
        return id;
    }

    void FitoSimulation::host_on_decision(const Decision &d, SimTime notified_at)
    {
        heartbeat();
        if (d.txn.incarnation != supervisor_.incarnation())
        {
            ++counters_.stale_decisions_dropped;
            return;
        }
        const std::uint32_t core = d.txn.core;
        auto &hc = host_cores_.at(core);
        if (d.solicited && (!hc.trigger || hc.epoch != d.epoch))
        {
            ++counters_.stale_decisions_dropped;
            return;
        }
        std::vector<Attr> extra{
            {"path", "forwarded"},
            {"decomposed", 1},
            {"forward", d.nic_received_at - d.txn.t1_observed},
            {"compute", d.txn.t2_decided - d.nic_received_at},
            {"notified_at", notified_at},
            {"loop", notified_at - d.txn.t2_decided},
        };
        if (options_.notify_mode == NotifyMode::Polled)
        {
            commit_at_host(core, d.txn, std::move(extra), d.solicited);
            return;
        }
        const std::uint64_t epoch = d.epoch;
        const bool solicited = d.solicited;
        host_read(core, txn_address(core), link_.config().txn_read_count,
                  [this, core, epoch, solicited, txn = d.txn, extra = std::move(extra)]() mutable {
                      if (solicited && (host_cores_[core].epoch != epoch || !host_cores_[core].trigger))
                          return;
                      commit_at_host(core, std::move(txn), std::move(extra), solicited);
                  });
    }

    void FitoSimulation::commit_at_host(std::uint32_t core, Transaction txn, std::vector<Attr> extra, bool solicited)
    {
        auto &hc = host_cores_[core];
        if (txn.prestaged == false)
            extra.emplace_back("ret", engine_.now() - txn.t2_decided);
        const CommitOutcome outcome = host_.attempt_commit(txn, std::move(extra));

        RingEntry entry{outcome, core, hc.epoch, txn.incarnation, {}, std::nullopt};
        for (const auto &t : txn.targets)
            entry.resources.push_back(t.resource);

        if (outcome.result == TxnStatus::Committed)
            ++counters_.committed;
        else
            ++counters_.aborted;
        if (!solicited)
        {
            ring_.push_back(std::move(entry));
            link_.store(Direction::HostToNic, kOutcomeRing, ring_.size());
            return;
        }

        if (outcome.result == TxnStatus::Committed)
        {
            ring_.push_back(std::move(entry));
            link_.store(Direction::HostToNic, kOutcomeRing, ring_.size());
            finish_request(core, RequestStatus::Ok);
            return;
        }

        ++hc.aborts;
        if (options_.retry_limit > 0 && hc.aborts > options_.retry_limit)
        {
            ring_.push_back(std::move(entry));
            link_.store(Direction::HostToNic, kOutcomeRing, ring_.size());
            ++counters_.failed_requests;
            finish_request(core, RequestStatus::Failed);
            return;
        }

        const std::uint64_t epoch = ++hc.epoch;
        if (options_.retry_mode == RetryMode::AgentRedecide)
        {
            entry.epoch = epoch;
            entry.fresh = host_.snapshot(entry.resources, "redecide", core);
            ring_.push_back(std::move(entry));
            link_.store(Direction::HostToNic, kOutcomeRing, ring_.size());
            return;
        }
        ring_.push_back(std::move(entry));
        link_.store(Direction::HostToNic, kOutcomeRing, ring_.size());
        forward_event(*hc.trigger);
    }

    void FitoSimulation::finish_request(std::uint32_t core, RequestStatus status)
    {
        auto &hc = host_cores_[core];
        const SimTime remaining = (hc.prep_done ? 0 : costs_.kernel_prep_ns) + costs_.context_switch_ns;
        hc.trigger.reset();
        ++hc.epoch;
        engine_.schedule(remaining, ModuleId::Host, [this, core, status] { workload_.complete(core, status); });
    }

    void FitoSimulation::heartbeat() noexcept { watchdog_.last_heartbeat_at = engine_.now(); }

    void FitoSimulation::schedule_watchdog()
    {
        engine_.schedule(watchdog_.tick_ns, ModuleId::Watchdog, [this] {
            watchdog_tick();
            schedule_watchdog();
        });
    }

    std::optional<KillEvent> FitoSimulation::watchdog_tick()
    {
        if (!supervisor_.alive())
            return std::nullopt;
        const SimTime silence = engine_.now() - watchdog_.last_heartbeat_at;
        if (silence <= watchdog_.period_ns)
            return std::nullopt;

        // Ground truth is written for diagnostics only; the kill itself is a guess.
        const bool false_positive = !workload_.faults().crashed();
        trace_.emit(engine_.now(), TraceKind::WatchdogKill,
                    {{"silence", silence},
                     {"last_heartbeat", watchdog_.last_heartbeat_at},
                     {"period", watchdog_.period_ns},
                     {"truth", false_positive ? "false-positive" : "true-positive"}});
        ++watchdog_.kills;
        ++counters_.kills;
        if (false_positive)
        {
            ++watchdog_.false_positive_kills;
            ++counters_.false_positive_kills;
        }
        supervisor_.mark_dead();
        restart("watchdog-kill");
        return KillEvent{engine_.now(), silence, false_positive};
    }

    void FitoSimulation::restart(std::string_view reason)
    {
        std::uint64_t pending = 0;
        for (auto &hc : host_cores_)
            if (hc.trigger)
            {
                ++pending;
                ++hc.epoch;
                hc.waiting_restart = true;
            }

        // The old agent is gone along with everything it derived.
        nic_alive_ = false;
        workload_.faults().reset_on_restart();
        outstanding_.clear();
        for (auto &s : slots_)
            s.staged.reset();
        std::fill(prestaged_txn_.begin(), prestaged_txn_.end(), 0);
        ++counters_.restarts;

        supervisor_.restart_agent(host_, link_, pending, reason, [this](const RecoveryReport &report) {
            nic_alive_ = true;
            nic_incarnation_ = report.incarnation;
            nic_view_.assign(host_.size(), ViewEntry{});
            nic_update_view(report.rebuild_snapshot);
            ring_cursor_ = ring_.size();
            heartbeat();
            for (std::uint32_t c = 0; c < host_cores_.size(); ++c)
            {
                auto &hc = host_cores_[c];
                if (hc.waiting_restart && hc.trigger)
                {
                    hc.waiting_restart = false;
                    begin_attempt(c, false);
                }
                hc.waiting_restart = false;
            }
        });
    }

    // ----------------------------------------------------------------- NIC

    bool FitoSimulation::nic_ready(std::uint64_t incarnation) const noexcept
    {
        return nic_alive_ && incarnation == nic_incarnation_ && !workload_.faults().crashed();
    }

    void FitoSimulation::nic_update_view(const HostSnapshot &snapshot)
    {
        for (const auto &e : snapshot.entries)
        {
            auto &v = nic_view_.at(e.resource);
            if (snapshot.taken_at >= v.as_of)
                v = ViewEntry{e.version, snapshot.taken_at};
        }
    }

    SimTime FitoSimulation::sample_compute()
    {
        const auto mean = link_.config().nic_compute_ns;
        if (options_.compute_distribution == ComputeDistribution::Constant)
            return mean;
        return compute_rng_.exponential_ns(static_cast<double>(mean));
    }

    std::uint64_t FitoSimulation::decision_payload(std::uint64_t key, const HostSnapshot &snapshot) const noexcept
    {
        std::uint64_t h = key;
        for (const auto &e : snapshot.entries)
        {
            std::uint64_t st = (static_cast<std::uint64_t>(e.resource) << 32) ^ e.version ^ h;
            h = splitmix64(st);
        }
        // Only the low 62 bits so the payload stays a positive trace integer.
        return (h & 0x3fffffffffffffffULL) | 1;
    }

    void FitoSimulation::nic_on_event(EventMsg ev, SimTime received_at)
    {
        if (!nic_ready(ev.incarnation))
            return;
        if (workload_.faults().slow())
        {
            workload_.faults().when_resumed([this, ev, received_at] { nic_on_event(ev, received_at); });
            return;
        }
        // A forwarded event means the staged decision for this core missed.
        if (auto &staged = prestaged_txn_.at(ev.core))
        {
            outstanding_.erase(staged);
            staged = 0;
        }
        nic_update_view(ev.snapshot);
        engine_.schedule(sample_compute(), ModuleId::Nic, [this, ev, received_at] { nic_decide(ev, received_at); });
    }

    void FitoSimulation::nic_decide(EventMsg ev, SimTime received_at)
    {
        if (!nic_ready(ev.incarnation))
            return;
        if (workload_.faults().slow())
        {
            workload_.faults().when_resumed([this, ev, received_at] { nic_decide(ev, received_at); });
            return;
        }
        Transaction txn = txn_create(ev.core, decision_payload(ev.key, ev.snapshot), ev.snapshot);
        pending_meta_[txn.txn_id] = {ev.epoch, received_at};
        txns_commit({std::move(txn)});
    }

    Transaction FitoSimulation::txn_create(std::uint32_t core, std::uint64_t payload, const HostSnapshot &snapshot)
    {
        Transaction txn;
        txn.txn_id = next_txn_++;
        txn.core = core;
        txn.targets = snapshot.entries;
        txn.t1_observed = snapshot.taken_at;
        txn.t2_decided = engine_.now();
        txn.decision_payload = payload;
        txn.incarnation = nic_incarnation_;
        ++counters_.decisions;

        IntList res, ver;
        for (const auto &t : txn.targets)
        {
            res.push_back(t.resource);
            ver.push_back(static_cast<std::int64_t>(t.version));
        }
        trace_.emit(engine_.now(), TraceKind::TxnCreate,
                    {{"txn", txn.txn_id},
                     {"core", core},
                     {"t1", txn.t1_observed},
                     {"t2", txn.t2_decided},
                     {"resources", std::move(res)},
                     {"observed", std::move(ver)},
                     {"payload", static_cast<std::int64_t>(payload)},
                     {"incarnation", txn.incarnation}});
        return txn;
    }

    void FitoSimulation::txns_commit(std::vector<Transaction> batch)
    {
        for (auto &txn : batch)
        {
            Decision d{std::move(txn), 0, engine_.now(), true};
            if (auto it = pending_meta_.find(d.txn.txn_id); it != pending_meta_.end())
            {
                d.epoch = it->second.epoch;
                d.nic_received_at = it->second.received_at;
                pending_meta_.erase(it);
            }
            else
            {
                d.solicited = false;
                d.nic_received_at = d.txn.t1_observed;
            }
            outstanding_.insert(d.txn.txn_id);

            if (options_.notify_mode == NotifyMode::Polled)
            {
                link_.post_write(Direction::NicToHost, MessageKind::Decision, options_.decision_bytes,
                                 [this, d](const Message &) { host_on_decision(d, engine_.now()); });
            }
            else
            {
                link_.store(Direction::NicToHost, txn_address(d.txn.core), d.txn.txn_id);
                link_.deliver_msix(ModuleId::Host, [this, d] { host_on_decision(d, engine_.now()); });
            }
        }
        nic_ensure_polling();
    }

    FitoSimulation::RingWindow FitoSimulation::poll_ring()
    {
        const ReadResult r = link_.blocking_read(Direction::HostToNic, kOutcomeRing);
        RingWindow w{ring_cursor_, std::max<std::size_t>(ring_cursor_, r.value), r.completes_at, r.cache_hit};
        ring_cursor_ = w.end;
        return w;
    }

    PollResult FitoSimulation::poll_txns()
    {
        const RingWindow w = poll_ring();
        PollResult out{{}, w.completes_at, w.cache_hit};
        for (std::size_t i = w.begin; i < w.end; ++i)
            out.outcomes.push_back(ring_[i].outcome);
        return out;
    }

    SimTime FitoSimulation::prefetch_txns()
    {
        if (!flags_.prefetching_enabled)
            return engine_.now();
        return link_.prefetch(Direction::HostToNic, kOutcomeRing);
    }

    void FitoSimulation::nic_ensure_polling()
    {
        if (poll_scheduled_ || !nic_alive_)
            return;
        if (outstanding_.empty())
            return;
        poll_scheduled_ = true;
        engine_.schedule(options_.nic_poll_interval_ns, ModuleId::Nic, [this] { nic_poll(); });
    }

    void FitoSimulation::nic_poll()
    {
        if (!nic_alive_ || workload_.faults().crashed())
        {
            poll_scheduled_ = false;
            return;
        }
        if (workload_.faults().slow())
        {
            workload_.faults().when_resumed([this] { nic_poll(); });
            return;
        }
        const RingWindow w = poll_ring();
        const std::uint64_t incarnation = nic_incarnation_;
        engine_.schedule_at(w.completes_at, ModuleId::Nic, [this, w, incarnation] {
            poll_scheduled_ = false;
            if (!nic_alive_ || incarnation != nic_incarnation_)
                return;
            for (std::size_t i = w.begin; i < w.end; ++i)
            {
                const RingEntry &e = ring_[i];
                if (e.incarnation != nic_incarnation_)
                    continue;
                outstanding_.erase(e.outcome.txn_id);
                if (prestaged_txn_[e.core] == e.outcome.txn_id)
                    prestaged_txn_[e.core] = 0;
                if (e.outcome.result == TxnStatus::Committed)
                {
                    HostSnapshot observed{e.outcome.committed_at, {}};
                    for (std::size_t k = 0; k < e.resources.size(); ++k)
                        observed.entries.push_back({e.resources[k], e.outcome.versions[k]});
                    nic_update_view(observed);
                    if (flags_.prestaging_enabled)
                        nic_prestage(e.core);
                }
                else if (e.fresh)
                {
                    const auto &hc = host_cores_[e.core];
                    const std::uint64_t key = hc.trigger ? hc.trigger->key : 0;
                    EventMsg ev{e.core, key, e.epoch, nic_incarnation_, *e.fresh};
                    nic_update_view(ev.snapshot);
                    const SimTime received = engine_.now();
                    engine_.schedule(sample_compute(), ModuleId::Nic,
                                     [this, ev, received] { nic_decide(ev, received); });
                }
            }
            if (flags_.prefetching_enabled)
                prefetch_txns();
            nic_ensure_polling();
        });
    }

    void FitoSimulation::nic_prestage(std::uint32_t core)
    {
        const Trigger &next = workload_.peek_next(core);
        const bool correct = predictor_rng_.bernoulli(options_.prestage_accuracy);
        const std::uint64_t key = correct ? next.key : (next.key ^ (1ULL << 62));
        const std::vector<ResourceId> resources = next.resources;
        const std::uint64_t incarnation = nic_incarnation_;
        engine_.schedule(sample_compute(), ModuleId::Nic, [this, core, key, resources, incarnation] {
            if (!nic_ready(incarnation) || workload_.faults().slow())
                return;
            HostSnapshot view{engine_.now(), {}};
            for (ResourceId r : resources)
            {
                const auto &v = nic_view_.at(r);
                view.entries.push_back({r, v.version});
                view.taken_at = std::min(view.taken_at, v.as_of);
            }
            Transaction txn = txn_create(core, decision_payload(key, view), view);
            txn.prestaged = true;
            prestage_decision(core, key, std::move(txn));
        });
    }

    void FitoSimulation::prestage_decision(std::uint32_t core, std::uint64_t predicted_key, Transaction txn)
    {
        if (!flags_.prestaging_enabled)
            throw std::logic_error("prestage_decision with prestaging disabled");
        auto &slot = slots_.at(core);
        const bool replacing = slot.staged.has_value();
        const TxnId id = txn.txn_id;
        if (prestaged_txn_[core])
            outstanding_.erase(prestaged_txn_[core]);
        prestaged_txn_[core] = id;
        outstanding_.insert(id);
        slot.staged = PrestageSlot::Staged{predicted_key, engine_.now(), std::move(txn)};
        link_.store(Direction::NicToHost, slot_address(core), ++slot_writes_);
        trace_.emit(engine_.now(), TraceKind::Prestage,
                    {{"core", core},
                     {"action", replacing ? "replaced" : "staged"},
                     {"key", predicted_key},
                     {"txn", id}});
        nic_ensure_polling();
    }

    PrestageResult FitoSimulation::consume_prestaged(std::uint32_t core, std::uint64_t actual_key)
    {
        auto &slot = slots_.at(core);
        PrestageResult out;
        const bool hit = slot.staged && slot.staged->predicted_key == actual_key &&
                         slot.staged->txn.incarnation == supervisor_.incarnation();
        const std::int64_t predicted = slot.staged ? static_cast<std::int64_t>(slot.staged->predicted_key) : -1;
        if (hit)
        {
            ++slot.hit_count;
            ++counters_.prestage_hits;
            out.hit = true;
            out.txn = std::move(slot.staged->txn);
        }
        else
        {
            ++slot.miss_count;
            ++counters_.prestage_misses;
        }
        slot.staged.reset();
        trace_.emit(engine_.now(), TraceKind::Prestage,
                    {{"core", core},
                     {"action", hit ? "hit" : "miss"},
                     {"key", actual_key},
                     {"predicted", predicted},
                     {"txn", out.txn ? static_cast<std::int64_t>(out.txn->txn_id) : -1}});
        return out;
    }

    void FitoSimulation::nic_heartbeat_loop()
    {
        engine_.schedule(std::max<SimTime>(1, watchdog_.period_ns / 2), ModuleId::Nic, [this] {
            if (nic_alive_ && workload_.faults().healthy())
            {
                link_.post_write(Direction::NicToHost, MessageKind::Heartbeat, 8, [this](const Message &) {
                    ++counters_.heartbeats;
                    heartbeat();
                });
            }
            nic_heartbeat_loop();
        });
    }
} // namespace fitosim
