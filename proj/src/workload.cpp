#include "fitosim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fitosim
{
    std::string_view to_string(EpisodeKind k) noexcept { return k == EpisodeKind::Crash ? "crash" : "slow"; }

    void WorkloadConfig::validate() const
    {
        auto fail = [](const std::string &what) { throw std::invalid_argument("workload." + what); };
        if (!(mutation_rate_per_s >= 0.0) || !std::isfinite(mutation_rate_per_s))
            fail("mutation_rate_per_s must be a finite rate >= 0");
        if (!(event_arrival_rate_per_s >= 0.0) || !std::isfinite(event_arrival_rate_per_s))
            fail("event_arrival_rate_per_s must be a finite rate >= 0");
        if (request_mode == RequestMode::Open && event_arrival_rate_per_s <= 0.0)
            fail("event_arrival_rate_per_s must be > 0 in open request mode");
        if (cores == 0)
            fail("cores must be >= 1");
        if (run_duration_ns == 0)
            fail("run_duration_ns must be > 0");
        if (resource_counts.total() == 0)
            fail("resource_counts must define at least one resource");
        if (targets_per_txn == 0 || targets_per_txn > resource_counts.total())
            fail("targets_per_txn must be in [1, total resources]");

        for (const auto kind : {EpisodeKind::Crash, EpisodeKind::Slow})
        {
            std::vector<FaultEpisode> same;
            for (const auto &e : fault_episodes)
                if (e.kind == kind)
                    same.push_back(e);
            std::sort(same.begin(), same.end(), [](const auto &a, const auto &b) { return a.start < b.start; });
            for (std::size_t i = 1; i < same.size(); ++i)
                if (same[i - 1].start + same[i - 1].duration > same[i].start)
                    fail("fault_episodes: overlapping " + std::string(to_string(kind)) + " episodes");
        }
        for (const auto &e : fault_episodes)
        {
            if (e.start >= run_duration_ns)
                fail("fault_episodes: episode starts after the run ends");
            if (e.kind == EpisodeKind::Slow && e.duration == 0)
                fail("fault_episodes: slow episode needs a duration > 0");
        }
    }

    Rng mutation_stream(std::uint64_t seed, ResourceId resource)
    {
        return Rng::stream(seed, "workload/mutations/" + std::to_string(resource));
    }

    Rng arrival_stream(std::uint64_t seed) { return Rng::stream(seed, "workload/arrivals"); }

    Rng core_stream(std::uint64_t seed, std::uint32_t core)
    {
        return Rng::stream(seed, "workload/core/" + std::to_string(core));
    }

    namespace
    {
        std::vector<SimTime> poisson_times(PoissonProcess process, SimTime duration)
        {
            std::vector<SimTime> out;
            if (!process.active())
                return out;
            SimTime t = 0;
            for (;;)
            {
                t += process.next_gap();
                if (t >= duration)
                    break;
                out.push_back(t);
            }
            return out;
        }
    } // namespace

    std::vector<SimTime> gen_mutations(double rate_per_s, SimTime duration, std::uint64_t seed, ResourceId resource)
    {
        if (rate_per_s < 0.0)
            throw std::invalid_argument("mutation rate must be >= 0");
        return poisson_times(PoissonProcess(rate_per_s, mutation_stream(seed, resource)), duration);
    }

    std::vector<SimTime> gen_requests(double rate_per_s, SimTime duration, std::uint64_t seed)
    {
        if (!(rate_per_s > 0.0))
            throw std::invalid_argument("request rate must be > 0");
        return poisson_times(PoissonProcess(rate_per_s, arrival_stream(seed)), duration);
    }

    void NicFaultState::when_resumed(std::function<void()> fn)
    {
        if (!slow_)
            fn();
        else
            on_resume_.push_back(std::move(fn));
    }

    void NicFaultState::begin(EpisodeKind kind)
    {
        if (kind == EpisodeKind::Crash)
            crashed_ = true;
        else
            slow_ = true;
    }

    void NicFaultState::end_slow()
    {
        if (!slow_)
            return;
        slow_ = false;
        auto pending = std::move(on_resume_);
        on_resume_.clear();
        for (auto &fn : pending)
            fn();
    }

    void NicFaultState::reset_on_restart()
    {
        crashed_ = false;
        slow_ = false;
        on_resume_.clear();
    }

    Workload::Workload(Engine &engine, Trace &trace, const HostModel &host, WorkloadConfig config, std::uint64_t seed)
        : engine_(engine), trace_(trace), host_(host), config_(std::move(config)), seed_(seed),
          arrivals_(config_.request_mode == RequestMode::Open ? config_.event_arrival_rate_per_s : 0.0,
                    arrival_stream(seed))
    {
        config_.validate();
        if (host_.size() != config_.resource_counts.total())
            throw std::invalid_argument("workload resource counts do not match the host model");
        cores_.resize(config_.cores);
        for (std::uint32_t c = 0; c < config_.cores; ++c)
        {
            cores_[c].rng = core_stream(seed, c);
            draw_next(c);
        }
        mutation_processes_.reserve(host_.size());
        for (std::size_t r = 0; r < host_.size(); ++r)
            mutation_processes_.emplace_back(config_.mutation_rate_per_s,
                                             mutation_stream(seed, static_cast<ResourceId>(r)));
    }

    void Workload::draw_next(std::uint32_t core)
    {
        auto &cs = cores_[core];
        Trigger t;
        t.core = core;
        t.core_seq = ++cs.seq;
        t.key = (static_cast<std::uint64_t>(core) << 40) | t.core_seq;
        const auto total = static_cast<std::uint64_t>(host_.size());
        while (t.resources.size() < config_.targets_per_txn)
        {
            const auto r = static_cast<ResourceId>(cs.rng.below(total));
            if (std::find(t.resources.begin(), t.resources.end(), r) == t.resources.end())
                t.resources.push_back(r);
        }
        switch (host_.resource(t.resources.front()).type)
        {
        case ResourceType::Thread: t.event_kind = "thread-blocked"; break;
        case ResourceType::Page: t.event_kind = "page-fault"; break;
        case ResourceType::Flow: t.event_kind = "rpc-arrived"; break;
        }
        cs.next = std::move(t);
    }

    void Workload::start(RequestHandler &handler)
    {
        handler_ = &handler;
        if (config_.mutation_rate_per_s > 0.0)
            for (std::size_t r = 0; r < mutation_processes_.size(); ++r)
                schedule_mutation(static_cast<ResourceId>(r));

        for (const auto &e : config_.fault_episodes)
        {
            engine_.schedule_at(e.start, ModuleId::Workload, [this, e] {
                trace_.emit(engine_.now(), TraceKind::EpisodeMarker,
                            {{"marker", "episode-start"},
                             {"episode", to_string(e.kind)},
                             {"start", e.start},
                             {"duration", e.duration}});
                faults_.begin(e.kind);
            });
            if (e.kind == EpisodeKind::Slow)
                engine_.schedule_at(e.start + e.duration, ModuleId::Workload, [this, e] {
                    trace_.emit(engine_.now(), TraceKind::EpisodeMarker,
                                {{"marker", "episode-end"}, {"episode", to_string(e.kind)}, {"start", e.start}});
                    faults_.end_slow();
                });
        }

        if (config_.request_mode == RequestMode::Closed)
        {
            for (std::uint32_t c = 0; c < config_.cores; ++c)
                begin_request(c, engine_.now());
        }
        else
            schedule_arrival();
    }

    void Workload::schedule_mutation(ResourceId r)
    {
        engine_.schedule(mutation_processes_[r].next_gap(), ModuleId::Workload, [this, r] {
            ++mutations_generated_;
            handler_->on_mutation(r);
            schedule_mutation(r);
        });
    }

    void Workload::schedule_arrival()
    {
        engine_.schedule(arrivals_.next_gap(), ModuleId::Workload, [this] {
            const std::uint32_t core = next_core_;
            next_core_ = (next_core_ + 1) % config_.cores;
            auto &cs = cores_[core];
            if (cs.busy)
                cs.queued_arrivals.push_back(engine_.now());
            else
                begin_request(core, engine_.now());
            schedule_arrival();
        });
    }

    void Workload::begin_request(std::uint32_t core, SimTime arrived_at)
    {
        auto &cs = cores_[core];
        cs.busy = true;
        engine_.schedule(config_.request_service_ns, ModuleId::Workload, [this, core, arrived_at] {
            auto &c = cores_[core];
            Trigger t = std::move(c.next);
            t.request = next_request_++;
            t.arrived_at = arrived_at;
            t.triggered_at = engine_.now();
            c.active = t;
            draw_next(core);
            handler_->on_trigger(*c.active);
        });
    }

    void Workload::complete(std::uint32_t core, RequestStatus status)
    {
        auto &cs = cores_.at(core);
        if (!cs.active)
            throw std::logic_error("complete() on a core with no active request");
        const Trigger &t = *cs.active;
        trace_.emit(engine_.now(), TraceKind::RequestComplete,
                    {{"core", core},
                     {"request", t.request},
                     {"key", t.key},
                     {"arrived_at", t.arrived_at},
                     {"trigger_at", t.triggered_at},
                     {"overhead", engine_.now() - t.triggered_at},
                     {"latency", engine_.now() - t.arrived_at},
                     {"status", status == RequestStatus::Ok ? "ok" : "failed"}});
        cs.active.reset();
        cs.busy = false;
        ++completed_;
        if (status == RequestStatus::Failed)
            ++failed_;
        if (config_.max_requests > 0 && completed_ >= config_.max_requests)
        {
            engine_.request_stop();
            return;
        }
        if (config_.request_mode == RequestMode::Closed)
            begin_request(core, engine_.now());
        else if (!cs.queued_arrivals.empty())
        {
            const SimTime arrived = cs.queued_arrivals.front();
            cs.queued_arrivals.pop_front();
            begin_request(core, arrived);
        }
    }
} // namespace fitosim
