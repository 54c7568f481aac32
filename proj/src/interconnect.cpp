#include "fitosim/interconnect.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fitosim
{
    void LatencyConfig::validate() const
    {
        auto positive = [](auto value, const char *field) {
            if (!(value > 0))
                throw std::invalid_argument(std::string("latency.") + field + " must be > 0");
        };
        positive(mmio_read_rtt_ns, "mmio_read_rtt_ns");
        positive(one_way_ns, "one_way_ns");
        positive(wc_batch_capacity_messages, "wc_batch_capacity_messages");
        positive(dma_setup_ns, "dma_setup_ns");
        positive(dma_bandwidth_bytes_per_ns, "dma_bandwidth_bytes_per_ns");
        positive(watchdog_period_ns, "watchdog_period_ns");
        positive(nic_compute_ns, "nic_compute_ns");
        positive(event_message_writes, "event_message_writes");
        positive(txn_read_count, "txn_read_count");
        if (!std::isfinite(dma_bandwidth_bytes_per_ns))
            throw std::invalid_argument("latency.dma_bandwidth_bytes_per_ns must be finite");
    }

    std::string_view to_string(Direction d) noexcept
    {
        return d == Direction::HostToNic ? "host->nic" : "nic->host";
    }

    std::string_view to_string(MessageKind k) noexcept
    {
        switch (k)
        {
        case MessageKind::Event: return "event";
        case MessageKind::Decision: return "decision";
        case MessageKind::SwapRequest: return "swap-request";
        case MessageKind::SwapReply: return "swap-reply";
        case MessageKind::Heartbeat: return "heartbeat";
        case MessageKind::Outcome: return "outcome";
        case MessageKind::Msix: return "msix";
        }
        return "unknown";
    }

    Interconnect::Interconnect(Engine &engine, Trace &trace, LatencyConfig config)
        : engine_(engine), trace_(trace), config_(config)
    {
    }

    SimTime Interconnect::reserve_delivery(Direction d, SimTime earliest)
    {
        auto &last = last_delivery_[index(d)];
        last = std::max(last, earliest);
        return last;
    }

    MessageId Interconnect::post_write(Direction d, MessageKind kind, std::uint64_t size_bytes,
                                       DeliveryHandler on_deliver, SimTime issue_ns)
    {
        const auto i = index(d);
        Message msg{next_id_++, d, kind, size_bytes, engine_.now(), std::nullopt};
        ++counters_[i].posted;
        trace_.emit(engine_.now(), TraceKind::MsgEnqueue,
                    {{"id", msg.id},
                     {"direction", to_string(d)},
                     {"msg_kind", to_string(kind)},
                     {"size", size_bytes},
                     {"wc", wc_enabled_[i] ? 1 : 0}});

        if (!wc_enabled_[i])
        {
            const SimTime at = reserve_delivery(d, engine_.now() + issue_ns + config_.one_way_ns);
            const auto id = msg.id;
            engine_.schedule_at(at, ModuleId::Interconnect,
                                [this, msg, h = std::move(on_deliver)]() mutable { deliver(msg, std::move(h), 0); });
            return id;
        }

        auto &buf = wc_[i];
        const auto id = msg.id;
        ++counters_[i].wc_entered;
        if (buf.pending.empty())
        {
            buf.opened_at = engine_.now();
            ++buf.epoch;
            if (config_.wc_flush_timeout_ns > 0)
            {
                engine_.schedule(config_.wc_flush_timeout_ns, ModuleId::Interconnect,
                                 [this, d, epoch = buf.epoch] {
                                     if (wc_[index(d)].epoch == epoch && !wc_[index(d)].pending.empty())
                                         wc_flush(d);
                                 });
            }
        }
        buf.pending.push_back(msg);
        buf.handlers.push_back(std::move(on_deliver));
        if (buf.pending.size() >= config_.wc_batch_capacity_messages || config_.wc_flush_timeout_ns == 0)
            wc_flush(d);
        return id;
    }

    std::vector<MessageId> Interconnect::wc_flush(Direction d)
    {
        const auto i = index(d);
        auto &buf = wc_[i];
        std::vector<MessageId> ids;
        if (buf.pending.empty())
            return ids;
        ++buf.epoch; // disarms the pending timeout for this batch
        ++counters_[i].flushes;
        const SimTime at = reserve_delivery(d, engine_.now() + config_.one_way_ns);
        const std::uint64_t batch = next_batch_++;
        auto msgs = std::move(buf.pending);
        auto handlers = std::move(buf.handlers);
        buf.pending.clear();
        buf.handlers.clear();
        ids.reserve(msgs.size());
        for (const auto &m : msgs)
            ids.push_back(m.id);
        counters_[i].wc_flushed += msgs.size();
        engine_.schedule_at(at, ModuleId::Interconnect,
                            [this, batch, msgs = std::move(msgs), handlers = std::move(handlers)]() mutable {
                                for (std::size_t k = 0; k < msgs.size(); ++k)
                                    deliver(msgs[k], std::move(handlers[k]), batch);
                            });
        return ids;
    }

    void Interconnect::deliver(Message msg, DeliveryHandler handler, std::uint64_t batch)
    {
        msg.delivered_at = engine_.now();
        ++counters_[index(msg.direction)].delivered;
        trace_.emit(engine_.now(), TraceKind::MsgDeliver,
                    {{"id", msg.id},
                     {"direction", to_string(msg.direction)},
                     {"msg_kind", to_string(msg.kind)},
                     {"enqueued_at", msg.enqueued_at},
                     {"batch", batch}});
        if (handler)
            handler(msg);
    }

    void Interconnect::map(Direction d, Address a, std::uint64_t value) { memory_[index(d)][a] = value; }

    void Interconnect::store(Direction d, Address a, std::uint64_t value)
    {
        auto &mem = memory_[index(d)];
        auto it = mem.find(a);
        if (it == mem.end())
            throw std::logic_error("store to unmapped address " + std::to_string(a));
        wt_[index(d)].entries.erase(a);
        it->second = value;
    }

    std::uint64_t Interconnect::peek(Direction d, Address a) const
    {
        const auto &mem = memory_[index(d)];
        auto it = mem.find(a);
        if (it == mem.end())
            throw std::logic_error("peek of unmapped address " + std::to_string(a));
        return it->second;
    }

    bool Interconnect::mapped(Direction d, Address a) const { return memory_[index(d)].contains(a); }

    ReadResult Interconnect::blocking_read(Direction d, Address a)
    {
        const auto i = index(d);
        const std::uint64_t current = peek(d, a);
        auto &cache = wt_[i];
        if (auto it = cache.entries.find(a); it != cache.entries.end())
        {
            ++cache.hit_count;
            ReadResult r{it->second.value, std::max(engine_.now(), it->second.ready_at), true};
            // Without WT the line only exists because of a prefetch and is consumed by this read.
            if (!wt_enabled_[i])
                cache.entries.erase(it);
            return r;
        }
        ++cache.miss_count;
        const SimTime done = engine_.now() + config_.mmio_read_rtt_ns;
        if (wt_enabled_[i])
            cache.entries[a] = WtCacheEntry{current, done, done};
        return ReadResult{current, done, false};
    }

    SimTime Interconnect::prefetch(Direction d, Address a)
    {
        const auto i = index(d);
        const std::uint64_t current = peek(d, a);
        auto &cache = wt_[i];
        SimTime ready;
        if (auto it = cache.entries.find(a); it != cache.entries.end())
            ready = std::max(engine_.now(), it->second.ready_at);
        else
        {
            ready = engine_.now() + config_.mmio_read_rtt_ns;
            cache.entries[a] = WtCacheEntry{current, ready, ready};
        }
        trace_.emit(engine_.now(), TraceKind::Prefetch,
                    {{"direction", to_string(d)}, {"address", a}, {"ready_at", ready}});
        return ready;
    }

    SimTime Interconnect::dma_cost(std::uint64_t size_bytes) const
    {
        if (size_bytes == 0)
            throw std::invalid_argument("dma_transfer of 0 bytes");
        const double transfer = std::ceil(static_cast<double>(size_bytes) / config_.dma_bandwidth_bytes_per_ns);
        return config_.dma_setup_ns + static_cast<SimTime>(transfer);
    }

    SimTime Interconnect::dma_transfer(Direction, std::uint64_t size_bytes, std::function<void()> on_complete)
    {
        const SimTime done = engine_.now() + dma_cost(size_bytes);
        if (on_complete)
            engine_.schedule_at(done, ModuleId::Interconnect, std::move(on_complete));
        return done;
    }

    EventHandle Interconnect::deliver_msix(ModuleId target, std::function<void()> handler)
    {
        const MessageId id = next_id_++;
        const SimTime raised = engine_.now();
        trace_.emit(raised, TraceKind::MsgEnqueue,
                    {{"id", id},
                     {"direction", to_string(Direction::NicToHost)},
                     {"msg_kind", to_string(MessageKind::Msix)},
                     {"size", 0},
                     {"wc", 0}});
        return engine_.schedule(config_.msix_end_to_end_ns, target, [this, id, raised, h = std::move(handler)] {
            trace_.emit(engine_.now(), TraceKind::MsgDeliver,
                        {{"id", id},
                         {"direction", to_string(Direction::NicToHost)},
                         {"msg_kind", to_string(MessageKind::Msix)},
                         {"enqueued_at", raised},
                         {"batch", 0}});
            if (h)
                h();
        });
    }
} // namespace fitosim
