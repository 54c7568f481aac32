#pragma once

#include "fitosim/sim_core.hpp"
#include "fitosim/trace.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fitosim
{
    // Interconnect cost parameters. Defaults are the measured PCIe figures
    // (750 ns read round-trip, 1600 ns MSI-X) plus calibration knobs.
    struct LatencyConfig
    {
        SimTime mmio_read_rtt_ns = 750;
        SimTime msix_end_to_end_ns = 1600;
        SimTime one_way_ns = 375;
        std::uint32_t wc_batch_capacity_messages = 8;
        SimTime wc_flush_timeout_ns = 1000;
        SimTime dma_setup_ns = 1000;
        double dma_bandwidth_bytes_per_ns = 2.0;
        SimTime watchdog_period_ns = 20 * kNsPerMs;
        SimTime nic_compute_ns = 300;
        // Host stall per uncombined posted write, and writes per event message
        // when write-combining is off.
        SimTime uc_write_ns = 0;
        std::uint32_t event_message_writes = 1;
        // MMIO reads the host issues to consume one decision record.
        std::uint32_t txn_read_count = 1;

        // Throws std::invalid_argument naming the offending field.
        void validate() const;
    };

    enum class Direction : std::uint8_t
    {
        HostToNic,
        NicToHost,
    };

    std::string_view to_string(Direction d) noexcept;

    enum class MessageKind : std::uint8_t
    {
        Event,
        Decision,
        SwapRequest,
        SwapReply,
        Heartbeat,
        Outcome,
        Msix,
    };

    std::string_view to_string(MessageKind k) noexcept;

    using MessageId = std::uint64_t;
    using Address = std::uint64_t;

    struct Message
    {
        MessageId id = 0;
        Direction direction = Direction::HostToNic;
        MessageKind kind = MessageKind::Event;
        std::uint64_t size_bytes = 0;
        SimTime enqueued_at = 0;
        std::optional<SimTime> delivered_at;
    };

    using DeliveryHandler = std::function<void(const Message &)>;

    struct ReadResult
    {
        std::uint64_t value = 0;
        SimTime completes_at = 0;
        bool cache_hit = false;
    };

    struct WtCacheEntry
    {
        std::uint64_t value = 0;
        SimTime cached_at = 0;
        // When a prefetch is still in flight, the time the fill lands.
        SimTime ready_at = 0;
    };

    struct WtCache
    {
        std::unordered_map<Address, WtCacheEntry> entries;
        std::uint64_t hit_count = 0;
        std::uint64_t miss_count = 0;
    };

    struct WcBuffer
    {
        std::vector<Message> pending;
        std::vector<DeliveryHandler> handlers;
        SimTime opened_at = 0;
        std::uint64_t epoch = 0;
    };

    struct ChannelCounters
    {
        std::uint64_t posted = 0;
        std::uint64_t wc_entered = 0;
        std::uint64_t wc_flushed = 0;
        std::uint64_t delivered = 0;
        std::uint64_t flushes = 0;
    };

    // PCIe boundary between host and NIC. Each direction is one ordered
    // channel. Reads are named by the direction the data travels: a host read
    // of NIC memory is a NicToHost read.
    class Interconnect
    {
      public:
        Interconnect(Engine &engine, Trace &trace, LatencyConfig config);

        const LatencyConfig &config() const noexcept { return config_; }

        void set_write_combining(Direction d, bool on) noexcept { wc_enabled_[index(d)] = on; }
        void set_write_through(Direction d, bool on) noexcept { wt_enabled_[index(d)] = on; }
        bool write_combining(Direction d) const noexcept { return wc_enabled_[index(d)]; }
        bool write_through(Direction d) const noexcept { return wt_enabled_[index(d)]; }

        // Posted (non-blocking) write. Joins the WC buffer when enabled for
        // the direction; otherwise delivered one-way later.
        // `issue_ns` is sender-side time spent issuing the write before it
        // enters the channel (uncombined writes stall the sender).
        MessageId post_write(Direction d, MessageKind kind, std::uint64_t size_bytes, DeliveryHandler on_deliver,
                             SimTime issue_ns = 0);

        // Delivers every buffered message at now() + one_way, in enqueue order.
        std::vector<MessageId> wc_flush(Direction d);

        // Memory exposed to the peer across the link.
        void map(Direction d, Address a, std::uint64_t value);
        // Local write by the memory owner; invalidates the reader's cache.
        void store(Direction d, Address a, std::uint64_t value);
        std::uint64_t peek(Direction d, Address a) const;
        bool mapped(Direction d, Address a) const;

        // Blocking read across the link. A cache hit costs nothing; a miss
        // costs one full round-trip and fills the cache (when WT is enabled).
        ReadResult blocking_read(Direction d, Address a);
        // Issues the read now so a later blocking_read finds the line filled.
        SimTime prefetch(Direction d, Address a);

        // Affine DMA cost: setup + ceil(size / bandwidth).
        SimTime dma_transfer(Direction d, std::uint64_t size_bytes, std::function<void()> on_complete = {});
        SimTime dma_cost(std::uint64_t size_bytes) const;

        EventHandle deliver_msix(ModuleId target, std::function<void()> handler);

        const WcBuffer &wc_buffer(Direction d) const noexcept { return wc_[index(d)]; }
        const WtCache &wt_cache(Direction d) const noexcept { return wt_[index(d)]; }
        const ChannelCounters &counters(Direction d) const noexcept { return counters_[index(d)]; }

      private:
        static std::size_t index(Direction d) noexcept { return static_cast<std::size_t>(d); }
        SimTime reserve_delivery(Direction d, SimTime earliest);
        void deliver(Message msg, DeliveryHandler handler, std::uint64_t batch);

        Engine &engine_;
        Trace &trace_;
        LatencyConfig config_;
        MessageId next_id_ = 1;
        std::uint64_t next_batch_ = 1;
        std::array<bool, 2> wc_enabled_{false, false};
        std::array<bool, 2> wt_enabled_{false, false};
        std::array<WcBuffer, 2> wc_;
        std::array<WtCache, 2> wt_;
        std::array<SimTime, 2> last_delivery_{0, 0};
        std::array<ChannelCounters, 2> counters_;
        std::array<std::unordered_map<Address, std::uint64_t>, 2> memory_;
    };
} // namespace fitosim
