#pragma once

#include "fitosim/sim_core.hpp"

#include <concepts>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

namespace fitosim
{
    enum class TraceKind : std::uint8_t
    {
        Mutate,
        Snapshot,
        MsgEnqueue,
        MsgDeliver,
        TxnCreate,
        CommitOutcome,
        Prestage,
        Prefetch,
        WatchdogArm,
        WatchdogKill,
        SwapInitiate,
        SwapResolve,
        AgentRestart,
        RequestComplete,
        EpisodeMarker,
    };

    std::string_view to_string(TraceKind kind) noexcept;
    std::optional<TraceKind> trace_kind_from_string(std::string_view text) noexcept;

    using IntList = std::vector<std::int64_t>;
    using AttrValue = std::variant<std::int64_t, std::string_view, IntList>;

    // Keys and string values are views into static literals or into the
    // owning Trace's intern pool.
    struct Attr
    {
        std::string_view key;
        AttrValue value;

        Attr(std::string_view k, std::string_view v) : key(k), value(v) {}
        Attr(std::string_view k, const char *v) : key(k), value(std::string_view(v)) {}
        Attr(std::string_view k, IntList v) : key(k), value(std::move(v)) {}
        template <std::integral T>
        Attr(std::string_view k, T v) : key(k), value(static_cast<std::int64_t>(v))
        {
        }
    };

    struct TraceRecord
    {
        SimTime at = 0;
        TraceKind kind = TraceKind::EpisodeMarker;
        std::vector<Attr> attributes;

        const AttrValue *find(std::string_view key) const noexcept;
        bool has(std::string_view key) const noexcept { return find(key) != nullptr; }
        std::int64_t get_int(std::string_view key) const;
        std::int64_t get_int_or(std::string_view key, std::int64_t fallback) const noexcept;
        std::string_view get_str(std::string_view key) const;
        const IntList &get_list(std::string_view key) const;

        bool is(TraceKind k, std::string_view key, std::string_view value) const noexcept;
    };

    bool operator==(const TraceRecord &a, const TraceRecord &b);

    class TraceFormatError : public std::runtime_error
    {
      public:
        using std::runtime_error::runtime_error;
    };

    // Append-only event log. Records must arrive with non-decreasing `at`.
    class Trace
    {
      public:
        Trace() = default;
        Trace(const Trace &) = delete;
        Trace &operator=(const Trace &) = delete;
        Trace(Trace &&) = default;
        Trace &operator=(Trace &&) = default;

        std::size_t emit(SimTime at, TraceKind kind, std::initializer_list<Attr> attrs);
        std::size_t emit(SimTime at, TraceKind kind, std::vector<Attr> attrs);

        const std::vector<TraceRecord> &records() const noexcept { return records_; }
        std::size_t size() const noexcept { return records_.size(); }
        const TraceRecord &operator[](std::size_t i) const { return records_.at(i); }

        // Copies `text` into the pool and returns a view with trace lifetime.
        std::string_view intern(std::string_view text);

        // Ends with an episode-marker whose marker is "run-end".
        bool complete() const noexcept;

        void write_jsonl(std::ostream &out) const;
        std::string to_jsonl() const;
        static std::string to_json_line(const TraceRecord &record);

        static Trace read_jsonl(std::istream &in);
        static Trace read_jsonl_file(const std::string &path);

      private:
        std::vector<TraceRecord> records_;
        std::unordered_set<std::string> pool_;
    };
} // namespace fitosim
