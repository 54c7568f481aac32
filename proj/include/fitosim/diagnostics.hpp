#pragma once

#include "fitosim/host_model.hpp"
#include "fitosim/trace.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fitosim
{
    // Behavioral score: each criterion is true only if the trace exhibits it.
    struct FitoScore
    {
        bool c1_clocks = false;
        bool c2_timeouts = false;
        bool c3_abort_resolution = false;
        bool c4_forward_recovery = false;
        int total = 0;
        // Indices of witnessing records, per criterion (capped).
        std::array<std::vector<std::size_t>, 4> evidence;
    };

    FitoScore fito_score(const Trace &trace);
    std::string to_string(const FitoScore &score);

    struct WindowStats
    {
        std::uint64_t count = 0;
        double mean_ns = 0.0;
        SimTime p50_ns = 0;
        SimTime p90_ns = 0;
        SimTime p99_ns = 0;
        SimTime max_ns = 0;
        // bucket k counts windows in [2^k, 2^(k+1)); bucket 0 also holds 0.
        std::map<int, std::uint64_t> log2_buckets;
    };

    // Nearest-rank percentile over an unsorted sample.
    WindowStats window_stats(std::vector<SimTime> samples);

    struct MetricsSummary
    {
        std::string mode;
        std::int64_t seed = 0;
        std::string workload_digest;
        SimTime duration_ns = 0;

        std::uint64_t requests_completed = 0;
        std::uint64_t requests_failed = 0;
        double throughput_req_per_s = 0.0;
        double overhead_mean_ns = 0.0;

        std::uint64_t committed = 0;
        std::uint64_t aborted = 0;
        double abort_rate = 0.0;
        WindowStats window;
        double decision_loop_mean_ns = 0.0;

        std::uint64_t mutations = 0;
        std::uint64_t watchdog_arms = 0;
        std::uint64_t kills_true_positive = 0;
        std::uint64_t kills_false_positive = 0;
        std::uint64_t restarts = 0;
        // One entry per crash episode that the protocol reacted to.
        std::vector<SimTime> detection_latencies_ns;

        std::uint64_t prestage_hits = 0;
        std::uint64_t prestage_misses = 0;
        double prestage_hit_rate = 0.0;

        std::uint64_t swaps_completed = 0;
        std::uint64_t swaps_not_completed = 0;
        SimTime swap_window_min_ns = 0;
        SimTime swap_window_max_ns = 0;

        std::optional<SimTime> detection_latency_ns() const
        {
            if (detection_latencies_ns.empty())
                return std::nullopt;
            return detection_latencies_ns.front();
        }
    };

    MetricsSummary summarize(const Trace &trace);

    std::string metrics_csv_header();
    std::string metrics_csv_row(const MetricsSummary &m);
    std::string metrics_csv(const MetricsSummary &m);
    std::string summary_text(const MetricsSummary &m);

    class ComparisonError : public std::invalid_argument
    {
      public:
        using std::invalid_argument::invalid_argument;
    };

    struct ComparisonReport
    {
        MetricsSummary fito;
        MetricsSummary bilateral;
        bool bilateral_no_aborts = false;
        bool bilateral_no_timeouts = false;
        // fito / bilateral; absent unless both runs detected a crash.
        std::optional<double> detection_ratio;
        std::string text;
        std::string csv;
    };

    // Traces must come from the same seed and workload.
    ComparisonReport compare(const Trace &fito, const Trace &bilateral);

    class ReplayError : public std::runtime_error
    {
      public:
        using std::runtime_error::runtime_error;
    };

    // Rebuilds final resource state from the trace alone: mutations plus
    // committed decisions and completed swaps, in record order.
    std::vector<ResourceFinal> replay(const Trace &trace);
} // namespace fitosim
