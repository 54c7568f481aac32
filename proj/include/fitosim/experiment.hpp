#pragma once

#include "fitosim/bilateral_protocol.hpp"
#include "fitosim/diagnostics.hpp"
#include "fitosim/fito_protocol.hpp"
#include "fitosim/host_model.hpp"
#include "fitosim/interconnect.hpp"
#include "fitosim/workload.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fitosim
{
    enum class Mode : std::uint8_t
    {
        Fito,
        Bilateral,
        Paired,
    };

    std::string_view to_string(Mode m) noexcept;

    // Bad config: carries the dotted field path (or a line number for syntax errors).
    class ConfigError : public std::invalid_argument
    {
      public:
        using std::invalid_argument::invalid_argument;
    };

    struct ExperimentConfig
    {
        Mode mode = Mode::Fito;
        std::uint64_t seed = 42;
        std::string preset;
        LatencyConfig latency;
        OptimizationFlags optimizations;
        FitoOptions fito;
        HostCosts host;
        WorkloadConfig workload;
        BilateralOptions bilateral;

        void validate() const;
    };

    std::vector<std::string> preset_names();

    // Layers, in order: defaults, preset, config file, dotted overrides.
    class ConfigBuilder
    {
      public:
        ConfigBuilder();

        ConfigBuilder &preset(const std::string &name);
        ConfigBuilder &file(const std::string &path);
        ConfigBuilder &text(const std::string &json_text, const std::string &origin = "<config>");
        // "latency.mmio_read_rtt_ns=750"; value parsed as JSON, bare words as strings.
        ConfigBuilder &set(const std::string &assignment);

        ExperimentConfig build() const;

        // The merged (unvalidated) document, as JSON text.
        const std::string &document() const noexcept { return resolved_; }

      private:
        std::string resolved_;
        bool preset_applied_ = false;
    };

    ExperimentConfig config_from_json(const std::string &json_text);
    std::string config_to_json(const ExperimentConfig &cfg);

    struct OnlineCounters
    {
        std::uint64_t requests_ok = 0;
        std::uint64_t requests_failed = 0;
        std::uint64_t mutations = 0;
        std::uint64_t committed = 0;
        std::uint64_t aborted = 0;
        std::uint64_t kills = 0;
        std::uint64_t false_positive_kills = 0;
        std::uint64_t restarts = 0;
        std::uint64_t prestage_hits = 0;
        std::uint64_t prestage_misses = 0;
        std::uint64_t swaps_completed = 0;
        std::uint64_t swaps_not_completed = 0;
    };

    struct RunResult
    {
        Mode mode = Mode::Fito;
        Trace trace;
        MetricsSummary summary;
        OnlineCounters online;
        std::vector<ResourceFinal> final_state;
        std::vector<ResourceFinal> replayed_state;
        // Disagreements between online counters and the trace; empty when consistent.
        std::vector<std::string> consistency_errors;
        // Completed swaps whose two committed copies differ (bilateral only).
        std::uint64_t asymmetric_swaps = 0;
    };

    // One run in `mode` (Fito or Bilateral); Paired is rejected here.
    RunResult run_single(const ExperimentConfig &cfg, Mode mode);

    struct PairedResult
    {
        RunResult fito;
        RunResult bilateral;
        ComparisonReport comparison;
    };

    PairedResult run_paired(const ExperimentConfig &cfg);

    std::string workload_digest(const ExperimentConfig &cfg);

    struct CheckItem
    {
        std::string name;
        bool pass = false;
        std::string detail;
    };

    // Self-verification of a preset's headline claim.
    std::vector<CheckItem> check_preset(const ExperimentConfig &cfg);

    // Writes the artifacts of a run (or paired run) for `cfg` into `dir`.
    // Returns the summary text printed to the user.
    std::string run_to_directory(const ExperimentConfig &cfg, const std::string &dir);

    // One run per value of a numeric field; per-point subdirectories plus sweep.csv.
    std::string run_sweep(const ConfigBuilder &base, const std::string &field, const std::vector<std::string> &values,
                          const std::string &dir);
} // namespace fitosim
