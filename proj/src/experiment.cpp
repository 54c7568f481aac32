#include "fitosim/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

namespace fitosim
{
    using json = nlohmann::ordered_json;

    std::string_view to_string(Mode m) noexcept
    {
        switch (m)
        {
        case Mode::Fito: return "fito";
        case Mode::Bilateral: return "bilateral";
        case Mode::Paired: return "paired";
        }
        return "unknown";
    }

    namespace
    {
        // ------------------------------------------------------------ presets

        const std::map<std::string, std::string> &presets()
        {
            // Per-decision costs: 8 uncombined 200 ns writes per event, 8 MMIO
            // reads to pull a decision, and 3.3 us of host kernel work.
            static const std::string table23 = R"({
              "mode": "fito",
              "latency": {"uc_write_ns": 200, "event_message_writes": 8, "txn_read_count": 8},
              "optimizations": {"all": true},
              "fito": {"notify_mode": "msix", "compute_distribution": "constant", "prestage_accuracy": 0.9},
              "host": {"kernel_prep_ns": 600, "context_switch_ns": 2700},
              "workload": {"cores": 1, "mutation_rate_per_s": 0, "run_duration_ns": 10000000,
                           "resource_counts": {"threads": 1, "pages": 0, "flows": 0}}
            })";
            static const std::map<std::string, std::string> table = {
                {"paper-2.3", table23},
                {"paper-2.6", R"({"workload": {"request_service_ns": 150, "run_duration_ns": 20000000}})"},
                {"decision-loop-426", R"({"latency": {"msix_end_to_end_ns": 426}})"},
                {"flp-3.2", R"({
                  "mode": "fito",
                  "latency": {"watchdog_period_ns": 20000000},
                  "workload": {"cores": 1, "mutation_rate_per_s": 1000, "request_service_ns": 10000,
                               "run_duration_ns": 200000000,
                               "resource_counts": {"threads": 4, "pages": 0, "flows": 0},
                               "fault_episodes": [
                                 {"kind": "slow", "start_ns": 20000000, "duration_ns": 25000000},
                                 {"kind": "crash", "start_ns": 120000000, "duration_ns": 0}]}
                })"},
                {"bilateral-5", R"({
                  "mode": "paired",
                  "workload": {"cores": 1, "mutation_rate_per_s": 320000, "run_duration_ns": 50000000,
                               "resource_counts": {"threads": 1, "pages": 0, "flows": 0},
                               "fault_episodes": [{"kind": "crash", "start_ns": 10000000, "duration_ns": 0}]}
                })"},
            };
            return table;
        }

        // Presets that build on another one.
        const std::map<std::string, std::string> &preset_bases()
        {
            static const std::map<std::string, std::string> bases = {
                {"paper-2.6", "paper-2.3"},
                {"decision-loop-426", "paper-2.3"},
            };
            return bases;
        }

        // ------------------------------------------------------------ parsing

        std::string join(const std::string &path, const std::string &key)
        {
            return path.empty() ? key : path + "." + key;
        }

        json parse_text(const std::string &text, const std::string &origin)
        {
            try
            {
                return json::parse(text);
            }
            catch (const json::parse_error &e)
            {
                const auto upto = std::min<std::size_t>(e.byte ? e.byte - 1 : 0, text.size());
                const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
                throw ConfigError(origin + ":" + std::to_string(line) + ": syntax error: " + e.what());
            }
        }

        void check_keys(const json &o, std::initializer_list<const char *> allowed, const std::string &path)
        {
            if (!o.is_object())
                throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
            for (const auto &item : o.items())
            {
                if (std::none_of(allowed.begin(), allowed.end(), [&](const char *k) { return item.key() == k; }))
                    throw ConfigError("unknown field '" + join(path, item.key()) + "'");
            }
        }

        template <class T>
        void get_uint(const json &o, const char *key, T &out, const std::string &path)
        {
            if (!o.contains(key))
                return;
            const json &v = o.at(key);
            const std::string field = join(path, key);
            std::uint64_t value = 0;
            if (v.is_number_unsigned())
                value = v.get<std::uint64_t>();
            else if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
                value = static_cast<std::uint64_t>(v.get<std::int64_t>());
            else if (v.is_number_float() && v.get<double>() >= 0 && std::floor(v.get<double>()) == v.get<double>() &&
                     v.get<double>() < 1.8e19)
                value = static_cast<std::uint64_t>(v.get<double>());
            else
                throw ConfigError("field '" + field + "': expected a non-negative integer");
            if (value > std::numeric_limits<T>::max())
                throw ConfigError("field '" + field + "': value out of range");
            out = static_cast<T>(value);
        }

        void get_double(const json &o, const char *key, double &out, const std::string &path)
        {
            if (!o.contains(key))
                return;
            if (!o.at(key).is_number())
                throw ConfigError("field '" + join(path, key) + "': expected a number");
            out = o.at(key).get<double>();
        }

        void get_bool(const json &o, const char *key, bool &out, const std::string &path)
        {
            if (!o.contains(key))
                return;
            if (!o.at(key).is_boolean())
                throw ConfigError("field '" + join(path, key) + "': expected true or false");
            out = o.at(key).get<bool>();
        }

        template <class E>
        void get_enum(const json &o, const char *key, E &out, const std::string &path,
                      std::initializer_list<std::pair<const char *, E>> names)
        {
            if (!o.contains(key))
                return;
            const json &v = o.at(key);
            std::string expected;
            for (const auto &[name, value] : names)
            {
                if (v.is_string() && v.get<std::string>() == name)
                {
                    out = value;
                    return;
                }
                expected += expected.empty() ? name : std::string(", ") + name;
            }
            throw ConfigError("field '" + join(path, key) + "': expected one of " + expected);
        }

        template <class E>
        const char *enum_name(E value, std::initializer_list<std::pair<const char *, E>> names)
        {
            for (const auto &[name, v] : names)
                if (v == value)
                    return name;
            return "unknown";
        }

        constexpr std::initializer_list<std::pair<const char *, Mode>> kModes = {
            {"fito", Mode::Fito}, {"bilateral", Mode::Bilateral}, {"paired", Mode::Paired}};
        constexpr std::initializer_list<std::pair<const char *, NotifyMode>> kNotify = {
            {"polled", NotifyMode::Polled}, {"msix", NotifyMode::Msix}};
        constexpr std::initializer_list<std::pair<const char *, RetryMode>> kRetry = {
            {"agent-redecide", RetryMode::AgentRedecide}, {"auto-retry", RetryMode::AutoRetry}};
        constexpr std::initializer_list<std::pair<const char *, WcFlushPolicy>> kFlush = {
            {"timeout", WcFlushPolicy::Timeout}, {"explicit", WcFlushPolicy::Explicit}};
        constexpr std::initializer_list<std::pair<const char *, ComputeDistribution>> kCompute = {
            {"exponential", ComputeDistribution::Exponential}, {"constant", ComputeDistribution::Constant}};
        constexpr std::initializer_list<std::pair<const char *, RequestMode>> kRequest = {
            {"closed", RequestMode::Closed}, {"open", RequestMode::Open}};
        constexpr std::initializer_list<std::pair<const char *, EpisodeKind>> kEpisode = {
            {"crash", EpisodeKind::Crash}, {"slow", EpisodeKind::Slow}};

        json to_json(const ExperimentConfig &c)
        {
            const auto &l = c.latency;
            const auto &f = c.fito;
            const auto &w = c.workload;
            json episodes = json::array();
            for (const auto &e : w.fault_episodes)
                episodes.push_back({{"kind", enum_name(e.kind, kEpisode)},
                                    {"start_ns", e.start},
                                    {"duration_ns", e.duration}});
            json j;
            j["mode"] = enum_name(c.mode, kModes);
            j["seed"] = c.seed;
            if (!c.preset.empty())
                j["preset"] = c.preset;
            j["latency"] = {{"mmio_read_rtt_ns", l.mmio_read_rtt_ns},
                            {"msix_end_to_end_ns", l.msix_end_to_end_ns},
                            {"one_way_ns", l.one_way_ns},
                            {"wc_batch_capacity_messages", l.wc_batch_capacity_messages},
                            {"wc_flush_timeout_ns", l.wc_flush_timeout_ns},
                            {"dma_setup_ns", l.dma_setup_ns},
                            {"dma_bandwidth_bytes_per_ns", l.dma_bandwidth_bytes_per_ns},
                            {"watchdog_period_ns", l.watchdog_period_ns},
                            {"nic_compute_ns", l.nic_compute_ns},
                            {"uc_write_ns", l.uc_write_ns},
                            {"event_message_writes", l.event_message_writes},
                            {"txn_read_count", l.txn_read_count}};
            j["optimizations"] = {{"wc_enabled", c.optimizations.wc_enabled},
                                  {"wt_enabled", c.optimizations.wt_enabled},
                                  {"prestaging_enabled", c.optimizations.prestaging_enabled},
                                  {"prefetching_enabled", c.optimizations.prefetching_enabled}};
            j["fito"] = {{"notify_mode", enum_name(f.notify_mode, kNotify)},
                         {"retry_mode", enum_name(f.retry_mode, kRetry)},
                         {"retry_limit", f.retry_limit},
                         {"wc_flush_policy", enum_name(f.wc_flush_policy, kFlush)},
                         {"idle_heartbeats", f.idle_heartbeats},
                         {"watchdog_tick_ns", f.watchdog_tick_ns},
                         {"prestage_accuracy", f.prestage_accuracy},
                         {"compute_distribution", enum_name(f.compute_distribution, kCompute)},
                         {"nic_poll_interval_ns", f.nic_poll_interval_ns},
                         {"agent_restart_ns", f.agent_restart_ns},
                         {"event_bytes", f.event_bytes},
                         {"decision_bytes", f.decision_bytes}};
            j["host"] = {{"kernel_prep_ns", c.host.kernel_prep_ns}, {"context_switch_ns", c.host.context_switch_ns}};
            j["workload"] = {{"mutation_rate_per_s", w.mutation_rate_per_s},
                             {"event_arrival_rate_per_s", w.event_arrival_rate_per_s},
                             {"request_mode", enum_name(w.request_mode, kRequest)},
                             {"cores", w.cores},
                             {"request_service_ns", w.request_service_ns},
                             {"run_duration_ns", w.run_duration_ns},
                             {"max_requests", w.max_requests},
                             {"targets_per_txn", w.targets_per_txn},
                             {"resource_counts",
                              {{"threads", w.resource_counts.threads},
                               {"pages", w.resource_counts.pages},
                               {"flows", w.resource_counts.flows}}},
                             {"fault_episodes", episodes}};
            j["bilateral"] = {{"reinit_backoff_ns", c.bilateral.reinit_backoff_ns}};
            return j;
        }

        ExperimentConfig from_json(const json &j)
        {
            ExperimentConfig c;
            check_keys(j, {"mode", "seed", "preset", "latency", "optimizations", "fito", "host", "workload", "bilateral"},
                       "");
            get_enum(j, "mode", c.mode, "", kModes);
            get_uint(j, "seed", c.seed, "");
            if (j.contains("preset"))
            {
                if (!j["preset"].is_string())
                    throw ConfigError("field 'preset': expected a string");
                c.preset = j["preset"].get<std::string>();
            }

            bool one_way_set = false;
            if (j.contains("latency"))
            {
                const json &o = j["latency"];
                const std::string p = "latency";
                check_keys(o,
                           {"mmio_read_rtt_ns", "msix_end_to_end_ns", "one_way_ns", "wc_batch_capacity_messages",
                            "wc_flush_timeout_ns", "dma_setup_ns", "dma_bandwidth_bytes_per_ns", "watchdog_period_ns",
                            "nic_compute_ns", "uc_write_ns", "event_message_writes", "txn_read_count"},
                           p);
                auto &l = c.latency;
                get_uint(o, "mmio_read_rtt_ns", l.mmio_read_rtt_ns, p);
                get_uint(o, "msix_end_to_end_ns", l.msix_end_to_end_ns, p);
                if (o.contains("one_way_ns") && !o["one_way_ns"].is_null())
                {
                    get_uint(o, "one_way_ns", l.one_way_ns, p);
                    one_way_set = true;
                }
                get_uint(o, "wc_batch_capacity_messages", l.wc_batch_capacity_messages, p);
                get_uint(o, "wc_flush_timeout_ns", l.wc_flush_timeout_ns, p);
                get_uint(o, "dma_setup_ns", l.dma_setup_ns, p);
                get_double(o, "dma_bandwidth_bytes_per_ns", l.dma_bandwidth_bytes_per_ns, p);
                get_uint(o, "watchdog_period_ns", l.watchdog_period_ns, p);
                get_uint(o, "nic_compute_ns", l.nic_compute_ns, p);
                get_uint(o, "uc_write_ns", l.uc_write_ns, p);
                get_uint(o, "event_message_writes", l.event_message_writes, p);
                get_uint(o, "txn_read_count", l.txn_read_count, p);
            }
            // A posted write costs half a read round-trip unless configured.
            if (!one_way_set)
                c.latency.one_way_ns = c.latency.mmio_read_rtt_ns / 2;

            if (j.contains("optimizations"))
            {
                const json &o = j["optimizations"];
                const std::string p = "optimizations";
                check_keys(o, {"all", "wc_enabled", "wt_enabled", "prestaging_enabled", "prefetching_enabled"}, p);
                bool all = false;
                if (o.contains("all"))
                {
                    get_bool(o, "all", all, p);
                    c.optimizations = OptimizationFlags::all(all);
                }
                get_bool(o, "wc_enabled", c.optimizations.wc_enabled, p);
                get_bool(o, "wt_enabled", c.optimizations.wt_enabled, p);
                get_bool(o, "prestaging_enabled", c.optimizations.prestaging_enabled, p);
                get_bool(o, "prefetching_enabled", c.optimizations.prefetching_enabled, p);
            }

            if (j.contains("fito"))
            {
                const json &o = j["fito"];
                const std::string p = "fito";
                check_keys(o,
                           {"notify_mode", "retry_mode", "retry_limit", "wc_flush_policy", "idle_heartbeats",
                            "watchdog_tick_ns", "prestage_accuracy", "compute_distribution", "nic_poll_interval_ns",
                            "agent_restart_ns", "event_bytes", "decision_bytes"},
                           p);
                auto &f = c.fito;
                get_enum(o, "notify_mode", f.notify_mode, p, kNotify);
                get_enum(o, "retry_mode", f.retry_mode, p, kRetry);
                get_uint(o, "retry_limit", f.retry_limit, p);
                get_enum(o, "wc_flush_policy", f.wc_flush_policy, p, kFlush);
                get_bool(o, "idle_heartbeats", f.idle_heartbeats, p);
                get_uint(o, "watchdog_tick_ns", f.watchdog_tick_ns, p);
                get_double(o, "prestage_accuracy", f.prestage_accuracy, p);
                get_enum(o, "compute_distribution", f.compute_distribution, p, kCompute);
                get_uint(o, "nic_poll_interval_ns", f.nic_poll_interval_ns, p);
                get_uint(o, "agent_restart_ns", f.agent_restart_ns, p);
                get_uint(o, "event_bytes", f.event_bytes, p);
                get_uint(o, "decision_bytes", f.decision_bytes, p);
            }

            if (j.contains("host"))
            {
                const json &o = j["host"];
                check_keys(o, {"kernel_prep_ns", "context_switch_ns"}, "host");
                get_uint(o, "kernel_prep_ns", c.host.kernel_prep_ns, "host");
                get_uint(o, "context_switch_ns", c.host.context_switch_ns, "host");
            }

            if (j.contains("workload"))
            {
                const json &o = j["workload"];
                const std::string p = "workload";
                check_keys(o,
                           {"mutation_rate_per_s", "event_arrival_rate_per_s", "request_mode", "cores",
                            "request_service_ns", "run_duration_ns", "max_requests", "targets_per_txn",
                            "resource_counts", "fault_episodes"},
                           p);
                auto &w = c.workload;
                get_double(o, "mutation_rate_per_s", w.mutation_rate_per_s, p);
                get_double(o, "event_arrival_rate_per_s", w.event_arrival_rate_per_s, p);
                get_enum(o, "request_mode", w.request_mode, p, kRequest);
                get_uint(o, "cores", w.cores, p);
                get_uint(o, "request_service_ns", w.request_service_ns, p);
                get_uint(o, "run_duration_ns", w.run_duration_ns, p);
                get_uint(o, "max_requests", w.max_requests, p);
                get_uint(o, "targets_per_txn", w.targets_per_txn, p);
                if (o.contains("resource_counts"))
                {
                    const json &r = o["resource_counts"];
                    const std::string rp = "workload.resource_counts";
                    check_keys(r, {"threads", "pages", "flows"}, rp);
                    get_uint(r, "threads", w.resource_counts.threads, rp);
                    get_uint(r, "pages", w.resource_counts.pages, rp);
                    get_uint(r, "flows", w.resource_counts.flows, rp);
                }
                if (o.contains("fault_episodes"))
                {
                    const json &eps = o["fault_episodes"];
                    if (!eps.is_array())
                        throw ConfigError("field 'workload.fault_episodes': expected an array");
                    for (std::size_t i = 0; i < eps.size(); ++i)
                    {
                        const std::string ep = "workload.fault_episodes[" + std::to_string(i) + "]";
                        check_keys(eps[i], {"kind", "start_ns", "duration_ns"}, ep);
                        if (!eps[i].contains("kind") || !eps[i].contains("start_ns"))
                            throw ConfigError(ep + ": 'kind' and 'start_ns' are required");
                        FaultEpisode e;
                        get_enum(eps[i], "kind", e.kind, ep, kEpisode);
                        get_uint(eps[i], "start_ns", e.start, ep);
                        get_uint(eps[i], "duration_ns", e.duration, ep);
                        w.fault_episodes.push_back(e);
                    }
                }
            }

            if (j.contains("bilateral"))
            {
                const json &o = j["bilateral"];
                check_keys(o, {"reinit_backoff_ns"}, "bilateral");
                get_uint(o, "reinit_backoff_ns", c.bilateral.reinit_backoff_ns, "bilateral");
            }
            return c;
        }

        // Expands the optimizations.all shorthand; fields named alongside it win.
        void normalize(json &patch)
        {
            if (!patch.is_object() || !patch.contains("optimizations") || !patch["optimizations"].is_object())
                return;
            json &o = patch["optimizations"];
            if (!o.contains("all"))
                return;
            if (!o["all"].is_boolean())
                throw ConfigError("field 'optimizations.all': expected true or false");
            const bool all = o["all"].get<bool>();
            o.erase("all");
            for (const char *k : {"wc_enabled", "wt_enabled", "prestaging_enabled", "prefetching_enabled"})
                if (!o.contains(k))
                    o[k] = all;
        }

        json defaults_document()
        {
            json d = to_json(ExperimentConfig{});
            // Derived from the round-trip unless set explicitly.
            d["latency"].erase("one_way_ns");
            return d;
        }

        json preset_patch(const std::string &name)
        {
            const auto &table = presets();
            auto it = table.find(name);
            if (it == table.end())
            {
                std::string known;
                for (const auto &[k, v] : table)
                    known += (known.empty() ? "" : ", ") + k;
                throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
            }
            json patch = json::object();
            if (auto base = preset_bases().find(name); base != preset_bases().end())
                patch = preset_patch(base->second);
            json own = json::parse(it->second);
            normalize(own);
            patch.merge_patch(own);
            patch["preset"] = name;
            return patch;
        }

        const json *lookup(const json &doc, const std::vector<std::string> &path)
        {
            const json *cur = &doc;
            for (const auto &k : path)
            {
                if (!cur->is_object() || !cur->contains(k))
                    return nullptr;
                cur = &(*cur)[k];
            }
            return cur;
        }

        std::vector<std::string> split_path(const std::string &dotted)
        {
            std::vector<std::string> out;
            std::stringstream ss(dotted);
            std::string part;
            while (std::getline(ss, part, '.'))
            {
                if (part.empty())
                    throw ConfigError("malformed field path '" + dotted + "'");
                out.push_back(part);
            }
            if (out.empty())
                throw ConfigError("empty field path");
            return out;
        }

        std::string hex64(std::uint64_t v)
        {
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
            return buf;
        }
    } // namespace

    // ----------------------------------------------------------------- config

    void ExperimentConfig::validate() const
    {
        try
        {
            latency.validate();
            fito.validate();
            workload.validate();
        }
        catch (const std::invalid_argument &e)
        {
            throw ConfigError(e.what());
        }
        for (const auto &e : workload.fault_episodes)
            if (e.kind == EpisodeKind::Slow && e.duration == 0)
                throw ConfigError("workload.fault_episodes: slow episodes need duration_ns > 0");
    }

    std::vector<std::string> preset_names()
    {
        std::vector<std::string> out;
        for (const auto &[k, v] : presets())
            out.push_back(k);
        return out;
    }

    ConfigBuilder::ConfigBuilder() : resolved_(defaults_document().dump()) {}

    ConfigBuilder &ConfigBuilder::preset(const std::string &name)
    {
        json doc = json::parse(resolved_);
        doc.merge_patch(preset_patch(name));
        resolved_ = doc.dump();
        preset_applied_ = true;
        return *this;
    }

    ConfigBuilder &ConfigBuilder::file(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
            throw ConfigError(path + ": cannot open config file");
        std::stringstream ss;
        ss << in.rdbuf();
        return text(ss.str(), path);
    }

    ConfigBuilder &ConfigBuilder::text(const std::string &json_text, const std::string &origin)
    {
        json patch = parse_text(json_text, origin);
        if (!patch.is_object())
            throw ConfigError(origin + ": top level must be an object");
        if (patch.contains("preset"))
        {
            if (!patch["preset"].is_string())
                throw ConfigError(origin + ": field 'preset': expected a string");
            // A preset given on the command line takes precedence.
            if (!preset_applied_)
                preset(patch["preset"].get<std::string>());
            patch.erase("preset");
        }
        normalize(patch);
        json doc = json::parse(resolved_);
        doc.merge_patch(patch);
        resolved_ = doc.dump();
        // Surface type errors with the file name attached.
        try
        {
            from_json(doc);
        }
        catch (const ConfigError &e)
        {
            throw ConfigError(origin + ": " + e.what());
        }
        return *this;
    }

    ConfigBuilder &ConfigBuilder::set(const std::string &assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + assignment + "' is not of the form field=value");
        const std::string field = assignment.substr(0, eq);
        const std::string raw = assignment.substr(eq + 1);
        const auto path = split_path(field);

        json value;
        try
        {
            value = json::parse(raw);
        }
        catch (const json::parse_error &)
        {
            value = raw;
        }

        if (field == "preset")
        {
            if (!value.is_string())
                throw ConfigError("field 'preset': expected a string");
            return preset(value.get<std::string>());
        }

        json doc = json::parse(resolved_);
        const bool optional_leaf = field == "latency.one_way_ns" || field == "optimizations.all";
        const auto parent_path = std::vector<std::string>(path.begin(), path.end() - 1);
        const json *parent = lookup(doc, parent_path);
        if (!parent || !parent->is_object() || (!optional_leaf && !parent->contains(path.back())))
            throw ConfigError("unknown field '" + field + "'");

        json patch = value;
        for (auto it = path.rbegin(); it != path.rend(); ++it)
            patch = json{{*it, patch}};
        normalize(patch);
        if (value.is_null())
            throw ConfigError("field '" + field + "': null is not a value");
        doc.merge_patch(patch);
        resolved_ = doc.dump();
        try
        {
            from_json(doc);
        }
        catch (const ConfigError &e)
        {
            throw ConfigError(std::string("--set ") + e.what());
        }
        return *this;
    }

    ExperimentConfig ConfigBuilder::build() const
    {
        ExperimentConfig cfg = from_json(json::parse(resolved_));
        cfg.validate();
        return cfg;
    }

    ExperimentConfig config_from_json(const std::string &json_text)
    {
        return from_json(parse_text(json_text, "<config>"));
    }

    std::string config_to_json(const ExperimentConfig &cfg) { return to_json(cfg).dump(2) + "\n"; }

    std::string workload_digest(const ExperimentConfig &cfg)
    {
        const std::string text = to_json(cfg)["workload"].dump() + "#" + std::to_string(cfg.seed);
        return hex64(fnv1a64(text));
    }

    // -------------------------------------------------------------------- run

    RunResult run_single(const ExperimentConfig &cfg, Mode mode)
    {
        if (mode == Mode::Paired)
            throw std::invalid_argument("run_single needs fito or bilateral mode");
        cfg.validate();

        RunResult out;
        out.mode = mode;
        Engine engine;
        Trace &trace = out.trace;
        const std::string digest = workload_digest(cfg);
        trace.emit(0, TraceKind::EpisodeMarker,
                   {{"marker", "run-start"},
                    {"mode", to_string(mode)},
                    {"seed", static_cast<std::int64_t>(cfg.seed)},
                    {"resources", cfg.workload.resource_counts.total()},
                    {"workload_digest", trace.intern(digest)},
                    {"rng", Rng::kAlgorithm}});

        Interconnect link(engine, trace, cfg.latency);
        HostModel host(engine, trace, cfg.workload.resource_counts);
        AgentSupervisor supervisor(engine, trace, cfg.fito.agent_restart_ns);
        Workload workload(engine, trace, host, cfg.workload, cfg.seed);

        std::unique_ptr<FitoSimulation> fito;
        std::unique_ptr<BilateralSimulation> bilateral;
        if (mode == Mode::Fito)
        {
            fito = std::make_unique<FitoSimulation>(engine, trace, link, host, supervisor, workload, cfg.fito,
                                                    cfg.optimizations, cfg.host, cfg.seed);
            fito->start();
        }
        else
        {
            bilateral =
                std::make_unique<BilateralSimulation>(engine, trace, link, host, supervisor, workload, cfg.bilateral);
            bilateral->start();
        }

        engine.run_until(cfg.workload.run_duration_ns);
        trace.emit(engine.now(), TraceKind::EpisodeMarker,
                   {{"marker", "run-end"}, {"stopped", engine.stopped() ? 1 : 0}, {"events", engine.dispatched()}});

        auto &on = out.online;
        on.requests_ok = workload.requests_completed() - workload.requests_failed();
        on.requests_failed = workload.requests_failed();
        on.mutations = host.mutations();
        on.restarts = supervisor.restarts();
        if (fito)
        {
            const auto &c = fito->counters();
            on.committed = c.committed;
            on.aborted = c.aborted;
            on.kills = c.kills;
            on.false_positive_kills = c.false_positive_kills;
            on.prestage_hits = c.prestage_hits;
            on.prestage_misses = c.prestage_misses;
        }
        else
        {
            const auto &c = bilateral->counters();
            on.swaps_completed = c.completed;
            on.swaps_not_completed = c.not_completed;
            for (const auto &f : bilateral->ledger().resolved)
                if (f.outcome == SwapOutcome::Completed && f.host_committed != f.nic_committed)
                    ++out.asymmetric_swaps;
        }

        out.summary = summarize(trace);
        out.final_state = final_state(host);

        const auto &s = out.summary;
        auto expect = [&](const char *name, std::uint64_t online, std::uint64_t traced) {
            if (online != traced)
                out.consistency_errors.push_back(std::string(name) + ": online " + std::to_string(online) +
                                                 " vs trace " + std::to_string(traced));
        };
        expect("requests_ok", on.requests_ok, s.requests_completed);
        expect("requests_failed", on.requests_failed, s.requests_failed);
        expect("mutations", on.mutations, s.mutations);
        expect("committed", on.committed, s.committed);
        expect("aborted", on.aborted, s.aborted);
        expect("host_committed", host.committed(), s.committed);
        expect("kills", on.kills, s.kills_true_positive + s.kills_false_positive);
        expect("false_positive_kills", on.false_positive_kills, s.kills_false_positive);
        expect("restarts", on.restarts, s.restarts);
        expect("prestage_hits", on.prestage_hits, s.prestage_hits);
        expect("prestage_misses", on.prestage_misses, s.prestage_misses);
        expect("swaps_completed", on.swaps_completed, s.swaps_completed);
        expect("swaps_not_completed", on.swaps_not_completed, s.swaps_not_completed);
        if (out.asymmetric_swaps)
            out.consistency_errors.push_back(std::to_string(out.asymmetric_swaps) + " asymmetric swaps");

        try
        {
            out.replayed_state = replay(trace);
            if (out.replayed_state != out.final_state)
                out.consistency_errors.push_back("replayed final state differs from engine state");
        }
        catch (const ReplayError &e)
        {
            out.consistency_errors.push_back(std::string("replay: ") + e.what());
        }
        return out;
    }

    PairedResult run_paired(const ExperimentConfig &cfg)
    {
        PairedResult p{run_single(cfg, Mode::Fito), run_single(cfg, Mode::Bilateral), {}};
        p.comparison = compare(p.fito.trace, p.bilateral.trace);
        return p;
    }

    // ------------------------------------------------------------------ check

    std::vector<CheckItem> check_preset(const ExperimentConfig &cfg)
    {
        std::vector<CheckItem> items;
        auto add = [&](std::string name, bool pass, std::string detail) {
            items.push_back({std::move(name), pass, std::move(detail)});
        };
        auto us = [](double ns) {
            char b[48];
            std::snprintf(b, sizeof b, "%.3f us", ns / 1e3);
            return std::string(b);
        };
        auto with_flags = [&](bool on) {
            ExperimentConfig c = cfg;
            c.optimizations = OptimizationFlags::all(on);
            return c;
        };

        const std::string &p = cfg.preset;
        if (p == "paper-2.3")
        {
            const auto off = run_single(with_flags(false), Mode::Fito).summary;
            const auto on = run_single(with_flags(true), Mode::Fito).summary;
            add("overhead all-off ~13.3 us (+-20%)",
                off.overhead_mean_ns >= 13300 * 0.8 && off.overhead_mean_ns <= 13300 * 1.2, us(off.overhead_mean_ns));
            add("overhead all-on in [3.3, 4.0] us", on.overhead_mean_ns >= 3300 && on.overhead_mean_ns <= 4000,
                us(on.overhead_mean_ns));
        }
        else if (p == "paper-2.6")
        {
            const auto off = run_single(with_flags(false), Mode::Fito).summary;
            const auto on = run_single(with_flags(true), Mode::Fito).summary;
            const double ratio = off.throughput_req_per_s > 0 ? on.throughput_req_per_s / off.throughput_req_per_s : 0;
            char b[96];
            std::snprintf(b, sizeof b, "%.3f (%.0f vs %.0f req/s)", ratio, on.throughput_req_per_s,
                          off.throughput_req_per_s);
            add("throughput ratio all-on/all-off in [3.0, 4.0]", ratio >= 3.0 && ratio <= 4.0, b);
        }
        else if (p == "decision-loop-426")
        {
            const auto s = run_single(cfg, Mode::Fito).summary;
            char b[48];
            std::snprintf(b, sizeof b, "%.1f ns", s.decision_loop_mean_ns);
            add("decision write to MSI-X delivery = 426 ns", s.decision_loop_mean_ns == 426.0, b);
        }
        else if (p == "flp-3.2")
        {
            const auto s = run_single(cfg, Mode::Fito).summary;
            add("slow episode causes a false-positive kill", s.kills_false_positive >= 1,
                std::to_string(s.kills_false_positive) + " false-positive kills");
            const auto d = s.detection_latency_ns();
            add("crash restarted within 2 watchdog periods", d && *d <= 2 * cfg.latency.watchdog_period_ns,
                d ? us(double(*d)) : "no detection");
        }
        else if (p == "bilateral-5")
        {
            const auto r = run_paired(cfg);
            const auto &b = r.bilateral.summary;
            const double fa = r.fito.summary.abort_rate;
            add("fito abort rate near 1/3", fa >= 0.30 && fa <= 0.37, std::to_string(fa));
            add("bilateral aborts = 0", b.aborted == 0, std::to_string(b.aborted));
            add("bilateral watchdog arms = 0", b.watchdog_arms == 0, std::to_string(b.watchdog_arms));
            add("every swap resolves at exactly one round-trip",
                b.swap_window_min_ns == cfg.latency.mmio_read_rtt_ns &&
                    b.swap_window_max_ns == cfg.latency.mmio_read_rtt_ns,
                std::to_string(b.swap_window_min_ns) + ".." + std::to_string(b.swap_window_max_ns) + " ns");
            const auto bd = b.detection_latency_ns(), fd = r.fito.summary.detection_latency_ns();
            add("bilateral detection <= 2 RTT", bd && *bd <= 2 * cfg.latency.mmio_read_rtt_ns,
                bd ? std::to_string(*bd) + " ns" : "no detection");
            add("fito detection <= 2 watchdog periods", fd && *fd <= 2 * cfg.latency.watchdog_period_ns,
                fd ? us(double(*fd)) : "no detection");
            add("detection ratio >= 1e4", r.comparison.detection_ratio && *r.comparison.detection_ratio >= 1e4,
                r.comparison.detection_ratio ? std::to_string(*r.comparison.detection_ratio) : "n/a");
        }

        // Always: determinism and trace self-consistency of the configured run.
        const Mode m = cfg.mode == Mode::Bilateral ? Mode::Bilateral : Mode::Fito;
        const auto a = run_single(cfg, m);
        const auto b = run_single(cfg, m);
        add("same seed gives identical trace bytes", a.trace.to_jsonl() == b.trace.to_jsonl(),
            std::to_string(a.trace.size()) + " records");
        std::string errs;
        for (const auto &e : a.consistency_errors)
            errs += (errs.empty() ? "" : "; ") + e;
        add("replay and online counters agree with trace", a.consistency_errors.empty(), errs.empty() ? "ok" : errs);
        return items;
    }

    // -------------------------------------------------------------- artifacts

    namespace
    {
        namespace fs = std::filesystem;

        void write_file(const fs::path &path, const std::string &content)
        {
            std::ofstream out(path, std::ios::binary);
            if (!out)
                throw std::runtime_error("cannot write " + path.string());
            out << content;
            if (!out)
                throw std::runtime_error("write failed for " + path.string());
        }

        // Recomputes the summary from the written file; it must match byte for byte.
        void write_trace_checked(const fs::path &path, const RunResult &r)
        {
            {
                std::ofstream out(path, std::ios::binary);
                if (!out)
                    throw std::runtime_error("cannot write " + path.string());
                r.trace.write_jsonl(out);
            }
            const auto again = summarize(Trace::read_jsonl_file(path.string()));
            if (metrics_csv(again) != metrics_csv(r.summary))
                throw std::runtime_error("metrics recomputed from " + path.string() + " differ from the online run");
            if (!r.consistency_errors.empty())
                throw std::runtime_error("run is internally inconsistent: " + r.consistency_errors.front());
        }

        fs::path make_dir(const std::string &dir)
        {
            fs::path p(dir);
            std::error_code ec;
            fs::create_directories(p, ec);
            if (ec)
                throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
            return p;
        }
    } // namespace

    std::string run_to_directory(const ExperimentConfig &cfg, const std::string &dir)
    {
        const fs::path out = make_dir(dir);
        write_file(out / "resolved-config.json", config_to_json(cfg));
        if (cfg.mode == Mode::Paired)
        {
            const auto r = run_paired(cfg);
            write_trace_checked(out / "trace-fito.jsonl", r.fito);
            write_trace_checked(out / "trace-bilateral.jsonl", r.bilateral);
            write_file(out / "metrics.csv", metrics_csv_header() + "\n" + metrics_csv_row(r.fito.summary) + "\n" +
                                                metrics_csv_row(r.bilateral.summary) + "\n");
            const std::string text = "== fito ==\n" + summary_text(r.fito.summary) + "\n== bilateral ==\n" +
                                     summary_text(r.bilateral.summary) + "\n== comparison ==\n" + r.comparison.text;
            write_file(out / "summary.txt", text);
            write_file(out / "comparison.txt", r.comparison.text);
            write_file(out / "comparison.csv", r.comparison.csv);
            return text;
        }
        const auto r = run_single(cfg, cfg.mode);
        write_trace_checked(out / "trace.jsonl", r);
        write_file(out / "metrics.csv", metrics_csv(r.summary));
        std::string text = summary_text(r.summary);
        if (cfg.mode == Mode::Fito)
            text += to_string(fito_score(r.trace));
        write_file(out / "summary.txt", text);
        return text;
    }

    std::string run_sweep(const ConfigBuilder &base, const std::string &field, const std::vector<std::string> &values,
                          const std::string &dir)
    {
        if (values.empty())
            throw ConfigError("--sweep needs at least one value");
        const json doc = json::parse(base.document());
        const json *current = lookup(doc, split_path(field));
        const bool derived_one_way = field == "latency.one_way_ns";
        if (!derived_one_way && (!current || !current->is_number()))
            throw ConfigError("sweep field '" + field + "' is not a numeric config field");
        for (const auto &v : values)
        {
            std::size_t used = 0;
            try
            {
                (void)std::stod(v, &used);
            }
            catch (const std::exception &)
            {
                used = 0;
            }
            if (used == 0 || used != v.size())
                throw ConfigError("sweep value '" + v + "' for '" + field + "' is not numeric");
        }

        const fs::path out = make_dir(dir);
        std::string csv = "value," + metrics_csv_header() + "\n";
        std::string text;
        for (std::size_t i = 0; i < values.size(); ++i)
        {
            ConfigBuilder b = base;
            b.set(field + "=" + values[i]);
            const ExperimentConfig cfg = b.build();
            char name[32];
            std::snprintf(name, sizeof name, "point-%02zu", i);
            run_to_directory(cfg, (out / name).string());
            const auto rows = [&] {
                std::ifstream in(out / name / "metrics.csv");
                std::string line, all;
                std::getline(in, line); // header
                while (std::getline(in, line))
                    all += values[i] + "," + line + "\n";
                return all;
            }();
            csv += rows;
            text += field + "=" + values[i] + " -> " + name + "\n";
        }
        write_file(out / "sweep.csv", csv);
        return text;
    }
} // namespace fitosim
