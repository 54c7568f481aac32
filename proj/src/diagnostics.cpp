#include "fitosim/diagnostics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fitosim
{
    namespace
    {
        constexpr std::size_t kEvidenceCap = 8;

        void require_complete(const Trace &trace)
        {
            if (!trace.complete())
                throw TraceFormatError("trace is truncated (no run-end marker)");
        }

        std::string fmt(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", v);
            return buf;
        }

        double ratio(std::uint64_t num, std::uint64_t den) { return den ? static_cast<double>(num) / den : 0.0; }
    } // namespace

    FitoScore fito_score(const Trace &trace)
    {
        require_complete(trace);
        FitoScore s;
        auto cite = [&](int c, std::size_t i) {
            if (s.evidence[c].size() < kEvidenceCap)
                s.evidence[c].push_back(i);
        };
        const auto &recs = trace.records();
        for (std::size_t i = 0; i < recs.size(); ++i)
        {
            const auto &r = recs[i];
            switch (r.kind)
            {
            case TraceKind::CommitOutcome:
                if (r.get_str("check") == "version-compare")
                    cite(0, i);
                if (r.get_str("result") == "Aborted" && r.get_list("observed") != r.get_list("current"))
                    cite(2, i);
                break;
            case TraceKind::WatchdogArm: cite(1, i); break;
            case TraceKind::AgentRestart:
                if (r.get_str("rebuilt_from") == "host-snapshot" && r.get_int("undone_commits") == 0)
                    cite(3, i);
                break;
            default: break;
            }
        }
        s.c1_clocks = !s.evidence[0].empty();
        s.c2_timeouts = !s.evidence[1].empty();
        s.c3_abort_resolution = !s.evidence[2].empty();
        s.c4_forward_recovery = !s.evidence[3].empty();
        s.total = s.c1_clocks + s.c2_timeouts + s.c3_abort_resolution + s.c4_forward_recovery;
        return s;
    }

    std::string to_string(const FitoScore &score)
    {
        static constexpr const char *names[4] = {"clocks", "timeouts", "abort-resolution", "forward-recovery"};
        const bool v[4] = {score.c1_clocks, score.c2_timeouts, score.c3_abort_resolution, score.c4_forward_recovery};
        std::ostringstream out;
        out << "fito score " << score.total << "/4\n";
        for (int c = 0; c < 4; ++c)
        {
            out << "  c" << c + 1 << ' ' << names[c] << ": " << (v[c] ? "yes" : "no");
            if (!score.evidence[c].empty())
            {
                out << " (records";
                for (auto i : score.evidence[c])
                    out << ' ' << i;
                out << ')';
            }
            out << '\n';
        }
        return out.str();
    }

    WindowStats window_stats(std::vector<SimTime> samples)
    {
        WindowStats w;
        w.count = samples.size();
        if (samples.empty())
            return w;
        std::sort(samples.begin(), samples.end());
        auto rank = [&](double p) {
            auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size())));
            return samples[std::clamp<std::size_t>(k, 1, samples.size()) - 1];
        };
        w.p50_ns = rank(0.50);
        w.p90_ns = rank(0.90);
        w.p99_ns = rank(0.99);
        w.max_ns = samples.back();
        long double sum = 0;
        for (SimTime s : samples)
        {
            sum += s;
            ++w.log2_buckets[s == 0 ? 0 : static_cast<int>(std::bit_width(s)) - 1];
        }
        w.mean_ns = static_cast<double>(sum / samples.size());
        return w;
    }

    MetricsSummary summarize(const Trace &trace)
    {
        require_complete(trace);
        MetricsSummary m;
        std::vector<SimTime> windows;
        long double overhead_sum = 0, loop_sum = 0;
        std::uint64_t loop_count = 0;
        std::optional<SimTime> crash_pending;
        bool first_swap = true;

        for (const auto &r : trace.records())
        {
            switch (r.kind)
            {
            case TraceKind::EpisodeMarker: {
                const auto marker = r.get_str("marker");
                if (marker == "run-start")
                {
                    m.mode = std::string(r.get_str("mode"));
                    m.seed = r.get_int("seed");
                    m.workload_digest = std::string(r.get_str("workload_digest"));
                }
                else if (marker == "run-end")
                    m.duration_ns = r.at;
                else if (marker == "episode-start" && r.get_str("episode") == "crash")
                    crash_pending = r.at;
                break;
            }
            case TraceKind::RequestComplete:
                if (r.get_str("status") == "ok")
                {
                    ++m.requests_completed;
                    overhead_sum += r.get_int("overhead");
                }
                else
                    ++m.requests_failed;
                break;
            case TraceKind::CommitOutcome:
                if (r.get_str("result") == "Committed")
                    ++m.committed;
                else
                    ++m.aborted;
                windows.push_back(static_cast<SimTime>(r.get_int("window")));
                if (r.has("loop"))
                {
                    loop_sum += r.get_int("loop");
                    ++loop_count;
                }
                break;
            case TraceKind::Mutate: ++m.mutations; break;
            case TraceKind::WatchdogArm: ++m.watchdog_arms; break;
            case TraceKind::WatchdogKill:
                if (r.get_str("truth") == "true-positive")
                    ++m.kills_true_positive;
                else
                    ++m.kills_false_positive;
                if (crash_pending)
                {
                    m.detection_latencies_ns.push_back(r.at - *crash_pending);
                    crash_pending.reset();
                }
                break;
            case TraceKind::AgentRestart: ++m.restarts; break;
            case TraceKind::Prestage: {
                const auto action = r.get_str("action");
                if (action == "hit")
                    ++m.prestage_hits;
                else if (action == "miss")
                    ++m.prestage_misses;
                break;
            }
            case TraceKind::SwapResolve: {
                const auto w = static_cast<SimTime>(r.get_int("window"));
                m.swap_window_min_ns = first_swap ? w : std::min(m.swap_window_min_ns, w);
                m.swap_window_max_ns = std::max(m.swap_window_max_ns, w);
                first_swap = false;
                if (r.get_str("outcome") == "completed")
                    ++m.swaps_completed;
                else
                {
                    ++m.swaps_not_completed;
                    if (crash_pending)
                    {
                        m.detection_latencies_ns.push_back(r.at - *crash_pending);
                        crash_pending.reset();
                    }
                }
                break;
            }
            default: break;
            }
        }

        m.throughput_req_per_s =
            m.duration_ns ? static_cast<double>(m.requests_completed) * 1e9 / static_cast<double>(m.duration_ns) : 0.0;
        m.overhead_mean_ns = m.requests_completed ? static_cast<double>(overhead_sum / m.requests_completed) : 0.0;
        m.abort_rate = ratio(m.aborted, m.aborted + m.committed);
        m.window = window_stats(std::move(windows));
        m.decision_loop_mean_ns = loop_count ? static_cast<double>(loop_sum / loop_count) : 0.0;
        m.prestage_hit_rate = ratio(m.prestage_hits, m.prestage_hits + m.prestage_misses);
        return m;
    }

    std::string metrics_csv_header()
    {
        return "mode,seed,workload_digest,duration_ns,requests_completed,requests_failed,throughput_req_per_s,"
               "overhead_mean_ns,committed,aborted,abort_denominator,abort_rate,window_count,window_mean_ns,"
               "window_p50_ns,window_p90_ns,window_p99_ns,window_max_ns,decision_loop_mean_ns,mutations,"
               "watchdog_arms,kills_true_positive,kills_false_positive,restarts,detection_latency_ns,"
               "prestage_hits,prestage_misses,prestage_hit_rate,swaps_completed,swaps_not_completed,"
               "swap_window_min_ns,swap_window_max_ns";
    }

    std::string metrics_csv_row(const MetricsSummary &m)
    {
        std::ostringstream o;
        const auto det = m.detection_latency_ns();
        o << m.mode << ',' << m.seed << ',' << m.workload_digest << ',' << m.duration_ns << ','
          << m.requests_completed << ',' << m.requests_failed << ',' << fmt(m.throughput_req_per_s) << ','
          << fmt(m.overhead_mean_ns) << ',' << m.committed << ',' << m.aborted << ',' << m.committed + m.aborted
          << ',' << fmt(m.abort_rate) << ',' << m.window.count << ',' << fmt(m.window.mean_ns) << ','
          << m.window.p50_ns << ',' << m.window.p90_ns << ',' << m.window.p99_ns << ',' << m.window.max_ns << ','
          << fmt(m.decision_loop_mean_ns) << ',' << m.mutations << ',' << m.watchdog_arms << ','
          << m.kills_true_positive << ',' << m.kills_false_positive << ',' << m.restarts << ','
          << (det ? std::to_string(*det) : std::string()) << ',' << m.prestage_hits << ',' << m.prestage_misses
          << ',' << fmt(m.prestage_hit_rate) << ',' << m.swaps_completed << ',' << m.swaps_not_completed << ','
          << m.swap_window_min_ns << ',' << m.swap_window_max_ns;
        return o.str();
    }

    std::string metrics_csv(const MetricsSummary &m) { return metrics_csv_header() + "\n" + metrics_csv_row(m) + "\n"; }

    std::string summary_text(const MetricsSummary &m)
    {
        std::ostringstream o;
        o << "mode                 " << m.mode << "\n"
          << "seed                 " << m.seed << "\n"
          << "duration             " << fmt(m.duration_ns / 1e6) << " ms\n"
          << "requests             " << m.requests_completed << " ok, " << m.requests_failed << " failed\n"
          << "throughput           " << fmt(m.throughput_req_per_s) << " req/s\n"
          << "per-decision overhead " << fmt(m.overhead_mean_ns / 1e3) << " us\n"
          << "commits/aborts       " << m.committed << " / " << m.aborted << "  (abort rate " << fmt(m.abort_rate)
          << " of " << m.committed + m.aborted << ")\n"
          << "window p50/p90/p99   " << m.window.p50_ns << " / " << m.window.p90_ns << " / " << m.window.p99_ns
          << " ns (max " << m.window.max_ns << ")\n"
          << "watchdog kills       " << m.kills_true_positive << " true-positive, " << m.kills_false_positive
          << " false-positive\n"
          << "restarts             " << m.restarts << "\n";
        if (auto d = m.detection_latency_ns())
            o << "detection latency    " << *d << " ns\n";
        if (m.prestage_hits + m.prestage_misses)
            o << "prestage hit rate    " << fmt(m.prestage_hit_rate) << "\n";
        if (m.swaps_completed + m.swaps_not_completed)
            o << "swaps                " << m.swaps_completed << " completed, " << m.swaps_not_completed
              << " not completed (window " << m.swap_window_min_ns << ".." << m.swap_window_max_ns << " ns)\n";
        return o.str();
    }

    ComparisonReport compare(const Trace &fito, const Trace &bilateral)
    {
        ComparisonReport rep;
        rep.fito = summarize(fito);
        rep.bilateral = summarize(bilateral);
        if (rep.fito.seed != rep.bilateral.seed)
            throw ComparisonError("paired traces have different seeds (" + std::to_string(rep.fito.seed) + " vs " +
                                  std::to_string(rep.bilateral.seed) + ")");
        if (rep.fito.workload_digest != rep.bilateral.workload_digest)
            throw ComparisonError("paired traces have different workloads");

        rep.bilateral_no_aborts = rep.bilateral.aborted == 0;
        rep.bilateral_no_timeouts = rep.bilateral.watchdog_arms == 0;
        const auto fd = rep.fito.detection_latency_ns(), bd = rep.bilateral.detection_latency_ns();
        if (fd && bd && *bd > 0)
            rep.detection_ratio = static_cast<double>(*fd) / static_cast<double>(*bd);

        struct Row
        {
            const char *name;
            double f, b;
        };
        const Row rows[] = {
            {"requests_completed", double(rep.fito.requests_completed), double(rep.bilateral.requests_completed)},
            {"throughput_req_per_s", rep.fito.throughput_req_per_s, rep.bilateral.throughput_req_per_s},
            {"overhead_mean_ns", rep.fito.overhead_mean_ns, rep.bilateral.overhead_mean_ns},
            {"aborted", double(rep.fito.aborted), double(rep.bilateral.aborted)},
            {"abort_rate", rep.fito.abort_rate, rep.bilateral.abort_rate},
            {"watchdog_arms", double(rep.fito.watchdog_arms), double(rep.bilateral.watchdog_arms)},
            {"watchdog_kills", double(rep.fito.kills_true_positive + rep.fito.kills_false_positive),
             double(rep.bilateral.kills_true_positive + rep.bilateral.kills_false_positive)},
            {"restarts", double(rep.fito.restarts), double(rep.bilateral.restarts)},
            {"detection_latency_ns", fd ? double(*fd) : NAN, bd ? double(*bd) : NAN},
        };

        std::ostringstream t, c;
        c << "metric,fito,bilateral,delta\n";
        char line[160];
        std::snprintf(line, sizeof line, "%-22s %18s %18s %18s\n", "metric", "fito", "bilateral", "delta");
        t << line;
        for (const auto &r : rows)
        {
            std::snprintf(line, sizeof line, "%-22s %18.3f %18.3f %18.3f\n", r.name, r.f, r.b, r.b - r.f);
            t << line;
            c << r.name << ',' << fmt(r.f) << ',' << fmt(r.b) << ',' << fmt(r.b - r.f) << '\n';
        }
        t << "bilateral aborts = 0:        " << (rep.bilateral_no_aborts ? "yes" : "NO") << '\n'
          << "bilateral watchdog arms = 0: " << (rep.bilateral_no_timeouts ? "yes" : "NO") << '\n';
        if (rep.detection_ratio)
            t << "detection latency ratio:     " << fmt(*rep.detection_ratio) << '\n';
        rep.text = t.str();
        rep.csv = c.str();
        return rep;
    }

    std::vector<ResourceFinal> replay(const Trace &trace)
    {
        require_complete(trace);
        const auto &recs = trace.records();
        if (recs.empty() || !recs.front().is(TraceKind::EpisodeMarker, "marker", "run-start"))
            throw ReplayError("trace does not begin with a run-start marker");
        std::vector<ResourceFinal> state(static_cast<std::size_t>(recs.front().get_int("resources")));

        auto at = [&](std::int64_t id, std::size_t index) -> ResourceFinal & {
            if (id < 0 || static_cast<std::size_t>(id) >= state.size())
                throw ReplayError("record " + std::to_string(index) + " names unknown resource " + std::to_string(id));
            return state[static_cast<std::size_t>(id)];
        };
        auto expect = [](std::uint64_t got, std::int64_t recorded, std::size_t index) {
            if (static_cast<std::int64_t>(got) != recorded)
                throw ReplayError("record " + std::to_string(index) + ": replayed version " + std::to_string(got) +
                                  " but trace says " + std::to_string(recorded));
        };
        auto apply = [&](const TraceRecord &r, std::size_t i) {
            const auto &res = r.get_list("resources");
            const auto &ver = r.get_list("versions");
            const auto payload = static_cast<std::uint64_t>(r.get_int("payload"));
            for (std::size_t k = 0; k < res.size(); ++k)
            {
                auto &s = at(res[k], i);
                ++s.version;
                s.applied_payload = payload;
                expect(s.version, ver.at(k), i);
            }
        };

        for (std::size_t i = 0; i < recs.size(); ++i)
        {
            const auto &r = recs[i];
            if (r.kind == TraceKind::Mutate)
            {
                auto &s = at(r.get_int("resource"), i);
                ++s.version;
                expect(s.version, r.get_int("version"), i);
            }
            else if (r.kind == TraceKind::CommitOutcome && r.get_str("result") == "Committed")
                apply(r, i);
            else if (r.kind == TraceKind::SwapResolve && r.get_str("outcome") == "completed")
                apply(r, i);
        }
        return state;
    }
} // namespace fitosim
