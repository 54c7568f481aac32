#include "fitosim/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace fitosim;
namespace fs = std::filesystem;

namespace
{
    std::string message_of(const std::function<void()> &fn)
    {
        try
        {
            fn();
        }
        catch (const ConfigError &e)
        {
            return e.what();
        }
        return "";
    }

    fs::path scratch(const std::string &name)
    {
        const fs::path p = fs::temp_directory_path() / ("fitosim-test-" + name);
        fs::remove_all(p);
        return p;
    }

    std::string slurp(const fs::path &p)
    {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    int cli(const std::string &args)
    {
        const std::string cmd = std::string(FITOSIM_CLI) + " " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
} // namespace

TEST(Config, DefaultsAreValid)
{
    const ExperimentConfig c = ConfigBuilder().build();
    EXPECT_EQ(c.mode, Mode::Fito);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.latency.mmio_read_rtt_ns, 750u);
    EXPECT_EQ(c.latency.one_way_ns, 375u);
    EXPECT_EQ(c.latency.msix_end_to_end_ns, 1600u);
}

TEST(Config, SyntaxErrorNamesLine)
{
    const auto msg = message_of([] { ConfigBuilder().text("{\n  \"seed\": 1,\n  \"mode\" \"fito\"\n}", "bad.json"); });
    EXPECT_NE(msg.find("bad.json:3"), std::string::npos) << msg;
}

TEST(Config, UnknownFieldIsNamed)
{
    const auto msg = message_of([] { ConfigBuilder().text(R"({"latency": {"mmio_read_rtt": 5}})").build(); });
    EXPECT_NE(msg.find("latency.mmio_read_rtt"), std::string::npos) << msg;
    EXPECT_NE(message_of([] { ConfigBuilder().set("workload.nope=1"); }).find("workload.nope"), std::string::npos);
}

TEST(Config, BadValuesAreNamed)
{
    auto msg = message_of([] { ConfigBuilder().set("workload.cores=0").build(); });
    EXPECT_NE(msg.find("cores"), std::string::npos) << msg;
    msg = message_of([] { ConfigBuilder().set("fito.notify_mode=carrier-pigeon").build(); });
    EXPECT_NE(msg.find("fito.notify_mode"), std::string::npos) << msg;
    msg = message_of([] { ConfigBuilder().set("latency.mmio_read_rtt_ns=-3").build(); });
    EXPECT_NE(msg.find("latency.mmio_read_rtt_ns"), std::string::npos) << msg;
    EXPECT_FALSE(message_of([] { ConfigBuilder().set("seed"); }).empty());
    EXPECT_FALSE(message_of([] { ConfigBuilder().preset("nope"); }).empty());
}

TEST(Config, LayersApplyInOrder)
{
    const fs::path dir = scratch("layers");
    fs::create_directories(dir);
    {
        std::ofstream(dir / "c.json") << R"({"seed": 7, "workload": {"cores": 3}})";
    }
    const ExperimentConfig c =
        ConfigBuilder().preset("paper-2.3").file((dir / "c.json").string()).set("workload.cores=5").build();
    EXPECT_EQ(c.preset, "paper-2.3");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.workload.cores, 5u);
    EXPECT_EQ(c.latency.uc_write_ns, 200u); // from the preset
    fs::remove_all(dir);
    EXPECT_FALSE(message_of([] { ConfigBuilder().file("/nonexistent/x.json"); }).empty());
}

TEST(Config, AllShorthandSetsEveryFlag)
{
    const ExperimentConfig on = ConfigBuilder().set("optimizations.all=true").build();
    EXPECT_EQ(on.optimizations, OptimizationFlags::all(true));
    const ExperimentConfig off = ConfigBuilder().preset("paper-2.3").set("optimizations.all=false").build();
    EXPECT_EQ(off.optimizations, OptimizationFlags::all(false));
}

TEST(Config, OneWayFollowsRoundTrip)
{
    EXPECT_EQ(ConfigBuilder().set("latency.mmio_read_rtt_ns=1000").build().latency.one_way_ns, 500u);
    const auto explicit_one_way =
        ConfigBuilder().set("latency.mmio_read_rtt_ns=1000").set("latency.one_way_ns=100").build();
    EXPECT_EQ(explicit_one_way.latency.one_way_ns, 100u);
}

TEST(Config, JsonRoundTrip)
{
    for (const auto &name : preset_names())
    {
        const ExperimentConfig c = ConfigBuilder().preset(name).build();
        const ExperimentConfig back = config_from_json(config_to_json(c));
        EXPECT_EQ(config_to_json(back), config_to_json(c)) << name;
        EXPECT_EQ(workload_digest(back), workload_digest(c));
    }
}

TEST(Config, DigestIgnoresProtocolKnobs)
{
    ExperimentConfig a = ConfigBuilder().preset("bilateral-5").build();
    ExperimentConfig b = a;
    b.optimizations = OptimizationFlags::all(!a.optimizations.wc_enabled);
    EXPECT_EQ(workload_digest(a), workload_digest(b));
    b.workload.mutation_rate_per_s += 1;
    EXPECT_NE(workload_digest(a), workload_digest(b));
}

TEST(Experiment, PresetsPassTheirChecks)
{
    for (const auto &name : preset_names())
    {
        const ExperimentConfig c = ConfigBuilder().preset(name).build();
        for (const auto &item : check_preset(c))
            EXPECT_TRUE(item.pass) << name << ": " << item.name << " " << item.detail;
    }
}

TEST(Experiment, RunSingleRejectsPaired)
{
    EXPECT_THROW(run_single(ExperimentConfig{}, Mode::Paired), std::invalid_argument);
}

TEST(Experiment, OnlineCountersAgreeWithTrace)
{
    ExperimentConfig c = ConfigBuilder().preset("flp-3.2").build();
    c.workload.run_duration_ns = 150 * kNsPerMs;
    const RunResult r = run_single(c, Mode::Fito);
    EXPECT_TRUE(r.consistency_errors.empty());
    EXPECT_EQ(r.online.committed, r.summary.committed);
    EXPECT_EQ(r.online.aborted, r.summary.aborted);
    EXPECT_EQ(r.final_state, r.replayed_state);
}

TEST(Experiment, DirectoryArtifactsAreDeterministic)
{
    ExperimentConfig c = ConfigBuilder().preset("bilateral-5").build();
    c.workload.run_duration_ns = 15 * kNsPerMs;
    const fs::path a = scratch("det-a"), b = scratch("det-b");
    run_to_directory(c, a.string());
    run_to_directory(c, b.string());
    for (const char *f : {"trace-fito.jsonl", "trace-bilateral.jsonl", "metrics.csv", "comparison.csv",
                          "resolved-config.json"})
    {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    // The resolved config reproduces the run.
    const ExperimentConfig again = ConfigBuilder().file((a / "resolved-config.json").string()).build();
    EXPECT_EQ(config_to_json(again), config_to_json(c));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Experiment, SweepWritesOneRowPerPoint)
{
    const fs::path dir = scratch("sweep");
    ConfigBuilder b;
    b.preset("paper-2.3").set("workload.run_duration_ns=200000");
    run_sweep(b, "workload.mutation_rate_per_s", {"0", "100000", "1e6"}, dir.string());
    const std::string csv = slurp(dir / "sweep.csv");
    std::size_t lines = 0;
    for (char ch : csv)
        lines += ch == '\n';
    EXPECT_EQ(lines, 4u);
    EXPECT_TRUE(fs::exists(dir / "point-02" / "trace.jsonl"));
    fs::remove_all(dir);

    EXPECT_THROW(run_sweep(b, "workload.mutation_rate_per_s", {"fast"}, dir.string()), ConfigError);
    EXPECT_THROW(run_sweep(b, "fito.notify_mode", {"1"}, dir.string()), ConfigError);
    EXPECT_THROW(run_sweep(b, "workload.cores", {}, dir.string()), ConfigError);
}

TEST(Cli, ExitCodes)
{
    const fs::path out = scratch("cli");
    EXPECT_EQ(cli("--list-presets"), 0);
    EXPECT_EQ(cli("--preset paper-2.3 --set workload.run_duration_ns=100000 --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "trace.jsonl"));
    EXPECT_EQ(cli("--preset nope --out " + out.string()), 1);
    EXPECT_EQ(cli("--set workload.cores=0 --out " + out.string()), 1);
    EXPECT_EQ(cli("--preset decision-loop-426 --check --out " + out.string()), 0);
    fs::remove_all(out);
}
