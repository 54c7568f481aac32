// fitosim: run FITO / bilateral offload experiments from a config or preset.
#include "fitosim/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace
{
    enum Exit
    {
        kOk = 0,
        kConfigError = 1,
        kRuntimeError = 2,
        kCheckFailed = 3,
    };

    std::vector<std::string> split_values(const std::string &list)
    {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : list)
        {
            if (ch == ',')
            {
                out.push_back(cur);
                cur.clear();
            }
            else
                cur += ch;
        }
        out.push_back(cur);
        return out;
    }
} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Discrete-event simulator of host<->SmartNIC offload protocols"};
    std::string config_path, preset, out_dir = "fitosim-out", sweep;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    bool check = false, list_presets = false;

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--preset", preset, "Named preset (see --list-presets)");
    app.add_option("--set", sets, "Override a field: dotted.path=value (repeatable)");
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--sweep", sweep, "FIELD=v1,v2,... one run per value");
    app.add_flag("--check", check, "Run the preset's self-checks; exit 3 on failure");
    app.add_flag("--list-presets", list_presets, "Print preset names and exit");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    if (list_presets)
    {
        for (const auto &name : fitosim::preset_names())
            std::cout << name << '\n';
        return kOk;
    }

    fitosim::ConfigBuilder builder;
    fitosim::ExperimentConfig cfg;
    try
    {
        if (!preset.empty())
            builder.preset(preset);
        if (!config_path.empty())
            builder.file(config_path);
        for (const auto &s : sets)
            builder.set(s);
        if (seed)
            builder.set("seed=" + std::to_string(*seed));
        cfg = builder.build();
    }
    catch (const fitosim::ConfigError &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }

    try
    {
        if (!sweep.empty())
        {
            const auto eq = sweep.find('=');
            if (eq == std::string::npos)
            {
                std::cerr << "config error: --sweep expects FIELD=v1,v2,...\n";
                return kConfigError;
            }
            std::cout << fitosim::run_sweep(builder, sweep.substr(0, eq), split_values(sweep.substr(eq + 1)), out_dir);
            std::cout << "wrote " << out_dir << "/sweep.csv\n";
        }
        else
        {
            std::cout << fitosim::run_to_directory(cfg, out_dir);
            std::cout << "artifacts in " << out_dir << '\n';
        }

        if (check)
        {
            bool all = true;
            for (const auto &item : fitosim::check_preset(cfg))
            {
                std::cout << (item.pass ? "PASS " : "FAIL ") << item.name << " -- " << item.detail << '\n';
                all = all && item.pass;
            }
            if (!all)
                return kCheckFailed;
        }
    }
    catch (const fitosim::ConfigError &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}
