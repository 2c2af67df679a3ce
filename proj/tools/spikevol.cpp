// spikevol: one subcommand per invocation, configured by a JSON document.
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikevol/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthetic wheat-spike volume estimation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    std::string method = "area";
    const std::vector<std::string> names = {"gen", "baseline", "train", "finetune", "eval", "report"};
    for (const auto& name : names) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--set", sets, "override a config field, e.g. --set training.epochs=50");
        if (name == "baseline") sub->add_option("--method", method, "area or geo")->check(CLI::IsMember({"area", "geo"}));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        auto config = spikevol::cli::load_config(config_path);
        spikevol::cli::apply_overrides(config, sets);
        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "gen") spikevol::cli::cmd_gen(config);
        else if (sub == "baseline") spikevol::cli::cmd_baseline(config, method);
        else if (sub == "train") spikevol::cli::cmd_train(config);
        else if (sub == "finetune") spikevol::cli::cmd_finetune(config);
        else if (sub == "eval") spikevol::cli::cmd_eval(config);
        else spikevol::cli::cmd_report(config);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "spikevol: %s\n", e.what());
        return spikevol::cli::exit_code_for(e);
    }
    return 0;
}
