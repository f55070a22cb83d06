#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kolstack/cli.hpp"
#include "kolstack/scenario.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical leader-follower control of degenerate parabolic chains"};
    app.require_subcommand(1);

    kolstack::CliOptions opts;
    std::uint64_t seed_value = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* cmd, bool scenario_required) {
        auto* s = cmd->add_option("--scenario", opts.scenario_path, "scenario JSON file");
        if (scenario_required) s->required();
        cmd->add_option("--out", opts.out_dir, "output directory (default runs/<name>-<command>)");
        cmd->add_option("--seed", seed_value, "override the scenario seed")
            ->each([&](const std::string&) { seed_given = true; });
        cmd->add_option("--threads", opts.threads, "worker threads for path generation");
        cmd->add_option("--log-level", opts.log_level, "quiet | info | debug")
            ->check(CLI::IsMember({"quiet", "info", "debug"}));
    };

    add_common(app.add_subcommand("follower", "follower best response at the configured leader control"), true);
    add_common(app.add_subcommand("stackelberg", "full leader-follower pipeline"), true);
    add_common(app.add_subcommand("sweep-alpha", "terminal-ball sweep with warm starts"), true);
    add_common(app.add_subcommand("fk-check", "Monte Carlo vs PDE consistency check"), true);
    add_common(app.add_subcommand("selftest", "built-in diagnostics on a small instance"), false);
    auto* tmpl = app.add_subcommand("print-scenario", "print the default scenario JSON template");

    CLI11_PARSE(app, argc, argv);

    if (tmpl->parsed()) {
        std::cout << kolstack::scenario_to_json(kolstack::default_scenario()) << "\n";
        return 0;
    }
    if (seed_given) opts.seed = seed_value;
    return kolstack::run_command(app.get_subcommands().front()->get_name(), opts);
}
