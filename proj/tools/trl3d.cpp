#include <chrono>
#include <ctime>
#include <iostream>

#include "CLI11.hpp"
#include "trl3d/app/commands.hpp"
#include "trl3d/core/runtime.hpp"

int main(int argc, char** argv) {
    CLI::App app{"trl3d: 3D token representation layer experiments"};
    std::string command;
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;

    std::string names;
    for (const auto& n : trl3d::command_names()) names += (names.empty() ? "" : ", ") + n;
    app.add_option("command", command, "One of: " + names)->required();
    app.add_option("--config", config_path, "key=value config file")->required();
    app.add_option("--out", out_dir, "Output directory (default: runs/<command>-<timestamp>)");
    auto* seed_opt = app.add_option("--seed", seed, "Overrides the config seed");
    CLI11_PARSE(app, argc, argv);
    trl3d::tune_allocator();

    try {
        trl3d::RunConfig cfg = trl3d::RunConfig::load(config_path);
        if (*seed_opt) cfg.set("seed", std::to_string(seed));
        if (out_dir.empty()) {
            const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
            char stamp[32];
            std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
            out_dir = "runs/" + command + "-" + stamp;
        }
        return trl3d::run_command(command, cfg, out_dir, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "trl3d: " << e.what() << "\n";
        return 1;
    }
}
