// Command-line front end: `run` executes a configured experiment, `gen`
// writes train/test CSV datasets from the built-in simulators, `score`
// compares a prediction file against a truth file.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dynemu/dynemu.hpp"

namespace {

int cmd_run(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot open config file " << config_path << "\n";
        return 1;
    }
    dynemu::json cfg_json;
    try {
        cfg_json = dynemu::json::parse(in);
    } catch (const dynemu::json::exception& e) {
        std::cerr << "error: " << config_path << ": " << e.what() << "\n";
        return 1;
    }
    dynemu::ExperimentConfig cfg = dynemu::parse_config(cfg_json);
    dynemu::json report = dynemu::run_experiment(cfg);

    const auto& agg = report.at("aggregate");
    std::cout << "method: " << dynemu::method_name(cfg.method) << "\n";
    std::cout << "repetitions: " << cfg.repetitions << "\n";
    if (agg.at("mean_nmspe").is_number()) {
        std::cout << "mean NMSPE: " << agg.at("mean_nmspe").get<double>() << "\n";
        std::cout << "log mean NMSPE: " << agg.at("log_mean_nmspe").get<double>() << "\n";
    }
    if (agg.at("mean_score").is_number())
        std::cout << "mean proper score: " << agg.at("mean_score").get<double>() << "\n";

    if (!cfg.output.empty()) {
        std::filesystem::path out(cfg.output);
        if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
        std::ofstream of(cfg.output);
        if (!of) {
            std::cerr << "error: cannot write report to " << cfg.output << "\n";
            return 1;
        }
        of << report.dump(2) << "\n";
        std::cout << "report: " << cfg.output << "\n";
    } else {
        std::cout << report.dump(2) << "\n";
    }
    return 0;
}

int cmd_gen(const std::string& sim, long long n, long long m, unsigned long long seed,
            const std::string& out_dir, long long grid_len) {
    const bool env = sim == "environ";
    dynemu::InputDomain dom = env ? dynemu::environ_domain() : dynemu::forrester_domain();
    dynemu::TimeGrid grid = env ? dynemu::environ_grid() : dynemu::forrester_grid();
    if (grid_len > 1) grid.length = grid_len;
    auto f = [&](const dynemu::Vector& x, const dynemu::TimeGrid& g) {
        return env ? dynemu::environ(x, g) : dynemu::forrester(x, g);
    };
    dynemu::Matrix X = dynemu::lhd(n, dom, dynemu::derive_seed(seed, 0));
    dynemu::Matrix XT = dynemu::lhd(m, dom, dynemu::derive_seed(seed, 1));
    dynemu::Matrix Y = dynemu::evaluate_rows(f, X, grid);
    dynemu::Matrix YT = dynemu::evaluate_rows(f, XT, grid);

    std::filesystem::create_directories(out_dir);
    dynemu::write_csv_matrix(out_dir + "/design.csv", X, "x");
    dynemu::write_csv_matrix(out_dir + "/response.csv", Y, "y");
    dynemu::write_csv_matrix(out_dir + "/test_design.csv", XT, "x");
    dynemu::write_csv_matrix(out_dir + "/test_response.csv", YT, "y");
    dynemu::write_csv_matrix(out_dir + "/grid.csv", grid.points(), "t");
    std::cout << "wrote " << sim << " datasets (n=" << n << ", m=" << m
              << ", L=" << grid.length << ") to " << out_dir << "\n";
    return 0;
}

int cmd_score(const std::string& pred_path, const std::string& truth_path,
              const std::string& var_path, const std::string& out_path) {
    dynemu::Matrix pred = dynemu::read_csv_matrix(pred_path);
    dynemu::Matrix truth = dynemu::read_csv_matrix(truth_path);
    dynemu::Matrix var;
    if (!var_path.empty()) var = dynemu::read_csv_matrix(var_path);
    dynemu::ScoreReport sr = dynemu::score_report(truth, pred, var);

    dynemu::json j;
    j["mean_nmspe"] = sr.mean_nmspe;
    j["log_mean_nmspe"] = sr.log_mean_nmspe;
    j["mean_score"] = sr.mean_score;
    j["scored"] = sr.scored;
    j["excluded"] = sr.excluded;
    j["per_point_nmspe"] = std::vector<double>(
        sr.per_point_nmspe.data(), sr.per_point_nmspe.data() + sr.per_point_nmspe.size());
    j["per_point_score"] = std::vector<double>(
        sr.per_point_score.data(), sr.per_point_score.data() + sr.per_point_score.size());

    std::cout << "points scored: " << sr.scored << " (excluded: " << sr.excluded << ")\n";
    std::cout << "mean NMSPE: " << sr.mean_nmspe << "\n";
    std::cout << "log mean NMSPE: " << sr.log_mean_nmspe << "\n";
    if (!var_path.empty()) std::cout << "mean proper score: " << sr.mean_score << "\n";
    if (!out_path.empty()) {
        std::ofstream of(out_path);
        if (!of) {
            std::cerr << "error: cannot write " << out_path << "\n";
            return 1;
        }
        of << j.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Emulator for dynamic (time-series output) computer simulators"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* run = app.add_subcommand("run", "run an experiment from a JSON config");
    run->add_option("--config", config_path, "path to the JSON config")->required();

    std::string sim, out_dir = ".";
    long long gen_n = 100, gen_m = 20, grid_len = 0;
    unsigned long long gen_seed = 42;
    CLI::App* gen = app.add_subcommand("gen", "generate CSV datasets from a built-in simulator");
    gen->add_option("--sim", sim, "simulator: forrester or environ")
        ->required()
        ->check(CLI::IsMember({"forrester", "environ"}));
    gen->add_option("--n", gen_n, "training design size")->check(CLI::PositiveNumber);
    gen->add_option("--m", gen_m, "test design size")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--out", out_dir, "output directory");
    gen->add_option("--l", grid_len, "time grid length (default 200)");

    std::string pred_path, truth_path, var_path, score_out;
    CLI::App* sc = app.add_subcommand("score", "score predictions against truth");
    sc->add_option("--pred", pred_path, "predicted means CSV (L rows x M cols)")->required();
    sc->add_option("--truth", truth_path, "truth CSV (L rows x M cols)")->required();
    sc->add_option("--var", var_path, "predictive variances CSV (enables the proper score)");
    sc->add_option("--out", score_out, "write the score report JSON here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (gen->parsed()) return cmd_gen(sim, gen_n, gen_m, gen_seed, out_dir, grid_len);
        return cmd_score(pred_path, truth_path, var_path, score_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
