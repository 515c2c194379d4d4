#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <sstream>

#include "laser/config.hpp"
#include "laser/errors.hpp"
#include "laser/runner.hpp"

using namespace laser;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"(
[dataset]
source = synthetic
n_samples = 300
n_test = 150
num_clients = 2
block_widths = 3,3
num_classes = 2
informative_overlap = 0.3
noise = 1.5

[model]
d_rep = 4
hidden = 5

[training]
methods = local
seeds = 1
p_miss_train = 0.2
p_miss_test = 0.2
epochs = 1
batch_size = 32
lr = 0.1

[output]
out_dir = test_cli_out
)";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parsing fills every section") {
    const RunConfig cfg = parse_config_text(kSmallConfig, "inline");
    CHECK(cfg.source == "synthetic");
    CHECK(cfg.n_samples == 300);
    CHECK(cfg.num_clients == 2);
    CHECK(cfg.block_widths == std::vector<int>{3, 3});
    CHECK(cfg.methods == std::vector<std::string>{"local"});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1});
    CHECK(cfg.p_miss_train == std::vector<double>{0.2});
    CHECK(cfg.epochs == 1);
    CHECK(cfg.out_dir == "test_cli_out");
    CHECK_FALSE(cfg.has_beta);
    CHECK(validate_config(cfg).empty());
}

TEST_CASE("config parser rejects unknown keys and malformed lines") {
    CHECK_THROWS_AS(parse_config_text("[dataset]\nbogus_key = 3\n", "inline"), ParseError);
    CHECK_THROWS_AS(parse_config_text("[nowhere]\n", "inline"), ParseError);
    CHECK_THROWS_AS(parse_config_text("[dataset]\nn_samples : 5\n", "inline"), ParseError);
    CHECK_THROWS_AS(parse_config_text("[training]\nlr = fast\n", "inline"), ParseError);
}

TEST_CASE("validation findings name the offending fields") {
    RunConfig cfg = parse_config_text(kSmallConfig, "inline");
    cfg.p_miss_train = {1.2};
    auto findings = validate_config(cfg);
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].field == "p_miss_train");

    RunConfig csv_cfg = cfg;
    csv_cfg.p_miss_train = {0.2};
    csv_cfg.source = "csv";
    csv_cfg.features_csv = "definitely_missing_file.csv";
    csv_cfg.block_schema = {{0, 3}, {3, 6}};
    findings = validate_config(csv_cfg);
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].field == "features_csv");

    RunConfig half_beta = parse_config_text(std::string(kSmallConfig) + "\n[training]\nbeta_alpha = 2.0\n",
                                            "inline");
    findings = validate_config(half_beta);
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].field == "beta_beta");
}

TEST_CASE("config hashing is stable and sensitive") {
    const RunConfig a = parse_config_text(kSmallConfig, "inline");
    const RunConfig b = parse_config_text(kSmallConfig, "inline");
    CHECK(config_hash(a) == config_hash(b));
    RunConfig c = a;
    c.lr = 0.2;
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("a 1x1x1x1 run produces exactly one results row and one trace file") {
    RunConfig cfg = parse_config_text(kSmallConfig, "inline");
    cfg.out_dir = "test_cli_out_single";
    fs::remove_all(cfg.out_dir);
    std::ostringstream log;
    const RunOutcome outcome = run_experiment(cfg, log);
    CHECK(outcome.exit_code == 0);

    const std::string results = read_file(fs::path(outcome.run_dir) / "results.csv");
    CHECK(std::count(results.begin(), results.end(), '\n') == 2);  // header + one row

    std::size_t traces = 0;
    for (const auto& entry : fs::directory_iterator(outcome.run_dir))
        if (entry.path().filename().string().rfind("trace_", 0) == 0) ++traces;
    CHECK(traces == 1);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("rerunning a config yields byte-identical outputs, serial or threaded") {
    RunConfig cfg = parse_config_text(kSmallConfig, "inline");
    cfg.methods = {"local", "laser"};
    cfg.seeds = {1, 2};
    cfg.out_dir = "test_cli_out_a";
    fs::remove_all("test_cli_out_a");
    fs::remove_all("test_cli_out_b");

    std::ostringstream log;
    unsetenv("LASER_VFL_THREADS");
    const RunOutcome serial = run_experiment(cfg, log);

    cfg.out_dir = "test_cli_out_b";
    setenv("LASER_VFL_THREADS", "4", 1);
    const RunOutcome threaded = run_experiment(cfg, log);
    unsetenv("LASER_VFL_THREADS");

    CHECK(read_file(fs::path(serial.run_dir) / "aggregate.csv") ==
          read_file(fs::path(threaded.run_dir) / "aggregate.csv"));
    CHECK(read_file(fs::path(serial.run_dir) / "results.csv") ==
          read_file(fs::path(threaded.run_dir) / "results.csv"));
    fs::remove_all("test_cli_out_a");
    fs::remove_all("test_cli_out_b");
}

TEST_CASE("aggregate statistics recompute from the per-run rows") {
    RunConfig cfg = parse_config_text(kSmallConfig, "inline");
    cfg.methods = {"local"};
    cfg.seeds = {1, 2, 3};
    cfg.out_dir = "test_cli_out_agg";
    fs::remove_all(cfg.out_dir);
    std::ostringstream log;
    const RunOutcome outcome = run_experiment(cfg, log);

    double mean = 0.0;
    for (const ResultRow& r : outcome.rows) mean += r.accuracy;
    mean /= 3.0;
    double var = 0.0;
    for (const ResultRow& r : outcome.rows) var += (r.accuracy - mean) * (r.accuracy - mean);
    const double stddev = std::sqrt(var / 2.0);

    const std::string agg = read_file(fs::path(outcome.run_dir) / "aggregate.csv");
    std::istringstream lines(agg);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream rs(row);
    while (std::getline(rs, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() >= 6);
    CHECK(std::abs(std::stod(cells[4]) - mean) < 1e-12);
    CHECK(std::abs(std::stod(cells[5]) - stddev) < 1e-12);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("beta mode replaces the probability grid with one nonuniform cell") {
    RunConfig cfg = parse_config_text(kSmallConfig, "inline");
    cfg.has_beta = true;
    cfg.beta_alpha = 2.0;
    cfg.beta_beta = 2.0;
    cfg.out_dir = "test_cli_out_beta";
    fs::remove_all(cfg.out_dir);
    CHECK(validate_config(cfg).empty());
    std::ostringstream log;
    const RunOutcome outcome = run_experiment(cfg, log);
    CHECK(outcome.exit_code == 0);
    const std::string results = read_file(fs::path(outcome.run_dir) / "results.csv");
    CHECK(results.find("beta") != std::string::npos);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("grid cardinality: methods x p-grid x seeds result rows") {
    RunConfig cfg = parse_config_text(kSmallConfig, "inline");
    cfg.n_samples = 40;
    cfg.n_test = 20;
    cfg.batch_size = 40;
    cfg.d_rep = 2;
    cfg.hidden = {};
    cfg.methods = {"local", "laser", "standard"};
    cfg.seeds = {1, 2};
    cfg.p_miss_train = {0.0, 0.5, 1.0};
    cfg.p_miss_test = {0.0, 0.5, 1.0};
    cfg.out_dir = "test_cli_out_grid";
    fs::remove_all(cfg.out_dir);
    std::ostringstream log;
    const RunOutcome outcome = run_experiment(cfg, log);
    CHECK(outcome.exit_code == 0);
    const std::string results = read_file(fs::path(outcome.run_dir) / "results.csv");
    // 3 methods x 3x3 grid x 2 seeds
    CHECK(std::count(results.begin(), results.end(), '\n') == 1 + 3 * 9 * 2);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("message log export writes the audit csv for the split protocol") {
    RunConfig cfg = parse_config_text(kSmallConfig, "inline");
    cfg.methods = {"laser"};
    cfg.export_messages = true;
    cfg.out_dir = "test_cli_out_msgs";
    fs::remove_all(cfg.out_dir);
    std::ostringstream log;
    const RunOutcome outcome = run_experiment(cfg, log);
    CHECK(outcome.exit_code == 0);
    bool found = false;
    for (const auto& entry : fs::directory_iterator(outcome.run_dir))
        if (entry.path().filename().string().rfind("messages_", 0) == 0) {
            found = true;
            const std::string text = read_file(entry.path());
            CHECK(text.rfind("step,kind,sender,receiver,rows,cols", 0) == 0);
        }
    CHECK(found);
    fs::remove_all(cfg.out_dir);
}
