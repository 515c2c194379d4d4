#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace laser {

// Flat key-value run configuration; keys in the file mirror the field names.
struct RunConfig {
    // [dataset]
    std::string source = "synthetic";  // synthetic | csv
    int n_samples = 4000;
    int n_test = 1000;
    int num_clients = 4;
    std::vector<int> block_widths = {8, 8, 8, 8};
    int num_classes = 4;
    double informative_overlap = 0.3;
    double noise = 2.0;
    std::string features_csv;
    std::vector<std::pair<int, int>> block_schema;

    // [model]
    int d_rep = 16;
    std::vector<int> hidden = {32};

    // [training]
    std::vector<std::string> methods = {"laser"};
    std::vector<std::uint64_t> seeds = {1};
    std::vector<double> p_miss_train = {0.0};
    std::vector<double> p_miss_test = {0.0};
    bool has_beta = false;
    double beta_alpha = 0.0;
    double beta_beta = 0.0;
    int epochs = 5;
    int batch_size = 64;
    double lr = 0.05;
    std::string lr_schedule = "constant";  // constant | tuned_sqrt
    double plugvfl_dropout = 0.25;
    bool record_exact_loss = false;
    bool export_messages = false;

    // [output]
    std::string out_dir = "results";
};

// throws ParseError on malformed syntax, unknown keys, or bad literals
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

struct Finding {
    std::string field;
    std::string message;
};

// value-level checks (ranges, file existence, consistency); never throws
std::vector<Finding> validate_config(const RunConfig& cfg);

// canonical serialization; identical configs hash identically
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);  // 16 hex chars

}  // namespace laser
