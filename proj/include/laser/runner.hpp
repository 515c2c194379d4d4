#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "laser/config.hpp"

namespace laser {

struct ResultRow {
    std::string method;
    std::string p_train_label;
    std::string p_test_label;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    bool has_f1 = false;
    double f1 = 0.0;
    std::size_t fallbacks = 0;
    bool failed = false;
    std::string error;
};

struct RunOutcome {
    int exit_code = 0;  // 0 ok, 2 partial failures
    std::string run_dir;
    std::vector<ResultRow> rows;
};

// Execute the full (method x p_train x p_test x seed) grid. Cells run in
// parallel up to the LASER_VFL_THREADS cap (0 or unset = serial); outputs are
// written in a fixed order so the thread count never changes the bytes.
RunOutcome run_experiment(const RunConfig& cfg, std::ostream& log);

// thread cap from the environment; 0 or unset means serial
int thread_cap_from_env();

}  // namespace laser
