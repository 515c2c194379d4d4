#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laser/subsets.hpp"

namespace laser {

// N x K table of which feature blocks are observed. Rows may be all-false;
// such samples are dropped from training and scored as random at evaluation.
struct ObservationMask {
    int num_samples = 0;
    int num_blocks = 0;
    std::vector<std::uint8_t> observed;  // row-major

    ObservationMask() = default;
    ObservationMask(int n, int k) : num_samples(n), num_blocks(k), observed(static_cast<std::size_t>(n) * k, 0) {}

    bool at(int n, int k) const { return observed[static_cast<std::size_t>(n) * num_blocks + k] != 0; }
    void set(int n, int k, bool v) { observed[static_cast<std::size_t>(n) * num_blocks + k] = v ? 1 : 0; }
    BlockSet pattern(int n) const;
};

struct BlockProbs {
    std::vector<double> p_miss;  // per block, in [0,1]
};

// Samples grouped by identical observed pattern, already chunked into batches.
struct PatternGroup {
    BlockSet pattern = 0;
    std::vector<int> samples;
    std::vector<std::vector<int>> batches;
};

// Each block of each sample observed independently with probability 1 - p_miss.
ObservationMask sample_mask_uniform(int num_samples, int num_blocks, double p_miss, std::uint64_t seed);

// Per-block miss probabilities drawn iid from Beta(alpha, beta).
BlockProbs sample_block_probs_beta(int num_blocks, double alpha, double beta, std::uint64_t seed);

ObservationMask sample_mask_per_block(int num_samples, const BlockProbs& probs, std::uint64_t seed);

// Partition samples by exact pattern, shuffle within groups by seed, chunk into
// batches of at most batch_size (short final batch kept). Empty-pattern samples
// are excluded. Groups come back ordered by ascending pattern mask.
std::vector<PatternGroup> group_batches_by_pattern(const ObservationMask& mask, int batch_size,
                                                   std::uint64_t seed);

struct AvailabilityStats {
    double fraction_fully_observed = 0.0;
    std::vector<double> per_block_observed_rate;
    std::map<BlockSet, std::size_t> pattern_histogram;  // nonempty patterns only
};

AvailabilityStats availability_stats(const ObservationMask& mask);

// CSV exchange format: header "sample_id,block_1,...,block_K", 0/1 cells.
void save_mask_csv(const ObservationMask& mask, const std::string& path);
ObservationMask load_mask_csv(const std::string& path);

}  // namespace laser
