#include "laser/missingness.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "laser/errors.hpp"
#include "laser/rng.hpp"

namespace laser {

BlockSet ObservationMask::pattern(int n) const {
    BlockSet s = 0;
    for (int k = 0; k < num_blocks; ++k)
        if (at(n, k)) s |= BlockSet{1} << k;
    return s;
}

ObservationMask sample_mask_uniform(int num_samples, int num_blocks, double p_miss, std::uint64_t seed) {
    if (!(p_miss >= 0.0 && p_miss <= 1.0))
        throw InputError("p_miss must lie in [0,1], got " + std::to_string(p_miss));
    ObservationMask mask(num_samples, num_blocks);
    SplitMix64 rng(seed);
    for (int n = 0; n < num_samples; ++n)
        for (int k = 0; k < num_blocks; ++k) mask.set(n, k, rng.next_double() >= p_miss);
    return mask;
}

BlockProbs sample_block_probs_beta(int num_blocks, double alpha, double beta, std::uint64_t seed) {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw InputError("beta shape parameters must be positive");
    BlockProbs probs;
    probs.p_miss.reserve(static_cast<std::size_t>(num_blocks));
    SplitMix64 rng(seed);
    for (int k = 0; k < num_blocks; ++k) probs.p_miss.push_back(beta_sample(alpha, beta, rng));
    return probs;
}

ObservationMask sample_mask_per_block(int num_samples, const BlockProbs& probs, std::uint64_t seed) {
    for (double p : probs.p_miss)
        if (!(p >= 0.0 && p <= 1.0)) throw InputError("block probability out of [0,1]: " + std::to_string(p));
    const int num_blocks = static_cast<int>(probs.p_miss.size());
    ObservationMask mask(num_samples, num_blocks);
    SplitMix64 rng(seed);
    for (int n = 0; n < num_samples; ++n)
        for (int k = 0; k < num_blocks; ++k)
            mask.set(n, k, rng.next_double() >= probs.p_miss[static_cast<std::size_t>(k)]);
    return mask;
}

std::vector<PatternGroup> group_batches_by_pattern(const ObservationMask& mask, int batch_size,
                                                   std::uint64_t seed) {
    if (batch_size < 1) throw InputError("batch_size must be at least 1");
    // one global permutation; restricted to a group it is a uniform shuffle of it
    SplitMix64 rng(seed);
    const std::vector<int> order = permutation(mask.num_samples, rng);

    std::map<BlockSet, std::vector<int>> by_pattern;
    for (int pos = 0; pos < mask.num_samples; ++pos) {
        const int n = order[static_cast<std::size_t>(pos)];
        const BlockSet p = mask.pattern(n);
        if (p == 0) continue;
        by_pattern[p].push_back(n);
    }

    std::vector<PatternGroup> groups;
    groups.reserve(by_pattern.size());
    for (auto& [pattern, samples] : by_pattern) {
        PatternGroup g;
        g.pattern = pattern;
        g.samples = samples;
        for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
            const std::size_t stop = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
            g.batches.emplace_back(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                   samples.begin() + static_cast<std::ptrdiff_t>(stop));
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

AvailabilityStats availability_stats(const ObservationMask& mask) {
    AvailabilityStats stats;
    stats.per_block_observed_rate.assign(static_cast<std::size_t>(mask.num_blocks), 0.0);
    if (mask.num_samples == 0) return stats;
    std::size_t fully = 0;
    for (int n = 0; n < mask.num_samples; ++n) {
        const BlockSet p = mask.pattern(n);
        if (p == full_set(mask.num_blocks)) ++fully;
        if (p != 0) ++stats.pattern_histogram[p];
        for (int k = 0; k < mask.num_blocks; ++k)
            if (mask.at(n, k)) stats.per_block_observed_rate[static_cast<std::size_t>(k)] += 1.0;
    }
    for (double& r : stats.per_block_observed_rate) r /= static_cast<double>(mask.num_samples);
    stats.fraction_fully_observed = static_cast<double>(fully) / static_cast<double>(mask.num_samples);
    return stats;
}

void save_mask_csv(const ObservationMask& mask, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << "sample_id";
    for (int k = 0; k < mask.num_blocks; ++k) out << ",block_" << (k + 1);
    out << "\n";
    for (int n = 0; n < mask.num_samples; ++n) {
        out << n;
        for (int k = 0; k < mask.num_blocks; ++k) out << ',' << (mask.at(n, k) ? 1 : 0);
        out << "\n";
    }
}

ObservationMask load_mask_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::size_t cols = 1;
    for (char c : line)
        if (c == ',') ++cols;
    if (cols < 2 || line.rfind("sample_id,", 0) != 0)
        throw ParseError(path + ": expected header 'sample_id,block_1,...'");
    const int num_blocks = static_cast<int>(cols - 1);

    std::vector<std::uint8_t> cells;
    int rows = 0;
    for (int lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col > 0) {
                if (cell != "0" && cell != "1")
                    throw ParseError(path + ": row " + std::to_string(lineno) + " column " + std::to_string(col + 1) +
                                     ": expected 0 or 1, got '" + cell + "'");
                cells.push_back(cell == "1" ? 1 : 0);
            }
            ++col;
        }
        if (col != static_cast<int>(cols))
            throw ParseError(path + ": row " + std::to_string(lineno) + " has " + std::to_string(col) +
                             " cells, expected " + std::to_string(cols));
        ++rows;
    }
    ObservationMask mask(rows, num_blocks);
    mask.observed = std::move(cells);
    return mask;
}

}  // namespace laser
