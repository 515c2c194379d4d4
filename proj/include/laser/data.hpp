#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "laser/model.hpp"
#include "laser/sampling.hpp"
#include "laser/tensor.hpp"

namespace laser {

// The global dataset: N samples split column-wise into K feature blocks plus a
// label per sample. Concatenating the blocks reassembles the full feature row.
struct PartitionedDataset {
    int num_samples = 0;
    int num_clients = 0;
    int num_classes = 0;
    std::vector<int> block_widths;
    std::vector<Tensor> blocks;  // K tensors, each N x width_k
    std::vector<int> labels;

    DataShape shape() const { return DataShape{num_clients, block_widths, num_classes}; }
};

// Gaussian class-conditional mixture. Each block carries its own class signal
// blended with a shared one; informative_overlap in [0,1] moves the blend from
// fully complementary (0) to fully redundant (1). Columns are standardized.
PartitionedDataset synth_classification(int n_samples, int num_clients, const std::vector<int>& widths,
                                        int num_classes, double informative_overlap, double noise,
                                        std::uint64_t seed);

// keep the first n rows / the rows after the first n (train-test splitting)
PartitionedDataset head_rows(const PartitionedDataset& ds, int n);
PartitionedDataset tail_rows(const PartitionedDataset& ds, int n_skip);

// CSV format: header "sample_id,f0,...,f{W-1},label"; doubles are written
// shortest-round-trip so save/load is bit exact.
void save_dataset_csv(const PartitionedDataset& ds, const std::string& path);

// block_ranges are half-open column ranges over the feature columns; they must
// partition [0, W) contiguously.
PartitionedDataset load_csv(const std::string& path, const std::vector<std::pair<int, int>>& block_ranges);

// gather rows into a Batch; only block slots named in `needed` are filled
Batch make_batch(const PartitionedDataset& ds, const std::vector<int>& rows, BlockSet needed);

// single-sample block as a 1-row tensor
Tensor sample_block(const PartitionedDataset& ds, int k, int n);

// --- quadratic testbed --------------------------------------------------------

// Least-squares objective (1/N) |A theta - b|^2 whose Hessian spectrum spans
// [mu, l_smooth] exactly (l_smooth normalized to 1), with the optimum known in
// closed form.
struct QuadraticTestbed {
    Tensor design;               // N x dim
    std::vector<double> target;  // N
    std::vector<double> theta_start;
    std::vector<double> theta_opt;
    double loss_opt = 0.0;
    double mu = 0.0;
    double l_smooth = 0.0;

    int dim() const { return static_cast<int>(design.cols()); }
    int n_rows() const { return static_cast<int>(design.rows()); }

    double loss(const std::vector<double>& theta) const;
    std::vector<double> grad(const std::vector<double>& theta) const;
    std::vector<double> batch_grad(const std::vector<double>& theta, const std::vector<int>& rows) const;
};

QuadraticTestbed quadratic_testbed(int dim, double condition_number, std::uint64_t seed, int n_rows = 512);

// The same least-squares data viewed as a K-block problem with linear
// per-block maps and identity fusion: every nonempty block subset I defines
// the task h_I(x) = (1/|I|) sum_{i in I} w_i . x_i with squared-error loss.
// The summed objective stays quadratic, so mu, L, and the optimum are exact,
// while the task-sampling estimator applies verbatim.
struct SubsetQuadratic {
    Tensor design;
    std::vector<double> target;
    int num_blocks = 0;
    std::vector<int> block_of_col;  // column -> block id
    std::vector<double> theta_start;
    std::vector<double> theta_opt;
    double loss_opt = 0.0;
    double mu = 0.0;
    double l_smooth = 0.0;
    std::vector<std::vector<double>> hessian;  // dense, dim x dim
    std::vector<double> linear_term;
    double constant_term = 0.0;

    int dim() const { return static_cast<int>(design.cols()); }

    double loss(const std::vector<double>& theta) const;
    std::vector<double> grad(const std::vector<double>& theta) const;
    // unbiased estimator gradient: mini-batch rows + one TaskDraw (all blocks observed)
    std::vector<double> sampled_grad(const std::vector<double>& theta, const std::vector<int>& rows,
                                     const TaskDraw& draw) const;
};

SubsetQuadratic subset_quadratic(const QuadraticTestbed& base, int num_blocks);

}  // namespace laser
