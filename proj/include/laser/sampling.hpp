#pragma once

#include <cstdint>
#include <vector>

#include "laser/autodiff.hpp"
#include "laser/model.hpp"
#include "laser/rng.hpp"
#include "laser/subsets.hpp"

namespace laser {

// A batch handed to the loss routines: K block slots (empty tensor = absent)
// plus integer labels.
struct Batch {
    std::vector<Tensor> blocks;
    std::vector<int> labels;

    std::size_t rows() const { return labels.size(); }
    BlockRefs refs() const;
};

// One client's sampled tasks for a step: sets[i-1] holds S_{k,i}, the sampled
// subset of the observed blocks with cardinality i that contains the client.
struct ClientTaskDraw {
    int client = 0;
    std::vector<BlockSet> sets;
};

struct TaskDraw {
    std::vector<ClientTaskDraw> clients;  // ascending client id, one per observed block
};

// S_{k,i} = {k} union (uniform (i-1)-subset of observed \ {k}), drawn by a
// partial Fisher-Yates shuffle.
ClientTaskDraw sample_tasks(int k, BlockSet observed, SplitMix64& rng);

// Draws for every observed client from independent sub-streams of step_seed.
TaskDraw sample_all_tasks(BlockSet observed, std::uint64_t step_seed);

// a_i = (1/i) * C(observed_count - 1, i - 1); the binomial is exact integer
// arithmetic, converted to double by one division.
double task_weight(int cardinality, int observed_count);

void validate_draw(const TaskDraw& draw, BlockSet observed);

// Exact weighted loss over every observed subset-task (enumerates
// |K_o| * 2^(|K_o|-1) predictor evaluations; guarded at |K_o| <= 12).
double exact_observed_loss(const ParamSet& params, const Batch& batch, BlockSet observed);

// Sampled estimate: |K_o|^2 predictor evaluations per batch.
double estimate_loss(const ParamSet& params, const Batch& batch, BlockSet observed, const TaskDraw& draw);

// --- tape builders (end-to-end differentiable routes) ------------------------

struct LossGraph {
    Tape tape;
    TapeBinding binding;
    NodeId loss = 0;
};

LossGraph build_estimate_loss(const ParamSet& params, const Batch& batch, BlockSet observed,
                              const TaskDraw& draw);
LossGraph build_exact_observed_loss(const ParamSet& params, const Batch& batch, BlockSet observed);

}  // namespace laser
