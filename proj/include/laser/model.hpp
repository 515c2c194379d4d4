#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "laser/autodiff.hpp"
#include "laser/subsets.hpp"
#include "laser/tensor.hpp"

namespace laser {

enum class Method { Laser, Local, Standard, Ensemble, Combinatorial, PlugVfl };

Method parse_method(const std::string& name);  // "laser", "local", ...
std::string method_name(Method m);

struct ModelDims {
    int d_rep = 16;
    std::vector<int> hidden = {32};  // hidden layers of each representation model
};

struct DataShape {
    int num_clients = 0;
    std::vector<int> block_widths;
    int num_classes = 0;
};

// An MLP is a list of (weight, bias) parameter ids into ParamSet::values.
struct MlpView {
    int in_dim = 0, out_dim = 0;
    std::vector<int> weights, biases;
    std::vector<std::uint8_t> relu_after;
};

// Parameters for one method. Storage is a flat tensor list so gradients,
// updates, and serialization all share one indexing scheme; paths are stable
// labels used to seed the per-tensor initializer.
//
//   laser / local / ensemble : rep_models[k], fusion_models[k] for each client
//   standard / plugvfl       : rep_models[k], fusion_models[0] (single head)
//   combinatorial            : subset_tasks[mask-1], one independent predictor
//                              per nonempty block subset (capped at 10 clients)
struct ParamSet {
    Method method{};
    int num_clients = 0;
    int num_classes = 0;
    int d_rep = 0;
    std::vector<int> block_widths;

    std::vector<Tensor> values;
    std::vector<std::string> paths;

    std::vector<MlpView> rep_models;
    std::vector<MlpView> fusion_models;

    struct SubsetTask {
        BlockSet members = 0;
        std::vector<MlpView> rep_models;  // aligned with members_of(members)
        MlpView fusion;
    };
    std::vector<SubsetTask> subset_tasks;

    std::size_t param_count() const;
    bool all_finite() const;
    const SubsetTask& task(BlockSet members) const;
};

ParamSet make_param_set(Method method, const DataShape& shape, const ModelDims& dims, std::uint64_t init_seed);

// --- value-path forwards -----------------------------------------------------

Tensor mlp_forward(const ParamSet& params, const MlpView& mlp, const Tensor& x);

// f_k(x_k); width of x_k must match client k's block
Tensor representation_forward(const ParamSet& params, int k, const Tensor& x_k);

// elementwise mean of |I| representations; empty input is a contract error
Tensor aggregate_mean(const std::vector<Tensor>& reps);

// Blocks are passed as a K-slot vector; a null slot means the block is absent.
using BlockRefs = std::vector<const Tensor*>;

// h_{kI}: g_k(mean_{i in I} f_i(x_i)); requires k in I and all blocks of I present
Tensor predict_laser(const ParamSet& params, int k, BlockSet members, const BlockRefs& blocks);

// standard VFL joint predictor; any absent block makes it unavailable
Tensor predict_standard(const ParamSet& params, const BlockRefs& blocks);

// h_k: g_k(f_k(x_k))
Tensor predict_local(const ParamSet& params, int k, const Tensor* x_k);

// dedicated per-subset predictor of the combinatorial family
Tensor predict_combinatorial(const ParamSet& params, BlockSet members, const BlockRefs& blocks);

// joint predictor with absent blocks replaced by zero representations (PlugVFL)
Tensor predict_zero_filled(const ParamSet& params, BlockSet present, const BlockRefs& blocks,
                           std::size_t batch_rows);

// --- tape-path forwards ------------------------------------------------------

// Lazily binds parameter tensors onto a tape, one leaf per parameter id.
struct TapeBinding {
    std::unordered_map<int, NodeId> nodes;
    NodeId bind(Tape& tape, const ParamSet& params, int param_id);
};

NodeId mlp_forward_on_tape(Tape& tape, TapeBinding& binding, const ParamSet& params, const MlpView& mlp,
                           NodeId x);

// --- gradients ----------------------------------------------------------------

struct GradientBuffer {
    std::vector<Tensor> grads;  // aligned with ParamSet::values; empty slot == zero

    explicit GradientBuffer(const ParamSet& params) : grads(params.values.size()) {}
    void accumulate(const ParamSet& params, int param_id, const Tensor& g);
    double squared_norm() const;
};

// pull every bound parameter's adjoint out of a tape after backward()
void collect_adjoints(const Tape& tape, const TapeBinding& binding, const ParamSet& params,
                      GradientBuffer& out);

void sgd_step(ParamSet& params, const GradientBuffer& grads, double lr);

namespace telemetry {
// predictor forward evaluations (value path); used by cost-accounting tests
extern thread_local std::uint64_t predictor_forward_count;
}

}  // namespace laser
