#include "laser/model.hpp"

#include <cmath>

#include "laser/errors.hpp"
#include "laser/rng.hpp"

namespace laser {

namespace telemetry {
thread_local std::uint64_t predictor_forward_count = 0;
}

std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    std::uint64_t num = 1, den = 1;
    for (int i = 1; i <= k; ++i) {
        num *= static_cast<std::uint64_t>(n - k + i);
        den *= static_cast<std::uint64_t>(i);
    }
    return num / den;
}

Method parse_method(const std::string& name) {
    if (name == "laser") return Method::Laser;
    if (name == "local") return Method::Local;
    if (name == "standard") return Method::Standard;
    if (name == "ensemble") return Method::Ensemble;
    if (name == "combinatorial") return Method::Combinatorial;
    if (name == "plugvfl") return Method::PlugVfl;
    throw InputError("unknown method '" + name + "'");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::Laser: return "laser";
        case Method::Local: return "local";
        case Method::Standard: return "standard";
        case Method::Ensemble: return "ensemble";
        case Method::Combinatorial: return "combinatorial";
        case Method::PlugVfl: return "plugvfl";
    }
    return "?";
}

std::size_t ParamSet::param_count() const {
    std::size_t n = 0;
    for (const Tensor& t : values) n += t.numel();
    return n;
}

bool ParamSet::all_finite() const {
    for (const Tensor& t : values)
        if (!t.all_finite()) return false;
    return true;
}

const ParamSet::SubsetTask& ParamSet::task(BlockSet members) const {
    if (members == 0 || static_cast<std::size_t>(members) > subset_tasks.size())
        throw ContractError("no predictor indexed for subset " + subset_label(members));
    return subset_tasks[members - 1];
}

namespace {

struct Builder {
    ParamSet ps;
    std::uint64_t seed;

    int add_weight(const std::string& path, int fan_in, int fan_out) {
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor w({static_cast<std::size_t>(fan_in), static_cast<std::size_t>(fan_out)});
        SplitMix64 rng(seed_for(seed, path));
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-s, s);
        ps.values.push_back(std::move(w));
        ps.paths.push_back(path);
        return static_cast<int>(ps.values.size() - 1);
    }

    int add_bias(const std::string& path, int width) {
        ps.values.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(width)});
        ps.paths.push_back(path);
        return static_cast<int>(ps.values.size() - 1);
    }

    MlpView add_mlp(const std::string& prefix, int in, const std::vector<int>& hidden, int out) {
        MlpView m;
        m.in_dim = in;
        m.out_dim = out;
        std::vector<int> sizes;
        sizes.push_back(in);
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(out);
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            const std::string tag = prefix + "/l" + std::to_string(l);
            m.weights.push_back(add_weight(tag + "/w", sizes[l], sizes[l + 1]));
            m.biases.push_back(add_bias(tag + "/b", sizes[l + 1]));
            m.relu_after.push_back(l + 2 < sizes.size() ? 1 : 0);
        }
        return m;
    }
};

void validate_shape(const DataShape& shape, const ModelDims& dims) {
    if (shape.num_clients < 1) throw InputError("num_clients must be at least 1");
    if (static_cast<int>(shape.block_widths.size()) != shape.num_clients)
        throw InputError("block_widths count does not match num_clients");
    for (int w : shape.block_widths)
        if (w < 1) throw InputError("block widths must be positive");
    if (shape.num_classes < 2) throw InputError("num_classes must be at least 2");
    if (dims.d_rep < 1) throw InputError("d_rep must be positive");
    for (int h : dims.hidden)
        if (h < 1) throw InputError("hidden widths must be positive");
}

}  // namespace

ParamSet make_param_set(Method method, const DataShape& shape, const ModelDims& dims, std::uint64_t init_seed) {
    validate_shape(shape, dims);
    Builder b;
    b.seed = init_seed;
    b.ps.method = method;
    b.ps.num_clients = shape.num_clients;
    b.ps.num_classes = shape.num_classes;
    b.ps.d_rep = dims.d_rep;
    b.ps.block_widths = shape.block_widths;

    const int K = shape.num_clients;
    const int C = shape.num_classes;

    auto subset_rep = [&](BlockSet mask, int k) {
        return b.add_mlp("subset/m" + std::to_string(mask) + "/rep" + std::to_string(k),
                         shape.block_widths[static_cast<std::size_t>(k)], dims.hidden, dims.d_rep);
    };
    auto subset_fusion = [&](BlockSet mask) {
        return b.add_mlp("subset/m" + std::to_string(mask) + "/fusion", dims.d_rep, {}, C);
    };

    switch (method) {
        case Method::Laser:
            for (int k = 0; k < K; ++k)
                b.ps.rep_models.push_back(b.add_mlp("laser/rep" + std::to_string(k),
                                                    shape.block_widths[static_cast<std::size_t>(k)], dims.hidden,
                                                    dims.d_rep));
            for (int k = 0; k < K; ++k)
                b.ps.fusion_models.push_back(b.add_mlp("laser/fusion" + std::to_string(k), dims.d_rep, {}, C));
            break;
        case Method::Local:
        case Method::Ensemble:
            for (int k = 0; k < K; ++k) b.ps.rep_models.push_back(subset_rep(BlockSet{1} << k, k));
            for (int k = 0; k < K; ++k) b.ps.fusion_models.push_back(subset_fusion(BlockSet{1} << k));
            break;
        case Method::Standard:
        case Method::PlugVfl: {
            const BlockSet full = full_set(K);
            for (int k = 0; k < K; ++k) b.ps.rep_models.push_back(subset_rep(full, k));
            b.ps.fusion_models.push_back(subset_fusion(full));
            break;
        }
        case Method::Combinatorial: {
            if (K > 10)
                throw CapacityError("combinatorial method materializes 2^K-1 predictors; capped at K=10, got K=" +
                                    std::to_string(K));
            const BlockSet full = full_set(K);
            for (BlockSet mask = 1; mask <= full; ++mask) {
                ParamSet::SubsetTask task;
                task.members = mask;
                for (int k : members_of(mask)) task.rep_models.push_back(subset_rep(mask, k));
                task.fusion = subset_fusion(mask);
                b.ps.subset_tasks.push_back(std::move(task));
            }
            break;
        }
    }
    return std::move(b.ps);
}

Tensor mlp_forward(const ParamSet& params, const MlpView& mlp, const Tensor& x) {
    if (x.cols() != static_cast<std::size_t>(mlp.in_dim))
        throw InputError("input width " + std::to_string(x.cols()) + " does not match model input " +
                         std::to_string(mlp.in_dim));
    Tensor h = x;
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
        h = matmul_add(h, params.values[static_cast<std::size_t>(mlp.weights[l])],
                       params.values[static_cast<std::size_t>(mlp.biases[l])]);
        if (mlp.relu_after[l]) h = relu(h);
    }
    return h;
}

Tensor representation_forward(const ParamSet& params, int k, const Tensor& x_k) {
    if (k < 0 || k >= params.num_clients) throw InputError("client id " + std::to_string(k) + " out of range");
    return mlp_forward(params, params.rep_models[static_cast<std::size_t>(k)], x_k);
}

Tensor aggregate_mean(const std::vector<Tensor>& reps) {
    if (reps.empty()) throw ContractError("aggregate_mean: at least one representation required");
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(reps.size());
    for (const Tensor& t : reps) ptrs.push_back(&t);
    return mean_of(ptrs);
}

namespace {

const Tensor& require_block(const BlockRefs& blocks, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= blocks.size() || blocks[static_cast<std::size_t>(k)] == nullptr)
        throw ContractError("block " + std::to_string(k + 1) + " is not present");
    return *blocks[static_cast<std::size_t>(k)];
}

Tensor fused_mean(const ParamSet& params, const std::vector<MlpView>& rep_views, const std::vector<int>& members,
                  const BlockRefs& blocks) {
    std::vector<Tensor> reps;
    reps.reserve(members.size());
    for (std::size_t i = 0; i < members.size(); ++i)
        reps.push_back(mlp_forward(params, rep_views[i], require_block(blocks, members[i])));
    return aggregate_mean(reps);
}

}  // namespace

Tensor predict_laser(const ParamSet& params, int k, BlockSet members, const BlockRefs& blocks) {
    if (members == 0) throw ContractError("task subset is empty");
    if (!contains(members, k))
        throw ContractError("client " + std::to_string(k + 1) + " is not in task subset " + subset_label(members));
    if (params.fusion_models.size() != static_cast<std::size_t>(params.num_clients))
        throw ContractError("parameter set has no per-client fusion models");
    ++telemetry::predictor_forward_count;
    std::vector<Tensor> reps;
    for (int i : members_of(members))
        reps.push_back(representation_forward(params, i, require_block(blocks, i)));
    const Tensor agg = aggregate_mean(reps);
    return mlp_forward(params, params.fusion_models[static_cast<std::size_t>(k)], agg);
}

Tensor predict_standard(const ParamSet& params, const BlockRefs& blocks) {
    if (params.fusion_models.empty()) throw ContractError("parameter set has no fusion model");
    for (int k = 0; k < params.num_clients; ++k)
        if (static_cast<std::size_t>(k) >= blocks.size() || blocks[static_cast<std::size_t>(k)] == nullptr)
            throw UnavailableError("standard predictor needs all blocks; block " + std::to_string(k + 1) +
                                   " is missing");
    std::vector<Tensor> reps;
    for (int k = 0; k < params.num_clients; ++k)
        reps.push_back(representation_forward(params, k, *blocks[static_cast<std::size_t>(k)]));
    return mlp_forward(params, params.fusion_models[0], aggregate_mean(reps));
}

Tensor predict_local(const ParamSet& params, int k, const Tensor* x_k) {
    if (x_k == nullptr) throw UnavailableError("local predictor of client " + std::to_string(k + 1) +
                                               " has no observed block");
    if (params.fusion_models.size() != static_cast<std::size_t>(params.num_clients))
        throw ContractError("parameter set has no per-client fusion models");
    std::vector<Tensor> reps;
    reps.push_back(representation_forward(params, k, *x_k));
    const Tensor agg = aggregate_mean(reps);
    return mlp_forward(params, params.fusion_models[static_cast<std::size_t>(k)], agg);
}

Tensor predict_combinatorial(const ParamSet& params, BlockSet members, const BlockRefs& blocks) {
    if (params.method != Method::Combinatorial)
        throw ContractError("predict_combinatorial requires a combinatorial parameter set");
    const ParamSet::SubsetTask& task = params.task(members);
    const Tensor agg = fused_mean(params, task.rep_models, members_of(members), blocks);
    return mlp_forward(params, task.fusion, agg);
}

Tensor predict_zero_filled(const ParamSet& params, BlockSet present, const BlockRefs& blocks,
                           std::size_t batch_rows) {
    if (params.fusion_models.empty()) throw ContractError("parameter set has no fusion model");
    std::vector<Tensor> reps;
    for (int k = 0; k < params.num_clients; ++k) {
        if (contains(present, k))
            reps.push_back(representation_forward(params, k, require_block(blocks, k)));
        else
            reps.push_back(Tensor::zeros(batch_rows, static_cast<std::size_t>(params.d_rep)));
    }
    return mlp_forward(params, params.fusion_models[0], aggregate_mean(reps));
}

NodeId TapeBinding::bind(Tape& tape, const ParamSet& params, int param_id) {
    auto it = nodes.find(param_id);
    if (it != nodes.end()) return it->second;
    const NodeId id = tape.leaf(params.values[static_cast<std::size_t>(param_id)]);
    nodes.emplace(param_id, id);
    return id;
}

NodeId mlp_forward_on_tape(Tape& tape, TapeBinding& binding, const ParamSet& params, const MlpView& mlp,
                           NodeId x) {
    NodeId h = x;
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
        const NodeId w = binding.bind(tape, params, mlp.weights[l]);
        const NodeId b = binding.bind(tape, params, mlp.biases[l]);
        h = tape.linear(h, w, b);
        if (mlp.relu_after[l]) h = tape.relu(h);
    }
    return h;
}

void GradientBuffer::accumulate(const ParamSet& params, int param_id, const Tensor& g) {
    Tensor& slot = grads[static_cast<std::size_t>(param_id)];
    if (slot.empty()) slot = Tensor(params.values[static_cast<std::size_t>(param_id)].shape());
    add_inplace(slot, g);
}

double GradientBuffer::squared_norm() const {
    double acc = 0.0;
    for (const Tensor& g : grads)
        if (!g.empty()) acc += laser::squared_norm(g);
    return acc;
}

void collect_adjoints(const Tape& tape, const TapeBinding& binding, const ParamSet& params,
                      GradientBuffer& out) {
    for (const auto& [param_id, node] : binding.nodes) {
        if (!tape.reached(node)) continue;
        out.accumulate(params, param_id, tape.adjoint(node));
    }
}

void sgd_step(ParamSet& params, const GradientBuffer& grads, double lr) {
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const Tensor& g = grads.grads[i];
        if (g.empty()) continue;
        axpy_inplace(params.values[i], -lr, g);
    }
}

}  // namespace laser
