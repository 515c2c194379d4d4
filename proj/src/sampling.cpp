#include "laser/sampling.hpp"

#include <algorithm>

#include "laser/errors.hpp"

namespace laser {

BlockRefs Batch::refs() const {
    BlockRefs out(blocks.size(), nullptr);
    for (std::size_t k = 0; k < blocks.size(); ++k)
        if (!blocks[k].empty()) out[k] = &blocks[k];
    return out;
}

ClientTaskDraw sample_tasks(int k, BlockSet observed, SplitMix64& rng) {
    if (!contains(observed, k))
        throw ContractError("client " + std::to_string(k + 1) + " is not in the observed set " +
                            subset_label(observed));
    const std::vector<int> others_base = members_of(observed & ~(BlockSet{1} << k));
    const int count = subset_size(observed);

    ClientTaskDraw draw;
    draw.client = k;
    draw.sets.reserve(static_cast<std::size_t>(count));
    for (int i = 1; i <= count; ++i) {
        std::vector<int> pool = others_base;
        BlockSet s = BlockSet{1} << k;
        // partial Fisher-Yates: the first i-1 slots are a uniform (i-1)-subset
        for (int j = 0; j < i - 1; ++j) {
            const std::size_t pick =
                static_cast<std::size_t>(j) +
                static_cast<std::size_t>(rng.next_below(pool.size() - static_cast<std::size_t>(j)));
            std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
            s |= BlockSet{1} << pool[static_cast<std::size_t>(j)];
        }
        draw.sets.push_back(s);
    }
    return draw;
}

TaskDraw sample_all_tasks(BlockSet observed, std::uint64_t step_seed) {
    TaskDraw draw;
    for (int k : members_of(observed)) {
        SplitMix64 rng(seed_for(step_seed, "tasks", static_cast<std::uint64_t>(k)));
        draw.clients.push_back(sample_tasks(k, observed, rng));
    }
    return draw;
}

double task_weight(int cardinality, int observed_count) {
    if (cardinality < 1 || cardinality > observed_count)
        throw InputError("task cardinality " + std::to_string(cardinality) + " out of range [1," +
                         std::to_string(observed_count) + "]");
    const std::uint64_t binom = binomial(observed_count - 1, cardinality - 1);
    return static_cast<double>(binom) / static_cast<double>(cardinality);
}

void validate_draw(const TaskDraw& draw, BlockSet observed) {
    const std::vector<int> members = members_of(observed);
    const int count = subset_size(observed);
    if (draw.clients.size() != members.size())
        throw ContractError("draw covers " + std::to_string(draw.clients.size()) + " clients, observed set has " +
                            std::to_string(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) {
        const ClientTaskDraw& cd = draw.clients[j];
        if (cd.client != members[j]) throw ContractError("draw clients must match the observed set in order");
        if (cd.sets.size() != static_cast<std::size_t>(count))
            throw ContractError("client " + std::to_string(cd.client + 1) + " drew " +
                                std::to_string(cd.sets.size()) + " sets, expected " + std::to_string(count));
        for (int i = 1; i <= count; ++i) {
            const BlockSet s = cd.sets[static_cast<std::size_t>(i - 1)];
            if (subset_size(s) != i || !contains(s, cd.client) || (s & ~observed) != 0)
                throw ContractError("set " + subset_label(s) + " is not a valid size-" + std::to_string(i) +
                                    " task for client " + std::to_string(cd.client + 1));
        }
    }
}

double exact_observed_loss(const ParamSet& params, const Batch& batch, BlockSet observed) {
    const int count = subset_size(observed);
    if (count == 0) throw ContractError("observed set is empty");
    if (count > 12)
        throw CapacityError("exact observed loss enumerates 2^" + std::to_string(count - 1) +
                            " subsets per client; guarded at 12 observed blocks");
    const BlockRefs refs = batch.refs();
    double total = 0.0;
    for (int k : members_of(observed)) {
        for (BlockSet mask = 1; mask <= observed; ++mask) {
            if ((mask & ~observed) != 0 || !contains(mask, k)) continue;
            const Tensor logits = predict_laser(params, k, mask, refs);
            const double ce = softmax_cross_entropy(logits, batch.labels).loss;
            total += (1.0 / static_cast<double>(subset_size(mask))) * ce;
        }
    }
    return total;
}

double estimate_loss(const ParamSet& params, const Batch& batch, BlockSet observed, const TaskDraw& draw) {
    validate_draw(draw, observed);
    const int count = subset_size(observed);
    const BlockRefs refs = batch.refs();
    double total = 0.0;
    for (const ClientTaskDraw& cd : draw.clients) {
        for (int i = 1; i <= count; ++i) {
            const Tensor logits = predict_laser(params, cd.client, cd.sets[static_cast<std::size_t>(i - 1)], refs);
            const double ce = softmax_cross_entropy(logits, batch.labels).loss;
            total += task_weight(i, count) * ce;
        }
    }
    return total;
}

namespace {

// rep nodes for every observed block, recorded client-ascending
std::vector<NodeId> build_reps(LossGraph& g, const ParamSet& params, const Batch& batch, BlockSet observed) {
    std::vector<NodeId> rep_of(static_cast<std::size_t>(params.num_clients), 0);
    for (int k : members_of(observed)) {
        if (batch.blocks[static_cast<std::size_t>(k)].empty())
            throw ContractError("block " + std::to_string(k + 1) + " is not present in the batch");
        const NodeId x = g.tape.leaf(batch.blocks[static_cast<std::size_t>(k)]);
        rep_of[static_cast<std::size_t>(k)] =
            mlp_forward_on_tape(g.tape, g.binding, params, params.rep_models[static_cast<std::size_t>(k)], x);
    }
    return rep_of;
}

NodeId task_ce(LossGraph& g, const ParamSet& params, const Batch& batch, const std::vector<NodeId>& rep_of,
               int k, BlockSet task_set) {
    std::vector<NodeId> in;
    for (int j : members_of(task_set)) in.push_back(rep_of[static_cast<std::size_t>(j)]);
    const NodeId agg = g.tape.mean(in);
    const NodeId logits =
        mlp_forward_on_tape(g.tape, g.binding, params, params.fusion_models[static_cast<std::size_t>(k)], agg);
    return g.tape.softmax_cross_entropy(logits, batch.labels);
}

}  // namespace

LossGraph build_estimate_loss(const ParamSet& params, const Batch& batch, BlockSet observed,
                              const TaskDraw& draw) {
    validate_draw(draw, observed);
    LossGraph g;
    const std::vector<NodeId> rep_of = build_reps(g, params, batch, observed);
    const int count = subset_size(observed);
    bool first = true;
    NodeId total = 0;
    for (const ClientTaskDraw& cd : draw.clients) {
        for (int i = 1; i <= count; ++i) {
            const NodeId ce = task_ce(g, params, batch, rep_of, cd.client, cd.sets[static_cast<std::size_t>(i - 1)]);
            const NodeId term = g.tape.scale(ce, task_weight(i, count));
            total = first ? term : g.tape.add(total, term);
            first = false;
        }
    }
    g.loss = total;
    return g;
}

LossGraph build_exact_observed_loss(const ParamSet& params, const Batch& batch, BlockSet observed) {
    const int count = subset_size(observed);
    if (count == 0) throw ContractError("observed set is empty");
    if (count > 12) throw CapacityError("exact observed loss guarded at 12 observed blocks");
    LossGraph g;
    const std::vector<NodeId> rep_of = build_reps(g, params, batch, observed);
    bool first = true;
    NodeId total = 0;
    for (int k : members_of(observed)) {
        for (BlockSet mask = 1; mask <= observed; ++mask) {
            if ((mask & ~observed) != 0 || !contains(mask, k)) continue;
            const NodeId ce = task_ce(g, params, batch, rep_of, k, mask);
            const NodeId term = g.tape.scale(ce, 1.0 / static_cast<double>(subset_size(mask)));
            total = first ? term : g.tape.add(total, term);
            first = false;
        }
    }
    g.loss = total;
    return g;
}

}  // namespace laser
