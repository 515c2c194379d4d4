#include "laser/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "laser/errors.hpp"
#include "laser/rng.hpp"

namespace laser {

std::string message_kind_name(Message::Kind kind) {
    return kind == Message::Kind::RepBroadcast ? "rep_broadcast" : "grad_return";
}

std::map<int, std::vector<Message>> harness_deliver(std::vector<Message> messages,
                                                    const std::vector<int>& participants, long step,
                                                    Message::Kind expected_kind, MessageLog* log) {
    std::map<int, std::size_t> sent_count;
    for (int p : participants) sent_count[p] = 0;

    for (const Message& m : messages) {
        if (m.kind != expected_kind)
            throw ProtocolError("unexpected " + message_kind_name(m.kind) + " during the " +
                                message_kind_name(expected_kind) + " phase of step " + std::to_string(step));
        if (!sent_count.count(m.sender))
            throw ProtocolError("client " + std::to_string(m.sender + 1) + " is not participating in step " +
                                std::to_string(step));
        if (!sent_count.count(m.receiver) || m.receiver == m.sender)
            throw ProtocolError("message to invalid receiver " + std::to_string(m.receiver + 1) + " at step " +
                                std::to_string(step));
        ++sent_count[m.sender];
    }

    const std::size_t expected = participants.size() - 1;
    for (int p : participants)
        if (sent_count[p] != expected)
            throw ProtocolError("client " + std::to_string(p + 1) + " sent " + std::to_string(sent_count[p]) +
                                " messages at the step-" + std::to_string(step) + " barrier, expected " +
                                std::to_string(expected));

    if (log)
        for (const Message& m : messages)
            log->push_back(MessageMeta{m.step, m.kind, m.sender, m.receiver, m.payload.rows(), m.payload.cols()});

    std::map<int, std::vector<Message>> inboxes;
    for (int p : participants) inboxes[p];
    std::stable_sort(messages.begin(), messages.end(),
                     [](const Message& a, const Message& b) { return a.sender < b.sender; });
    for (Message& m : messages) inboxes[m.receiver].push_back(std::move(m));
    return inboxes;
}

StepRecord laser_train_step(ParamSet& params, const Batch& batch, BlockSet observed, double lr,
                            std::uint64_t step_seed, long step_index, MessageLog* log, bool record_exact) {
    StepRecord rec;
    rec.step = step_index;
    rec.pattern = observed;
    if (observed == 0) {
        rec.skipped = true;
        return rec;
    }
    if (lr < 0.0) throw InputError("learning rate must be nonnegative");
    const std::vector<int> participants = members_of(observed);
    const int count = static_cast<int>(participants.size());

    // phase 1: each client runs its representation model and broadcasts the result
    struct RepState {
        Tape tape;
        TapeBinding binding;
        NodeId out = 0;
    };
    std::map<int, RepState> rep_states;
    std::vector<Message> broadcasts;
    for (int k : participants) {
        const Tensor& block = batch.blocks[static_cast<std::size_t>(k)];
        if (block.empty()) throw ContractError("batch lacks block " + std::to_string(k + 1));
        RepState st;
        const NodeId x = st.tape.leaf(block);
        st.out = mlp_forward_on_tape(st.tape, st.binding, params, params.rep_models[static_cast<std::size_t>(k)], x);
        for (int j : participants)
            if (j != k)
                broadcasts.push_back(Message{Message::Kind::RepBroadcast, k, j, step_index, st.tape.value(st.out)});
        rep_states.emplace(k, std::move(st));
    }
    auto rep_inboxes =
        harness_deliver(std::move(broadcasts), participants, step_index, Message::Kind::RepBroadcast, log);

    // phase 2: per-client task sampling, fusion forward, fusion backward
    GradientBuffer grads(params);
    double loss_est = 0.0;
    std::vector<Message> returns;
    std::map<int, Tensor> own_rep_grad;  // client k's gradient w.r.t. its own representation
    for (int k : participants) {
        SplitMix64 rng(seed_for(step_seed, "tasks", static_cast<std::uint64_t>(k)));
        const ClientTaskDraw draw = sample_tasks(k, observed, rng);

        Tape tape;
        TapeBinding binding;
        std::map<int, NodeId> rep_leaf;
        std::size_t inbox_pos = 0;
        const auto& inbox = rep_inboxes[k];
        for (int j : participants) {
            if (j == k) {
                rep_leaf[j] = tape.leaf(rep_states.at(k).tape.value(rep_states.at(k).out));
            } else {
                const Message& m = inbox[inbox_pos++];
                if (m.sender != j)
                    throw ProtocolError("inbox of client " + std::to_string(k + 1) + " is not in sender order");
                rep_leaf[j] = tape.leaf(m.payload);
            }
        }

        NodeId loss_node = 0;
        bool first = true;
        for (int i = 1; i <= count; ++i) {
            std::vector<NodeId> in;
            for (int j : members_of(draw.sets[static_cast<std::size_t>(i - 1)])) in.push_back(rep_leaf.at(j));
            const NodeId agg = tape.mean(in);
            const NodeId logits =
                mlp_forward_on_tape(tape, binding, params, params.fusion_models[static_cast<std::size_t>(k)], agg);
            const NodeId ce = tape.softmax_cross_entropy(logits, batch.labels);
            const NodeId term = tape.scale(ce, task_weight(i, count));
            loss_node = first ? term : tape.add(loss_node, term);
            first = false;
        }
        tape.backward(loss_node);
        loss_est += tape.value(loss_node)[0];
        collect_adjoints(tape, binding, params, grads);
        for (int j : participants) {
            Tensor g = tape.adjoint(rep_leaf.at(j));
            if (j == k)
                own_rep_grad.emplace(k, std::move(g));
            else
                returns.push_back(Message{Message::Kind::GradReturn, k, j, step_index, std::move(g)});
        }
    }
    auto grad_inboxes =
        harness_deliver(std::move(returns), participants, step_index, Message::Kind::GradReturn, log);

    // phase 3: sum returned gradients in ascending sender order, backprop reps
    for (int k : participants) {
        Tensor summed(rep_states.at(k).tape.value(rep_states.at(k).out).shape());
        const auto& inbox = grad_inboxes[k];
        std::size_t inbox_pos = 0;
        for (int s : participants) {
            if (s == k) {
                add_inplace(summed, own_rep_grad.at(k));
            } else {
                const Message& m = inbox[inbox_pos++];
                if (m.sender != s)
                    throw ProtocolError("gradient inbox of client " + std::to_string(k + 1) +
                                        " is not in sender order");
                add_inplace(summed, m.payload);
            }
        }
        RepState& st = rep_states.at(k);
        st.tape.backward_from(st.out, summed);
        collect_adjoints(st.tape, st.binding, params, grads);
    }

    rec.loss_est = loss_est;
    rec.grad_norm = std::sqrt(grads.squared_norm());
    if (record_exact && subset_size(observed) <= 12)
        rec.loss_exact = exact_observed_loss(params, batch, observed);

    sgd_step(params, grads, lr);
    return rec;
}

namespace {

struct ScheduledBatch {
    BlockSet pattern = 0;
    std::vector<int> rows;
};

// batches for the pattern-grouped methods, interleaved by a per-epoch shuffle
std::vector<ScheduledBatch> epoch_schedule(const ObservationMask& mask, int batch_size, std::uint64_t run_seed,
                                           int epoch) {
    const std::vector<PatternGroup> groups =
        group_batches_by_pattern(mask, batch_size, seed_for(run_seed, "perm", static_cast<std::uint64_t>(epoch)));
    std::vector<ScheduledBatch> out;
    for (const PatternGroup& g : groups)
        for (const std::vector<int>& b : g.batches) out.push_back(ScheduledBatch{g.pattern, b});
    SplitMix64 rng(seed_for(run_seed, "sched", static_cast<std::uint64_t>(epoch)));
    shuffle(out, rng);
    return out;
}

// per-client batches for local-style methods; depends only on column k
std::vector<std::vector<int>> client_schedule(const ObservationMask& mask, int k, int batch_size,
                                              std::uint64_t run_seed, int epoch) {
    SplitMix64 perm_rng(seed_for(run_seed, "perm", static_cast<std::uint64_t>(epoch)));
    const std::vector<int> order = permutation(mask.num_samples, perm_rng);
    std::vector<int> rows;
    for (int n : order)
        if (mask.at(n, k)) rows.push_back(n);
    std::vector<std::vector<int>> batches;
    for (std::size_t start = 0; start < rows.size(); start += static_cast<std::size_t>(batch_size))
        batches.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(start),
                             rows.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                rows.size(), start + static_cast<std::size_t>(batch_size))));
    SplitMix64 rng(seed_for(run_seed, "sched", static_cast<std::uint64_t>(epoch)));
    shuffle(batches, rng);
    return batches;
}

// one SGD step of a self-contained split predictor (rep models + one fusion
// head on a single tape); shared by the local, standard, and combinatorial
// paths so seed-matched runs produce bit-identical updates
struct SinglePredictorStep {
    double loss = 0.0;
    double grad_sq_norm = 0.0;
};

SinglePredictorStep predictor_step(ParamSet& params, GradientBuffer& grads, const std::vector<MlpView>& reps,
                                   const std::vector<int>& members, const MlpView& fusion, const Batch& batch) {
    Tape tape;
    TapeBinding binding;
    std::vector<NodeId> rep_nodes;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const Tensor& block = batch.blocks[static_cast<std::size_t>(members[i])];
        if (block.empty()) throw ContractError("batch lacks block " + std::to_string(members[i] + 1));
        const NodeId x = tape.leaf(block);
        rep_nodes.push_back(mlp_forward_on_tape(tape, binding, params, reps[i], x));
    }
    const NodeId agg = tape.mean(rep_nodes);
    const NodeId logits = mlp_forward_on_tape(tape, binding, params, fusion, agg);
    const NodeId ce = tape.softmax_cross_entropy(logits, batch.labels);
    tape.backward(ce);
    GradientBuffer local(params);
    collect_adjoints(tape, binding, params, local);
    SinglePredictorStep out;
    out.loss = tape.value(ce)[0];
    out.grad_sq_norm = local.squared_norm();
    for (std::size_t i = 0; i < local.grads.size(); ++i)
        if (!local.grads[i].empty()) grads.accumulate(params, static_cast<int>(i), local.grads[i]);
    return out;
}

long count_total_steps(Method method, const ObservationMask& mask, int batch_size, std::uint64_t seed,
                       int epochs) {
    long per_epoch = 0;
    if (method == Method::Local || method == Method::Ensemble) {
        for (int k = 0; k < mask.num_blocks; ++k)
            per_epoch += static_cast<long>(client_schedule(mask, k, batch_size, seed, 0).size());
    } else {
        const auto sched = epoch_schedule(mask, batch_size, seed, 0);
        for (const ScheduledBatch& b : sched) {
            if (method == Method::Standard && b.pattern != full_set(mask.num_blocks)) continue;
            ++per_epoch;
        }
    }
    return per_epoch * epochs;
}

}  // namespace

TrainTrace train(Method method, const PartitionedDataset& ds, const ObservationMask& mask,
                 const ModelDims& dims, const TrainConfig& cfg) {
    if (mask.num_samples != ds.num_samples || mask.num_blocks != ds.num_clients)
        throw InputError("mask dimensions do not match the dataset");
    if (cfg.epochs < 1) throw InputError("epochs must be at least 1");
    if (cfg.batch_size < 1) throw InputError("batch_size must be at least 1");
    if (!(cfg.lr > 0.0)) throw InputError("learning rate must be positive");

    TrainTrace trace;
    trace.final_params = make_param_set(method, ds.shape(), dims, seed_for(cfg.seed, "init"));
    ParamSet& params = trace.final_params;
    MessageLog* log = cfg.collect_messages ? &trace.message_log : nullptr;

    double lr = cfg.lr;
    if (cfg.schedule == TrainConfig::LrSchedule::TunedSqrt) {
        const long total = count_total_steps(method, mask, cfg.batch_size, cfg.seed, cfg.epochs);
        if (total > 0) lr = cfg.lr / std::sqrt(static_cast<double>(total));
    }

    const BlockSet full = full_set(ds.num_clients);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (method == Method::Local || method == Method::Ensemble) {
            for (int k = 0; k < ds.num_clients; ++k) {
                const auto batches = client_schedule(mask, k, cfg.batch_size, cfg.seed, epoch);
                for (const std::vector<int>& rows : batches) {
                    const Batch batch = make_batch(ds, rows, BlockSet{1} << k);
                    GradientBuffer grads(params);
                    const auto res =
                        predictor_step(params, grads, {params.rep_models[static_cast<std::size_t>(k)]}, {k},
                                       params.fusion_models[static_cast<std::size_t>(k)], batch);
                    sgd_step(params, grads, lr);
                    StepRecord rec;
                    rec.step = step++;
                    rec.pattern = BlockSet{1} << k;
                    rec.loss_est = res.loss;
                    rec.grad_norm = std::sqrt(res.grad_sq_norm);
                    trace.steps.push_back(rec);
                }
            }
            continue;
        }

        const auto schedule = epoch_schedule(mask, cfg.batch_size, cfg.seed, epoch);
        for (const ScheduledBatch& sb : schedule) {
            switch (method) {
                case Method::Laser: {
                    const Batch batch = make_batch(ds, sb.rows, sb.pattern);
                    trace.steps.push_back(laser_train_step(params, batch, sb.pattern, lr,
                                                           seed_for(cfg.seed, "step", static_cast<std::uint64_t>(step)),
                                                           step, log, cfg.record_exact_loss));
                    ++step;
                    break;
                }
                case Method::Standard: {
                    if (sb.pattern != full) break;  // only fully observed batches are usable
                    const Batch batch = make_batch(ds, sb.rows, full);
                    GradientBuffer grads(params);
                    std::vector<int> all;
                    for (int k = 0; k < ds.num_clients; ++k) all.push_back(k);
                    const auto res =
                        predictor_step(params, grads, params.rep_models, all, params.fusion_models[0], batch);
                    sgd_step(params, grads, lr);
                    StepRecord rec;
                    rec.step = step++;
                    rec.pattern = full;
                    rec.loss_est = res.loss;
                    rec.grad_norm = std::sqrt(res.grad_sq_norm);
                    trace.steps.push_back(rec);
                    break;
                }
                case Method::Combinatorial: {
                    const Batch batch = make_batch(ds, sb.rows, sb.pattern);
                    GradientBuffer grads(params);
                    double loss = 0.0;
                    for (BlockSet m = 1; m <= sb.pattern; ++m) {
                        if ((m & ~sb.pattern) != 0) continue;
                        const ParamSet::SubsetTask& task = params.task(m);
                        loss += predictor_step(params, grads, task.rep_models, members_of(m), task.fusion, batch)
                                    .loss;
                    }
                    const double norm = std::sqrt(grads.squared_norm());
                    sgd_step(params, grads, lr);
                    StepRecord rec;
                    rec.step = step++;
                    rec.pattern = sb.pattern;
                    rec.loss_est = loss;
                    rec.grad_norm = norm;
                    trace.steps.push_back(rec);
                    break;
                }
                case Method::PlugVfl: {
                    // party-wise dropout for passive observed clients; missing
                    // blocks stay zero-filled for the whole run
                    SplitMix64 drop_rng(seed_for(cfg.seed, "dropout", static_cast<std::uint64_t>(step)));
                    BlockSet active = sb.pattern;
                    for (int k = 1; k < ds.num_clients; ++k) {
                        if (!contains(sb.pattern, k)) continue;
                        if (drop_rng.next_double() < cfg.plugvfl_dropout) active &= ~(BlockSet{1} << k);
                    }
                    const Batch batch = make_batch(ds, sb.rows, active);
                    Tape tape;
                    TapeBinding binding;
                    std::vector<NodeId> reps;
                    for (int k = 0; k < ds.num_clients; ++k) {
                        if (contains(active, k)) {
                            const NodeId x = tape.leaf(batch.blocks[static_cast<std::size_t>(k)]);
                            reps.push_back(mlp_forward_on_tape(tape, binding, params,
                                                               params.rep_models[static_cast<std::size_t>(k)], x));
                        } else {
                            reps.push_back(tape.zeros_like(sb.rows.size(), static_cast<std::size_t>(params.d_rep)));
                        }
                    }
                    const NodeId agg = tape.mean(reps);
                    const NodeId logits = mlp_forward_on_tape(tape, binding, params, params.fusion_models[0], agg);
                    const NodeId ce = tape.softmax_cross_entropy(logits, batch.labels);
                    tape.backward(ce);
                    GradientBuffer grads(params);
                    collect_adjoints(tape, binding, params, grads);
                    const double norm = std::sqrt(grads.squared_norm());
                    sgd_step(params, grads, lr);
                    StepRecord rec;
                    rec.step = step++;
                    rec.pattern = sb.pattern;
                    rec.loss_est = tape.value(ce)[0];
                    rec.grad_norm = norm;
                    trace.steps.push_back(rec);
                    break;
                }
                default:
                    throw InputError("unhandled training method");
            }
        }
    }
    return trace;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void save_trace_csv(const std::vector<StepRecord>& steps, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << "step,pattern,loss_est,loss_exact,grad_norm\n";
    for (const StepRecord& r : steps) {
        out << r.step << ',' << subset_label(r.pattern) << ',' << fmt(r.loss_est) << ',';
        if (r.loss_exact) out << fmt(*r.loss_exact);
        out << ',' << fmt(r.grad_norm) << "\n";
    }
}

void save_message_log_csv(const MessageLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << "step,kind,sender,receiver,rows,cols\n";
    for (const MessageMeta& m : log)
        out << m.step << ',' << message_kind_name(m.kind) << ',' << (m.sender + 1) << ',' << (m.receiver + 1)
            << ',' << m.rows << ',' << m.cols << "\n";
}

}  // namespace laser
