#include <doctest.h>

#include <cmath>
#include <vector>

#include "laser/data.hpp"
#include "laser/errors.hpp"
#include "laser/rng.hpp"
#include "laser/training.hpp"

using namespace laser;

namespace {

ParamSet small_laser(int k_clients, std::uint64_t seed) {
    return make_param_set(Method::Laser,
                          DataShape{k_clients, std::vector<int>(static_cast<std::size_t>(k_clients), 2), 3},
                          ModelDims{4, {}}, seed);
}

Batch random_batch(int k_clients, std::size_t rows, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Batch batch;
    for (int k = 0; k < k_clients; ++k) {
        Tensor block({rows, 2});
        for (std::size_t i = 0; i < block.numel(); ++i) block[i] = rng.uniform(-1.5, 1.5);
        batch.blocks.push_back(std::move(block));
    }
    for (std::size_t i = 0; i < rows; ++i) batch.labels.push_back(static_cast<int>(rng.next_below(3)));
    return batch;
}

}  // namespace

TEST_CASE("zero learning rate leaves every parameter untouched") {
    ParamSet ps = small_laser(3, 5);
    const std::vector<Tensor> before = ps.values;
    const Batch batch = random_batch(3, 4, 6);
    const StepRecord rec = laser_train_step(ps, batch, 0b111, 0.0, 77, 0, nullptr, false);
    CHECK_FALSE(rec.skipped);
    for (std::size_t i = 0; i < ps.values.size(); ++i) CHECK(ps.values[i].buffer() == before[i].buffer());
}

TEST_CASE("an empty pattern is skipped with a trace note") {
    ParamSet ps = small_laser(2, 5);
    const Batch batch = random_batch(2, 4, 6);
    const StepRecord rec = laser_train_step(ps, batch, 0, 0.1, 1, 9, nullptr, false);
    CHECK(rec.skipped);
    CHECK(rec.step == 9);
}

TEST_CASE("a single participating client reduces to plain SGD on its local loss") {
    ParamSet ps = small_laser(2, 8);
    ParamSet manual = ps;
    const Batch batch = random_batch(2, 5, 9);
    const double lr = 0.3;

    laser_train_step(ps, batch, 0b10, lr, 4, 0, nullptr, false);

    // by hand: one tape over g_2(f_2(x_2)), cross entropy, SGD
    Tape tape;
    TapeBinding binding;
    const NodeId x = tape.leaf(batch.blocks[1]);
    const NodeId rep = mlp_forward_on_tape(tape, binding, manual, manual.rep_models[1], x);
    const NodeId agg = tape.mean({rep});
    const NodeId logits = mlp_forward_on_tape(tape, binding, manual, manual.fusion_models[1], agg);
    const NodeId loss = tape.softmax_cross_entropy(logits, batch.labels);
    tape.backward(loss);
    GradientBuffer grads(manual);
    collect_adjoints(tape, binding, manual, grads);
    sgd_step(manual, grads, lr);

    for (std::size_t i = 0; i < ps.values.size(); ++i) CHECK(ps.values[i].buffer() == manual.values[i].buffer());
}

TEST_CASE("split-protocol gradients equal end-to-end autodiff of the same estimate") {
    // mixed patterns over four clients, many steps
    SplitMix64 pattern_rng(17);
    ParamSet ps = small_laser(4, 23);
    for (long step = 0; step < 25; ++step) {
        const Batch batch = random_batch(4, 6, 100 + static_cast<std::uint64_t>(step));
        BlockSet pattern = static_cast<BlockSet>(pattern_rng.next_below(15) + 1);
        const std::uint64_t step_seed = seed_for(999, "step", static_cast<std::uint64_t>(step));

        // monolithic oracle first (params still untouched)
        const TaskDraw draw = sample_all_tasks(pattern, step_seed);
        LossGraph g = build_estimate_loss(ps, batch, pattern, draw);
        g.tape.backward(g.loss);
        GradientBuffer oracle(ps);
        collect_adjoints(g.tape, g.binding, ps, oracle);
        const double oracle_loss = g.tape.value(g.loss)[0];

        ParamSet stepped = ps;
        const StepRecord rec = laser_train_step(stepped, batch, pattern, 0.05, step_seed, step, nullptr, false);
        CHECK(std::abs(rec.loss_est - oracle_loss) < 1e-12);

        // the harness update must equal theta - lr * oracle_gradient
        for (std::size_t i = 0; i < ps.values.size(); ++i) {
            const Tensor& g_i = oracle.grads[i];
            for (std::size_t j = 0; j < ps.values[i].numel(); ++j) {
                const double expect = ps.values[i][j] - 0.05 * (g_i.empty() ? 0.0 : g_i[j]);
                CHECK(std::abs(stepped.values[i][j] - expect) < 1e-12);
            }
        }
        ps = stepped;  // keep walking so later steps start from trained weights
    }
}

TEST_CASE("harness counts: three clients see two broadcasts and two returns each") {
    ParamSet ps = small_laser(3, 31);
    const Batch batch = random_batch(3, 4, 32);
    MessageLog log;
    laser_train_step(ps, batch, 0b111, 0.1, 7, 0, &log, false);

    int rep_msgs = 0, grad_msgs = 0;
    std::map<int, int> rep_in, grad_in;
    for (const MessageMeta& m : log) {
        if (m.kind == Message::Kind::RepBroadcast) {
            ++rep_msgs;
            ++rep_in[m.receiver];
        } else {
            ++grad_msgs;
            ++grad_in[m.receiver];
        }
    }
    CHECK(rep_msgs == 6);
    CHECK(grad_msgs == 6);
    for (int k = 0; k < 3; ++k) {
        CHECK(rep_in[k] == 2);
        CHECK(grad_in[k] == 2);
    }
}

TEST_CASE("representation traffic follows the |K|(|K|-1) B d_rep law") {
    for (BlockSet pattern : {BlockSet{0b11}, BlockSet{0b111}, BlockSet{0b1111}}) {
        ParamSet ps = small_laser(4, 41);
        const std::size_t rows = 6;
        const Batch batch = random_batch(4, rows, 42);
        MessageLog log;
        laser_train_step(ps, batch, pattern, 0.1, 3, 0, &log, false);
        std::size_t rep_values = 0;
        for (const MessageMeta& m : log)
            if (m.kind == Message::Kind::RepBroadcast) rep_values += m.rows * m.cols;
        const std::size_t count = static_cast<std::size_t>(subset_size(pattern));
        CHECK(rep_values == count * (count - 1) * rows * 4);
    }
}

TEST_CASE("single participant leaves an empty inbox without protocol errors") {
    const auto inboxes = harness_deliver({}, {2}, 0, Message::Kind::RepBroadcast, nullptr);
    REQUIRE(inboxes.size() == 1);
    CHECK(inboxes.at(2).empty());
}

TEST_CASE("the barrier names a silent client") {
    std::vector<Message> msgs;
    msgs.push_back(Message{Message::Kind::RepBroadcast, 0, 1, 0, Tensor::zeros(2, 2)});
    msgs.push_back(Message{Message::Kind::RepBroadcast, 0, 2, 0, Tensor::zeros(2, 2)});
    msgs.push_back(Message{Message::Kind::RepBroadcast, 1, 0, 0, Tensor::zeros(2, 2)});
    msgs.push_back(Message{Message::Kind::RepBroadcast, 1, 2, 0, Tensor::zeros(2, 2)});
    // client 3 never broadcasts
    CHECK_THROWS_WITH_AS(harness_deliver(std::move(msgs), {0, 1, 2}, 0, Message::Kind::RepBroadcast, nullptr),
                         doctest::Contains("client 3"), ProtocolError);
}

TEST_CASE("messages only ever carry representation-shaped payloads") {
    const PartitionedDataset ds = synth_classification(160, 3, {5, 3, 4}, 3, 0.3, 1.5, 71);
    const ObservationMask mask = sample_mask_uniform(160, 3, 0.35, 72);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 5;
    const ModelDims dims{6, {8}};
    const TrainTrace trace = train(Method::Laser, ds, mask, dims, cfg);
    CHECK_FALSE(trace.message_log.empty());
    for (const MessageMeta& m : trace.message_log) {
        CHECK(m.cols == 6);          // always d_rep wide, never a raw feature width
        CHECK(m.rows <= 16);         // batch rows
        CHECK(m.sender != m.receiver);
    }
}

TEST_CASE("standard VFL performs zero steps when nothing is fully observed") {
    const PartitionedDataset ds = synth_classification(60, 2, {2, 2}, 2, 0.2, 1.0, 11);
    const ObservationMask mask = sample_mask_uniform(60, 2, 1.0, 12);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    const TrainTrace trace = train(Method::Standard, ds, mask, ModelDims{4, {}}, cfg);
    CHECK(trace.steps.empty());
}

TEST_CASE("a local client's trace ignores other clients' mask columns") {
    const PartitionedDataset ds = synth_classification(140, 2, {3, 3}, 2, 0.2, 1.0, 21);
    ObservationMask mask_a = sample_mask_uniform(140, 2, 0.3, 22);
    ObservationMask mask_b = mask_a;
    for (int n = 0; n < 140; n += 2) mask_b.set(n, 1, !mask_b.at(n, 1));  // perturb column 2 only

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.seed = 31;
    const TrainTrace a = train(Method::Local, ds, mask_a, ModelDims{4, {5}}, cfg);
    const TrainTrace b = train(Method::Local, ds, mask_b, ModelDims{4, {5}}, cfg);

    auto client1 = [](const TrainTrace& t) {
        std::vector<std::pair<double, double>> out;
        for (const StepRecord& r : t.steps)
            if (r.pattern == 0b01) out.emplace_back(r.loss_est, r.grad_norm);
        return out;
    };
    CHECK(client1(a) == client1(b));
}

TEST_CASE("combinatorial singleton predictors track seed-matched local training") {
    const PartitionedDataset ds = synth_classification(96, 2, {3, 3}, 2, 0.2, 1.0, 41);
    const ObservationMask mask = sample_mask_uniform(96, 2, 0.0, 42);  // fully observed
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.seed = 9;
    const ModelDims dims{4, {6}};
    const TrainTrace comb = train(Method::Combinatorial, ds, mask, dims, cfg);
    const TrainTrace local = train(Method::Local, ds, mask, dims, cfg);

    // the singleton tasks of the combinatorial family live at the same paths
    // as the local predictors and must follow identical trajectories
    for (int k = 0; k < 2; ++k) {
        const auto& task = comb.final_params.task(BlockSet{1} << k);
        const auto& loc_rep = local.final_params.rep_models[static_cast<std::size_t>(k)];
        const auto& comb_rep = task.rep_models[0];
        for (std::size_t l = 0; l < loc_rep.weights.size(); ++l) {
            CHECK(comb.final_params.values[static_cast<std::size_t>(comb_rep.weights[l])].buffer() ==
                  local.final_params.values[static_cast<std::size_t>(loc_rep.weights[l])].buffer());
            CHECK(comb.final_params.values[static_cast<std::size_t>(comb_rep.biases[l])].buffer() ==
                  local.final_params.values[static_cast<std::size_t>(loc_rep.biases[l])].buffer());
        }
        const auto& loc_fus = local.final_params.fusion_models[static_cast<std::size_t>(k)];
        for (std::size_t l = 0; l < loc_fus.weights.size(); ++l)
            CHECK(comb.final_params.values[static_cast<std::size_t>(task.fusion.weights[l])].buffer() ==
                  local.final_params.values[static_cast<std::size_t>(loc_fus.weights[l])].buffer());
    }
}

TEST_CASE("training is bit-deterministic across repeated runs") {
    const PartitionedDataset ds = synth_classification(120, 3, {3, 2, 3}, 3, 0.3, 1.2, 51);
    const ObservationMask mask = sample_mask_uniform(120, 3, 0.4, 52);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.seed = 77;
    const ModelDims dims{5, {6}};
    for (Method m : {Method::Laser, Method::Local, Method::Standard, Method::Ensemble, Method::Combinatorial,
                     Method::PlugVfl}) {
        const TrainTrace a = train(m, ds, mask, dims, cfg);
        const TrainTrace b = train(m, ds, mask, dims, cfg);
        REQUIRE(a.steps.size() == b.steps.size());
        for (std::size_t i = 0; i < a.steps.size(); ++i) {
            CHECK(a.steps[i].loss_est == b.steps[i].loss_est);
            CHECK(a.steps[i].grad_norm == b.steps[i].grad_norm);
            CHECK(a.steps[i].pattern == b.steps[i].pattern);
        }
        for (std::size_t i = 0; i < a.final_params.values.size(); ++i)
            CHECK(a.final_params.values[i].buffer() == b.final_params.values[i].buffer());
    }
}

TEST_CASE("every method trains to finite parameters on mixed availability") {
    const PartitionedDataset ds = synth_classification(150, 3, {3, 3, 3}, 3, 0.3, 1.5, 61);
    const ObservationMask mask = sample_mask_uniform(150, 3, 0.3, 62);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 3;
    for (Method m : {Method::Laser, Method::Local, Method::Standard, Method::Ensemble, Method::Combinatorial,
                     Method::PlugVfl}) {
        const TrainTrace trace = train(m, ds, mask, ModelDims{4, {5}}, cfg);
        CHECK(trace.final_params.all_finite());
        for (const StepRecord& r : trace.steps) CHECK(std::isfinite(r.loss_est));
    }
}

TEST_CASE("tuned-sqrt schedule shrinks the constant step") {
    const PartitionedDataset ds = synth_classification(80, 2, {2, 2}, 2, 0.2, 1.0, 71);
    const ObservationMask mask = sample_mask_uniform(80, 2, 0.0, 72);
    TrainConfig base;
    base.epochs = 1;
    base.batch_size = 8;
    base.seed = 4;
    base.lr = 0.5;
    TrainConfig tuned = base;
    tuned.schedule = TrainConfig::LrSchedule::TunedSqrt;
    const TrainTrace a = train(Method::Laser, ds, mask, ModelDims{3, {}}, base);
    const TrainTrace b = train(Method::Laser, ds, mask, ModelDims{3, {}}, tuned);
    // same schedule of batches, smaller movement per step
    double move_a = 0.0, move_b = 0.0;
    const ParamSet init = make_param_set(Method::Laser, ds.shape(), ModelDims{3, {}}, seed_for(4, "init"));
    for (std::size_t i = 0; i < init.values.size(); ++i)
        for (std::size_t j = 0; j < init.values[i].numel(); ++j) {
            move_a += std::abs(a.final_params.values[i][j] - init.values[i][j]);
            move_b += std::abs(b.final_params.values[i][j] - init.values[i][j]);
        }
    CHECK(move_b < move_a);
    CHECK(move_b > 0.0);
}

TEST_CASE("descent envelope on the subset quadratic is monotone under eta <= 1/L") {
    const QuadraticTestbed tb = quadratic_testbed(8, 12.0, 81, 256);
    const SubsetQuadratic sq = subset_quadratic(tb, 4);
    const double eta = 1.0 / sq.l_smooth;

    std::vector<int> all_rows;
    for (int i = 0; i < 256; ++i) all_rows.push_back(i);
    std::vector<double> theta = sq.theta_start;
    double envelope = sq.loss(theta) - sq.loss_opt;
    double prev_envelope = envelope;
    SplitMix64 rng(5);
    for (int t = 0; t < 400; ++t) {
        const std::vector<double> g =
            sq.sampled_grad(theta, all_rows, sample_all_tasks(full_set(4), rng.next_u64()));
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= eta * g[j];
        const double delta = sq.loss(theta) - sq.loss_opt;
        envelope = std::min(envelope, delta);
        CHECK(envelope <= prev_envelope + 1e-15);
        prev_envelope = envelope;
    }
    // the envelope must actually descend toward the noise floor
    CHECK(envelope < 0.1 * (sq.loss(sq.theta_start) - sq.loss_opt));
}
