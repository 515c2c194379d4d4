#include <doctest.h>

#include <cmath>
#include <vector>

#include "laser/data.hpp"
#include "laser/errors.hpp"
#include "laser/inference.hpp"
#include "laser/training.hpp"

using namespace laser;

namespace {

void set_tensor(ParamSet& ps, int id, std::vector<double> vals) {
    Tensor& t = ps.values[static_cast<std::size_t>(id)];
    REQUIRE(t.numel() == vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) t[i] = vals[i];
}

// local/ensemble parameter set whose client k always predicts forced[k]:
// zero weights everywhere, a one-hot fusion bias
ParamSet forced_voters(const std::vector<int>& forced, int num_classes) {
    const int k_clients = static_cast<int>(forced.size());
    ParamSet ps = make_param_set(Method::Local,
                                 DataShape{k_clients, std::vector<int>(static_cast<std::size_t>(k_clients), 2),
                                           num_classes},
                                 ModelDims{2, {}}, 1);
    for (int k = 0; k < k_clients; ++k) {
        set_tensor(ps, ps.rep_models[static_cast<std::size_t>(k)].weights[0], {0, 0, 0, 0});
        std::vector<double> fusion_w(static_cast<std::size_t>(2 * num_classes), 0.0);
        set_tensor(ps, ps.fusion_models[static_cast<std::size_t>(k)].weights[0], fusion_w);
        std::vector<double> bias(static_cast<std::size_t>(num_classes), 0.0);
        bias[static_cast<std::size_t>(forced[static_cast<std::size_t>(k)])] = 5.0;
        set_tensor(ps, ps.fusion_models[static_cast<std::size_t>(k)].biases[0], bias);
    }
    return ps;
}

PredictionRecord record_with(int label, std::vector<std::pair<int, int>> preds) {
    PredictionRecord r;
    r.label = label;
    r.client_predictions = std::move(preds);
    return r;
}

}  // namespace

TEST_CASE("argmax breaks ties toward the lowest class index") {
    const Tensor logits = Tensor::row_major(1, 3, {2.0, 2.0, 1.0});
    CHECK(argmax_class(logits, 0) == 0);
}

TEST_CASE("laser inference: a lone observer uses its local path") {
    ParamSet ps = make_param_set(Method::Laser, DataShape{2, {2, 2}, 3}, ModelDims{3, {4}}, 21);
    SplitMix64 rng(3);
    Tensor x({1, 2});
    x[0] = rng.uniform(-1, 1);
    x[1] = rng.uniform(-1, 1);
    const BlockRefs blocks = {nullptr, &x};
    const auto preds = infer_laser(ps, blocks, 0b10);
    REQUIRE(preds.size() == 1);
    CHECK(preds[0].first == 1);
    CHECK(preds[0].second == argmax_class(predict_local(ps, 1, &x), 0));
}

TEST_CASE("laser inference matches a hand-composed oracle for two clients") {
    ParamSet ps = make_param_set(Method::Laser, DataShape{2, {2, 2}, 2}, ModelDims{2, {}}, 5);
    set_tensor(ps, ps.rep_models[0].weights[0], {1, 0, 0, 1});
    set_tensor(ps, ps.rep_models[1].weights[0], {0, 1, 1, 0});
    set_tensor(ps, ps.fusion_models[0].weights[0], {1, -1, 0.5, 2});
    set_tensor(ps, ps.fusion_models[1].weights[0], {-2, 1, 1, 0});
    const Tensor x1 = Tensor::row_major(1, 2, {0.8, -0.2});
    const Tensor x2 = Tensor::row_major(1, 2, {-0.4, 1.1});
    const BlockRefs blocks = {&x1, &x2};

    // oracle: v = (f1(x1) + f2(x2)) / 2; logits_k = v * Wg_k
    const double v0 = (0.8 + (1.1)) / 2.0;   // f2 swaps coordinates
    const double v1 = (-0.2 + (-0.4)) / 2.0;
    const double l1c0 = v0 * 1 + v1 * 0.5, l1c1 = v0 * -1 + v1 * 2;
    const double l2c0 = v0 * -2 + v1 * 1, l2c1 = v0 * 1 + v1 * 0;
    const auto preds = infer_laser(ps, blocks, 0b11);
    REQUIRE(preds.size() == 2);
    CHECK(preds[0].second == (l1c0 > l1c1 ? 0 : 1));
    CHECK(preds[1].second == (l2c0 > l2c1 ? 0 : 1));
}

TEST_CASE("laser inference lets clients disagree through their own heads") {
    // identical mean representation, opposite fusion biases
    ParamSet ps = forced_voters({0, 1}, 2);
    // reuse the same structure but through the laser path: per-client heads exist
    ParamSet laser = make_param_set(Method::Laser, DataShape{2, {2, 2}, 2}, ModelDims{2, {}}, 2);
    for (int k = 0; k < 2; ++k) {
        set_tensor(laser, laser.rep_models[static_cast<std::size_t>(k)].weights[0], {0, 0, 0, 0});
        set_tensor(laser, laser.fusion_models[static_cast<std::size_t>(k)].weights[0], {0, 0, 0, 0});
    }
    set_tensor(laser, laser.fusion_models[0].biases[0], {5, 0});
    set_tensor(laser, laser.fusion_models[1].biases[0], {0, 5});
    const Tensor x = Tensor::row_major(1, 2, {1, 1});
    const BlockRefs blocks = {&x, &x};
    const auto preds = infer_laser(laser, blocks, 0b11);
    CHECK(preds[0].second == 0);
    CHECK(preds[1].second == 1);
}

TEST_CASE("ensemble majority vote and deterministic tie handling") {
    SplitMix64 rng(9);
    const Tensor x = Tensor::row_major(1, 2, {0.5, -0.5});
    const BlockRefs blocks3 = {&x, &x, &x};

    ParamSet majority = forced_voters({0, 0, 1}, 3);
    bool fb = false;
    const auto preds = infer_baseline(Method::Ensemble, majority, blocks3, 0b111, rng, &fb);
    REQUIRE(preds.size() == 3);
    for (const auto& [k, cls] : preds) CHECK(cls == 0);
    CHECK_FALSE(fb);

    // 1-1 tie: the choice comes from the provided stream, always a tied class
    ParamSet tied = forced_voters({0, 1}, 3);
    const BlockRefs blocks2 = {&x, &x};
    int seen0 = 0, seen1 = 0;
    for (int t = 0; t < 200; ++t) {
        const auto p = infer_baseline(Method::Ensemble, tied, blocks2, 0b11, rng, &fb);
        CHECK(p[0].second == p[1].second);
        (p[0].second == 0 ? seen0 : seen1)++;
    }
    CHECK(seen0 > 50);
    CHECK(seen1 > 50);
}

TEST_CASE("standard inference falls back to a seeded random class when blocks are missing") {
    ParamSet ps = make_param_set(Method::Standard, DataShape{2, {2, 2}, 4}, ModelDims{2, {}}, 3);
    const Tensor x = Tensor::row_major(1, 2, {1, 0});
    const BlockRefs partial = {&x, nullptr};
    bool fb = false;
    SplitMix64 rng_a(42);
    const auto a = infer_baseline(Method::Standard, ps, partial, 0b01, rng_a, &fb);
    CHECK(fb);
    REQUIRE(a.size() == 1);
    SplitMix64 rng_b(42);
    const auto b = infer_baseline(Method::Standard, ps, partial, 0b01, rng_b, &fb);
    CHECK(a[0].second == b[0].second);  // same stream, same draw

    const BlockRefs full = {&x, &x};
    const auto c = infer_baseline(Method::Standard, ps, full, 0b11, rng_a, &fb);
    CHECK_FALSE(fb);
    CHECK(c.size() == 2);
    CHECK(c[0].second == c[1].second);
}

TEST_CASE("combinatorial inference uses the predictor dedicated to the observed set") {
    ParamSet ps = make_param_set(Method::Combinatorial, DataShape{2, {2, 2}, 3}, ModelDims{3, {}}, 8);
    const Tensor x = Tensor::row_major(1, 2, {0.3, 0.9});
    const BlockRefs blocks = {nullptr, &x};
    SplitMix64 rng(1);
    const auto preds = infer_baseline(Method::Combinatorial, ps, blocks, 0b10, rng, nullptr);
    REQUIRE(preds.size() == 1);
    CHECK(preds[0].second == argmax_class(predict_combinatorial(ps, 0b10, blocks), 0));
}

TEST_CASE("accuracy_avg reproduces the hand-computed mixed-observation example") {
    // sample 1 observed by both clients, client 1 right and client 2 wrong;
    // sample 2 observed by client 1 only and right: 100*(0.5+1)/2 = 75
    std::vector<PredictionRecord> recs;
    recs.push_back(record_with(1, {{0, 1}, {1, 0}}));
    recs.push_back(record_with(0, {{0, 0}}));
    CHECK(accuracy_avg(recs) == doctest::Approx(75.0).epsilon(1e-12));

    std::swap(recs[0], recs[1]);
    CHECK(accuracy_avg(recs) == doctest::Approx(75.0).epsilon(1e-12));
}

TEST_CASE("accuracy_avg edge cases") {
    std::vector<PredictionRecord> all_right;
    for (int n = 0; n < 5; ++n) all_right.push_back(record_with(2, {{0, 2}, {1, 2}, {2, 2}}));
    CHECK(accuracy_avg(all_right) == 100.0);

    CHECK_THROWS_AS(accuracy_avg({}), InputError);

    // empty-pattern samples score their stored random guess
    PredictionRecord fallback;
    fallback.label = 1;
    fallback.fallback = true;
    fallback.fallback_class = 1;
    PredictionRecord miss = fallback;
    miss.fallback_class = 0;
    CHECK(accuracy_avg({fallback, miss}) == doctest::Approx(50.0));
}

TEST_CASE("accuracy_avg equals plain accuracy for one fully observing client") {
    std::vector<PredictionRecord> recs;
    const std::vector<int> labels = {0, 1, 1, 0, 1};
    const std::vector<int> preds = {0, 1, 0, 0, 1};
    int hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        recs.push_back(record_with(labels[i], {{0, preds[i]}}));
        hits += labels[i] == preds[i] ? 1 : 0;
    }
    CHECK(accuracy_avg(recs) == doctest::Approx(100.0 * hits / static_cast<double>(labels.size())));
}

TEST_CASE("f1_macro reproduces the hand-computed precision/recall example") {
    // one client: TP=1, FP=1, FN=0 -> P=0.5, R=1 -> F1 = 2*0.5*1/1.5
    std::vector<PredictionRecord> recs;
    recs.push_back(record_with(1, {{0, 1}}));  // TP
    recs.push_back(record_with(0, {{0, 1}}));  // FP
    CHECK(f1_macro(recs, 1) == doctest::Approx(100.0 * 2.0 * 0.5 / 1.5).epsilon(1e-12));

    std::vector<PredictionRecord> perfect;
    perfect.push_back(record_with(1, {{0, 1}, {1, 1}}));
    perfect.push_back(record_with(0, {{0, 0}, {1, 0}}));
    CHECK(f1_macro(perfect, 2) == 100.0);

    std::vector<PredictionRecord> all_negative;
    all_negative.push_back(record_with(1, {{0, 0}}));
    all_negative.push_back(record_with(0, {{0, 0}}));
    CHECK(f1_macro(all_negative, 1) == 0.0);

    std::vector<PredictionRecord> bad;
    bad.push_back(record_with(2, {{0, 1}}));
    CHECK_THROWS_AS(f1_macro(bad, 1), InputError);
}

TEST_CASE("evaluate: ensemble with one client equals local exactly") {
    const PartitionedDataset ds = synth_classification(200, 1, {4}, 3, 0.0, 1.5, 91);
    const ObservationMask mask = sample_mask_uniform(200, 1, 0.3, 92);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 6;
    const TrainTrace local = train(Method::Local, ds, mask, ModelDims{4, {5}}, cfg);
    const TrainTrace ensemble = train(Method::Ensemble, ds, mask, ModelDims{4, {5}}, cfg);
    const auto recs_l = evaluate(Method::Local, local.final_params, ds, mask, 1234);
    const auto recs_e = evaluate(Method::Ensemble, ensemble.final_params, ds, mask, 1234);
    REQUIRE(recs_l.size() == recs_e.size());
    for (std::size_t i = 0; i < recs_l.size(); ++i)
        CHECK(recs_l[i].client_predictions == recs_e[i].client_predictions);
    CHECK(accuracy_avg(recs_l) == accuracy_avg(recs_e));
}

TEST_CASE("fully observed test data exercises the joint paths without fallbacks") {
    const PartitionedDataset ds = synth_classification(80, 2, {3, 3}, 3, 0.3, 1.5, 95);
    const ObservationMask mask = sample_mask_uniform(80, 2, 0.0, 96);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 2;
    for (Method m : {Method::Standard, Method::Combinatorial}) {
        const TrainTrace t = train(m, ds, mask, ModelDims{4, {}}, cfg);
        const auto recs = evaluate(m, t.final_params, ds, mask, 7);
        const MetricReport rep = compute_metrics(recs, 2, 3);
        CHECK(rep.fallback_count == 0);
        for (const auto& r : recs) CHECK(r.client_predictions.size() == 2);
    }
}

TEST_CASE("empty-pattern samples are scored by a per-sample random draw") {
    const PartitionedDataset ds = synth_classification(40, 2, {2, 2}, 2, 0.2, 1.0, 97);
    ObservationMask mask(40, 2);  // nothing observed anywhere
    ParamSet ps = make_param_set(Method::Laser, ds.shape(), ModelDims{3, {}}, 1);
    const auto recs = evaluate(Method::Laser, ps, ds, mask, 55);
    CHECK(recs.size() == 40);
    for (const auto& r : recs) {
        CHECK(r.fallback);
        CHECK(r.client_predictions.empty());
        CHECK(r.fallback_class >= 0);
        CHECK(r.fallback_class < 2);
    }
    // deterministic under the same eval seed
    const auto again = evaluate(Method::Laser, ps, ds, mask, 55);
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].fallback_class == again[i].fallback_class);
}

TEST_CASE("laser predictions are invariant to representation arrival order") {
    // evaluate() fixes ascending order; the mean itself is order-free, so
    // feeding the blocks through a permuted mask view must not change argmax
    ParamSet ps = make_param_set(Method::Laser, DataShape{3, {2, 2, 2}, 3}, ModelDims{3, {4}}, 61);
    SplitMix64 rng(2);
    Tensor x1({1, 2}), x2({1, 2}), x3({1, 2});
    for (Tensor* t : {&x1, &x2, &x3})
        for (std::size_t i = 0; i < 2; ++i) (*t)[i] = rng.uniform(-1, 1);
    const BlockRefs blocks = {&x1, &x2, &x3};

    std::vector<Tensor> reps;
    for (int i : {0, 1, 2}) reps.push_back(representation_forward(ps, i, *blocks[static_cast<std::size_t>(i)]));
    std::vector<Tensor> swapped = {reps[2], reps[0], reps[1]};
    const Tensor agg_a = aggregate_mean(reps);
    const Tensor agg_b = aggregate_mean(swapped);
    for (int k = 0; k < 3; ++k) {
        const int a = argmax_class(mlp_forward(ps, ps.fusion_models[static_cast<std::size_t>(k)], agg_a), 0);
        const int b = argmax_class(mlp_forward(ps, ps.fusion_models[static_cast<std::size_t>(k)], agg_b), 0);
        CHECK(a == b);
    }
}
