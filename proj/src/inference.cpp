#include "laser/inference.hpp"

#include <algorithm>
#include <map>

#include "laser/errors.hpp"

namespace laser {

int argmax_class(const Tensor& logits, std::size_t row) {
    int best = 0;
    double best_v = logits.at(row, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits.at(row, j) > best_v) {
            best_v = logits.at(row, j);
            best = static_cast<int>(j);
        }
    return best;
}

std::vector<std::pair<int, int>> infer_laser(const ParamSet& params, const BlockRefs& blocks, BlockSet observed) {
    if (observed == 0) throw UnavailableError("no observed blocks for this sample");
    // each observing client shares the same mean representation (Algorithm-2
    // broadcast) but applies its own fusion head
    std::vector<Tensor> reps;
    for (int i : members_of(observed)) {
        if (static_cast<std::size_t>(i) >= blocks.size() || blocks[static_cast<std::size_t>(i)] == nullptr)
            throw ContractError("block " + std::to_string(i + 1) + " is not present");
        reps.push_back(representation_forward(params, i, *blocks[static_cast<std::size_t>(i)]));
    }
    const Tensor agg = aggregate_mean(reps);
    std::vector<std::pair<int, int>> out;
    for (int k : members_of(observed)) {
        const Tensor logits = mlp_forward(params, params.fusion_models[static_cast<std::size_t>(k)], agg);
        out.emplace_back(k, argmax_class(logits, 0));
    }
    return out;
}

std::vector<std::pair<int, int>> infer_baseline(Method method, const ParamSet& params, const BlockRefs& blocks,
                                                BlockSet observed, SplitMix64& rng, bool* used_fallback) {
    if (used_fallback) *used_fallback = false;
    if (observed == 0) throw UnavailableError("no observed blocks for this sample");
    const std::vector<int> members = members_of(observed);
    const BlockSet full = full_set(params.num_clients);
    std::vector<std::pair<int, int>> out;

    switch (method) {
        case Method::Local: {
            for (int k : members) {
                const Tensor logits = predict_local(params, k, blocks[static_cast<std::size_t>(k)]);
                out.emplace_back(k, argmax_class(logits, 0));
            }
            return out;
        }
        case Method::Standard: {
            int cls;
            if (observed == full) {
                cls = argmax_class(predict_standard(params, blocks), 0);
            } else {
                cls = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(params.num_classes)));
                if (used_fallback) *used_fallback = true;
            }
            for (int k : members) out.emplace_back(k, cls);
            return out;
        }
        case Method::Ensemble: {
            std::vector<int> votes(static_cast<std::size_t>(params.num_classes), 0);
            for (int k : members) {
                const Tensor logits = predict_local(params, k, blocks[static_cast<std::size_t>(k)]);
                ++votes[static_cast<std::size_t>(argmax_class(logits, 0))];
            }
            const int top = *std::max_element(votes.begin(), votes.end());
            std::vector<int> tied;
            for (int c = 0; c < params.num_classes; ++c)
                if (votes[static_cast<std::size_t>(c)] == top) tied.push_back(c);
            const int cls = tied.size() == 1
                                ? tied[0]
                                : tied[static_cast<std::size_t>(rng.next_below(tied.size()))];
            for (int k : members) out.emplace_back(k, cls);
            return out;
        }
        case Method::Combinatorial: {
            const int cls = argmax_class(predict_combinatorial(params, observed, blocks), 0);
            for (int k : members) out.emplace_back(k, cls);
            return out;
        }
        case Method::PlugVfl: {
            const int cls = argmax_class(predict_zero_filled(params, observed, blocks, 1), 0);
            for (int k : members) out.emplace_back(k, cls);
            return out;
        }
        case Method::Laser:
            return infer_laser(params, blocks, observed);
    }
    throw InputError("unknown method");
}

std::vector<PredictionRecord> evaluate(Method method, const ParamSet& params, const PartitionedDataset& ds,
                                       const ObservationMask& mask, std::uint64_t eval_seed) {
    if (mask.num_samples != ds.num_samples || mask.num_blocks != ds.num_clients)
        throw InputError("mask dimensions do not match the dataset");
    std::vector<PredictionRecord> records;
    records.reserve(static_cast<std::size_t>(ds.num_samples));
    for (int n = 0; n < ds.num_samples; ++n) {
        PredictionRecord rec;
        rec.sample_id = n;
        rec.label = ds.labels[static_cast<std::size_t>(n)];
        rec.method = method;
        const BlockSet pattern = mask.pattern(n);
        SplitMix64 rng(seed_for(eval_seed, "fallback", static_cast<std::uint64_t>(n)));
        if (pattern == 0) {
            rec.fallback = true;
            rec.fallback_class = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(params.num_classes)));
        } else {
            std::vector<Tensor> rows;
            BlockRefs refs(static_cast<std::size_t>(ds.num_clients), nullptr);
            rows.reserve(static_cast<std::size_t>(subset_size(pattern)));
            for (int k : members_of(pattern)) {
                rows.push_back(sample_block(ds, k, n));
                refs[static_cast<std::size_t>(k)] = &rows.back();
            }
            bool used_fallback = false;
            rec.client_predictions = infer_baseline(method, params, refs, pattern, rng, &used_fallback);
            rec.fallback = used_fallback;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

double accuracy_avg(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw InputError("accuracy_avg: no records");
    double total = 0.0;
    for (const PredictionRecord& r : records) {
        if (r.client_predictions.empty()) {
            total += r.fallback_class == r.label ? 1.0 : 0.0;
            continue;
        }
        double hits = 0.0;
        for (const auto& [k, cls] : r.client_predictions) hits += cls == r.label ? 1.0 : 0.0;
        total += hits / static_cast<double>(r.client_predictions.size());
    }
    return 100.0 * total / static_cast<double>(records.size());
}

double f1_macro(const std::vector<PredictionRecord>& records, int num_clients) {
    if (records.empty()) throw InputError("f1_macro: no records");
    for (const PredictionRecord& r : records)
        if (r.label != 0 && r.label != 1) throw InputError("f1_macro requires binary labels");
    std::vector<long> tp(static_cast<std::size_t>(num_clients), 0), fp(static_cast<std::size_t>(num_clients), 0),
        fn(static_cast<std::size_t>(num_clients), 0);
    for (const PredictionRecord& r : records)
        for (const auto& [k, cls] : r.client_predictions) {
            if (cls == 1 && r.label == 1) ++tp[static_cast<std::size_t>(k)];
            if (cls == 1 && r.label == 0) ++fp[static_cast<std::size_t>(k)];
            if (cls == 0 && r.label == 1) ++fn[static_cast<std::size_t>(k)];
        }
    double total = 0.0;
    for (int k = 0; k < num_clients; ++k) {
        const std::size_t i = static_cast<std::size_t>(k);
        const double p_den = static_cast<double>(tp[i] + fp[i]);
        const double r_den = static_cast<double>(tp[i] + fn[i]);
        const double prec = p_den > 0 ? static_cast<double>(tp[i]) / p_den : 0.0;
        const double rec = r_den > 0 ? static_cast<double>(tp[i]) / r_den : 0.0;
        total += (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    return 100.0 * total / static_cast<double>(num_clients);
}

MetricReport compute_metrics(const std::vector<PredictionRecord>& records, int num_clients, int num_classes) {
    MetricReport rep;
    rep.accuracy = accuracy_avg(records);
    if (num_classes == 2) {
        rep.has_f1 = true;
        rep.f1 = f1_macro(records, num_clients);
    }
    rep.per_client_accuracy.assign(static_cast<std::size_t>(num_clients), 0.0);
    rep.per_client_counts.assign(static_cast<std::size_t>(num_clients), 0);
    for (const PredictionRecord& r : records) {
        if (r.fallback) ++rep.fallback_count;
        for (const auto& [k, cls] : r.client_predictions) {
            rep.per_client_accuracy[static_cast<std::size_t>(k)] += cls == r.label ? 1.0 : 0.0;
            ++rep.per_client_counts[static_cast<std::size_t>(k)];
        }
    }
    for (int k = 0; k < num_clients; ++k) {
        const std::size_t i = static_cast<std::size_t>(k);
        if (rep.per_client_counts[i] > 0)
            rep.per_client_accuracy[i] = 100.0 * rep.per_client_accuracy[i] /
                                         static_cast<double>(rep.per_client_counts[i]);
    }
    return rep;
}

}  // namespace laser
