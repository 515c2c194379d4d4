#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "laser/data.hpp"
#include "laser/missingness.hpp"
#include "laser/model.hpp"

namespace laser {

// One evaluated test sample. client_predictions holds (client, class) for the
// clients that observed a block, ascending by client. fallback marks that a
// random prediction stood in for an unavailable model; when no client observed
// anything, fallback_class carries the single random guess.
struct PredictionRecord {
    int sample_id = 0;
    int label = 0;
    Method method{};
    std::vector<std::pair<int, int>> client_predictions;
    bool fallback = false;
    int fallback_class = -1;
};

// argmax with ties resolved to the lowest class index
int argmax_class(const Tensor& logits, std::size_t row);

// inference for the parameter-shared family: every observing client predicts
// with the task matching the full observed pattern
std::vector<std::pair<int, int>> infer_laser(const ParamSet& params, const BlockRefs& blocks, BlockSet observed);

// baselines; rng drives the random fallback (standard) and vote ties (ensemble)
std::vector<std::pair<int, int>> infer_baseline(Method method, const ParamSet& params, const BlockRefs& blocks,
                                                BlockSet observed, SplitMix64& rng, bool* used_fallback);

// evaluate every test sample; random draws come from a per-sample substream of
// eval_seed so the result is independent of evaluation order
std::vector<PredictionRecord> evaluate(Method method, const ParamSet& params, const PartitionedDataset& ds,
                                       const ObservationMask& mask, std::uint64_t eval_seed);

// client-averaged accuracy (x100): mean over samples of the fraction of
// observing clients that got the label right; empty-pattern samples score
// their random guess
double accuracy_avg(const std::vector<PredictionRecord>& records);

// macro F1 (x100) over clients for binary tasks, each client scored on the
// samples it observed; degenerate clients contribute zero
double f1_macro(const std::vector<PredictionRecord>& records, int num_clients);

struct MetricReport {
    double accuracy = 0.0;
    bool has_f1 = false;
    double f1 = 0.0;
    std::vector<double> per_client_accuracy;
    std::vector<std::size_t> per_client_counts;
    std::size_t fallback_count = 0;
};

MetricReport compute_metrics(const std::vector<PredictionRecord>& records, int num_clients, int num_classes);

}  // namespace laser
