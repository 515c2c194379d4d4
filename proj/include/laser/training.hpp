#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "laser/data.hpp"
#include "laser/missingness.hpp"
#include "laser/model.hpp"
#include "laser/sampling.hpp"

namespace laser {

// What crosses client boundaries: representation tensors going out, gradients
// of the loss with respect to those representations coming back. Raw feature
// blocks never appear here.
struct Message {
    enum class Kind { RepBroadcast, GradReturn };
    Kind kind{};
    int sender = 0;
    int receiver = 0;
    long step = 0;
    Tensor payload;
};

std::string message_kind_name(Message::Kind kind);

// shape-only view of a message, kept for traffic accounting and privacy audits
struct MessageMeta {
    long step = 0;
    Message::Kind kind{};
    int sender = 0;
    int receiver = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

using MessageLog = std::vector<MessageMeta>;

// Barrier delivery: every participant must have sent its phase messages to all
// other participants before anyone's inbox is handed over. Inboxes come back
// ordered by ascending sender id.
std::map<int, std::vector<Message>> harness_deliver(std::vector<Message> messages,
                                                    const std::vector<int>& participants, long step,
                                                    Message::Kind expected_kind, MessageLog* log);

struct StepRecord {
    long step = 0;
    BlockSet pattern = 0;
    double loss_est = 0.0;
    std::optional<double> loss_exact;
    double grad_norm = 0.0;
    bool skipped = false;
};

// One iteration of the split training protocol: broadcast representations,
// sample tasks, backprop fusion heads, return representation gradients, sum
// them in ascending client order, backprop representation models, then apply
// a single synchronized SGD update.
StepRecord laser_train_step(ParamSet& params, const Batch& batch, BlockSet observed, double lr,
                            std::uint64_t step_seed, long step_index, MessageLog* log, bool record_exact);

struct TrainConfig {
    double lr = 0.05;
    int epochs = 5;
    int batch_size = 64;
    std::uint64_t seed = 1;
    bool record_exact_loss = false;
    double plugvfl_dropout = 0.25;
    enum class LrSchedule { Constant, TunedSqrt } schedule = LrSchedule::Constant;
    bool collect_messages = true;
};

struct TrainTrace {
    std::vector<StepRecord> steps;
    ParamSet final_params;
    MessageLog message_log;
};

// Full training loop for any method. Batches with identical observed patterns
// are formed per epoch and interleaved by a seeded shuffle; the local and
// ensemble methods instead batch each client's observed rows independently so
// one client's schedule never depends on another client's mask column.
TrainTrace train(Method method, const PartitionedDataset& ds, const ObservationMask& mask,
                 const ModelDims& dims, const TrainConfig& cfg);

// trace CSV: step,pattern,loss_est,loss_exact,grad_norm
void save_trace_csv(const std::vector<StepRecord>& steps, const std::string& path);

// message CSV: step,kind,sender,receiver,rows,cols
void save_message_log_csv(const MessageLog& log, const std::string& path);

}  // namespace laser
