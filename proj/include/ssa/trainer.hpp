#pragma once

// Joint training over heterogeneous buckets with one shared parameter set.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ssa/data.hpp"
#include "ssa/fusion_model.hpp"

namespace ssa {

struct TrainConfig {
    int steps = 2000;
    int batch_size = 4;
    double lr_start = 2e-4;
    double lr_min = 1e-5;
    double lambda_ssim = 0.1;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    ModelConfig model;
    int checkpoint_every = 0;  // 0: only at the end
    int probe_every = 50;      // 0: no probe evaluation
    int probe_per_bucket = 4;  // leading samples of every bucket form the probe batch

    void validate() const;
};

/// lr_min + (lr_start - lr_min) (1 + cos(pi step / total)) / 2.
double cosine_lr(int step, int total, double lr_start, double lr_min);

struct AdamWSettings {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

/// First/second moments aligned with FusionModel::parameters() order.
struct OptimizerState {
    std::int64_t step = 0;
    std::vector<Tensor4> m;
    std::vector<Tensor4> v;
};

OptimizerState make_optimizer_state(const std::vector<Parameter<float>*>& params);

/// Bias-corrected adaptive-moment update with decoupled weight decay, applied
/// only to elements whose `touched` flag is set. Every gradient is checked
/// first; a non-finite value throws NumericError naming the parameter and
/// leaves parameters and state unchanged.
void optimizer_step(const std::vector<Parameter<float>*>& params, OptimizerState& state, const AdamWSettings& s);

/// Everything needed to continue a run bitwise.
struct TrainerState {
    Model model;
    OptimizerState opt;
    Rng sampler{0};
    int step = 0;  // steps completed
    int total_steps = 0;
};

/// Fresh state: model init and sampler streams derived from config.seed.
TrainerState initial_state(const TrainConfig& cfg);

void save_checkpoint(const TrainerState& st, const std::string& path);
/// Reads model, optimizer moments, sampler RNG and step counter.
TrainerState load_checkpoint(const std::string& path);

struct StepLog {
    int step = 0;
    std::string bucket_id;
    double loss = 0.0;
    double l1 = 0.0;
    double ssim_loss = 0.0;
    double lr = 0.0;
};

struct ProbeLog {
    int step = 0;
    double l1 = 0.0;
    double loss = 0.0;
};

/// "step,bucket_id,loss,l1,ssim_loss,lr"
std::string train_log_header();
std::string train_log_row(const StepLog& r);

/// Per-sample loss terms (forward only, no gradients).
struct SampleLoss {
    double total = 0.0;
    double l1 = 0.0;
    double ssim_loss = 0.0;
};
SampleLoss evaluate_sample(const Model& model, const FusionSample& s, double lambda_ssim);

/// Mean losses over the probe batch (first probe_per_bucket samples of each bucket).
ProbeLog probe_loss(const Model& model, const std::vector<DatasetBucket>& buckets, const TrainConfig& cfg, int step);

/// Runs one optimisation step: sample, forward/backward per sample, AdamW.
/// Throws NumericError (state untouched) on a non-finite loss or gradient.
StepLog train_step(TrainerState& st, const TrainConfig& cfg, const std::vector<DatasetBucket>& buckets);

struct TrainOutputs {
    std::string checkpoint_path;      // written at the cadence and at the end; empty: never
    std::ostream* log = nullptr;      // step rows (no header)
    std::ostream* probe_log = nullptr;  // "step,l1,loss" rows (no header)
    int stop_after = -1;              // stop once this many steps are done (resume later); -1: run to the end
};

struct TrainSummary {
    std::vector<StepLog> steps;
    std::vector<ProbeLog> probes;
};

/// Trains from `st` (fresh or resumed) until cfg.steps or outputs.stop_after.
/// On a numeric failure the last good state is written to the checkpoint path
/// before the error propagates.
TrainSummary train(TrainerState& st, const TrainConfig& cfg, const std::vector<DatasetBucket>& buckets,
                   const TrainOutputs& outputs = {});

/// Checks every bucket fits the model (C + c <= c_max).
void check_buckets(const std::vector<DatasetBucket>& buckets, const ModelConfig& model);

}  // namespace ssa
