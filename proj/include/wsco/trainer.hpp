#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wsco/calibration.hpp"
#include "wsco/contrastive.hpp"
#include "wsco/labeling.hpp"
#include "wsco/pipeline.hpp"

namespace wsco {

struct TrainConfig {
    // training hyperparameters
    double alpha = 0.1;           // l_unsup weight inside l_sc
    double lambda = 0.5;          // hard/easy balance in l_uscl
    double beta = 0.5;            // l_uscl weight in the total objective
    double u = 20.0;              // image-uncertainty threshold
    double tau = 0.07;            // contrastive temperature
    int bank_capacity = 10;       // D
    double eta = 0.4;             // prototype EMA weight
    double ema_rate = 0.9;        // teacher EMA
    double conf_threshold = 0.9;  // teacher high-confidence cut
    int max_proposals = 300;      // M
    double lr = 0.001;
    double momentum = 0.9;
    int epochs = 10;
    int sigma_H = 9;              // NMS thresholds 0.1 .. 0.1*H
    std::uint64_t seed = 17731508;

    // artifact knobs
    int d_embed = 32;
    int aug_level = 5;
    int kmeans_rounds = 2;
    double kl_floor = 1e-8;
    double nms_eval = 0.5;
    double eval_iou = 0.5;
    double holdout_fraction = 0.2;
    int pretrain_epochs = 30;
    double pretrain_lr = 0.01;
    double pretrain_map_floor = 0.9;
    double hvp_step = 1e-5;
    WorldConfig world;

    void validate() const;
};

enum class Variant { Smt, Wsco, WeakOnly };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct AdaptOptions {
    Variant variant = Variant::Wsco;
    bool no_lsc = false;
    bool no_luscl = false;
    bool no_mnet = false;
};

struct HookContext {
    const Models& models;
    const BranchOutput& teacher_out;
    const BranchOutput& student_out;
    ParamSet& student;
    ParamSet& aux;
};

// A base-method regularizer R: returns its scalar value and applies its own
// parameter gradients through the context.
using RegHook = std::function<double(const HookContext&)>;

struct HookRegistry {
    std::vector<std::pair<std::string, RegHook>> hooks;

    void register_hook(std::string name, RegHook hook) {
        hooks.emplace_back(std::move(name), std::move(hook));
    }
    bool empty() const { return hooks.empty(); }
};

struct EpochReport {
    int epoch = 0;
    MatchCounts counts;
    double map = 0.0;
    double fp_gain = 0.0;
    double mean_sigma = 0.0;
    double l_det = 0.0, l_con = 0.0, l_grad = 0.0, l_unsup = 0.0, l_uscl = 0.0;
    double l_hook = 0.0, l_total = 0.0;
    double he_mean = 0.0;
    long he_zero_denom = 0;
    int skipped_iterations = 0;
    std::uint64_t teacher_checksum = 0;
    std::uint64_t student_checksum = 0;
};

struct AdaptState {
    ParamSet student, teacher, aux;
    MemoryBank bank;
    PrototypeSet emb_protos, feat_protos;
    MatchCounts source_counts;
    double source_map = 0.0;
    int epochs_done = 0;
    bool hook_disabled = false;
    std::vector<EpochReport> reports;
};

Models make_models_for(const TrainConfig& cfg);

struct PretrainInfo {
    int epochs_run = 0;
    double final_map = 0.0;
    bool reached_floor = false;
};

// Supervised training of the branch on labeled source scenarios until the
// configured mAP floor or the epoch cap. Missing the floor is reported, not
// fatal.
ParamSet pretrain_source(const TrainConfig& cfg, const Models& models,
                         const std::vector<Scenario>& source, PretrainInfo* info = nullptr);

struct SplitScenarios {
    std::vector<Scenario> train, eval;
};

// Deterministic holdout: the last ceil(fraction * n) scenarios evaluate.
SplitScenarios split_target(const std::vector<Scenario>& target, double holdout_fraction);

// Teacher = student = source; evaluates the source model on the eval split to
// fix the FP-Gain baseline.
AdaptState init_adapt(const TrainConfig& cfg, const Models& models,
                      const ParamSet& source_model, const std::vector<Scenario>& eval_split);

void run_adapt_epochs(const TrainConfig& cfg, const Models& models, AdaptState& state,
                      const std::vector<Scenario>& train, const std::vector<Scenario>& eval,
                      const AdaptOptions& options, int num_epochs,
                      const HookRegistry* hooks = nullptr);

// Full adaptation: split, init, run all configured epochs.
std::vector<EpochReport> adapt(const TrainConfig& cfg, const Models& models,
                               const ParamSet& source_model,
                               const std::vector<Scenario>& target,
                               const AdaptOptions& options,
                               const HookRegistry* hooks = nullptr);

struct EvalResult {
    MatchCounts counts;
    double map = 0.0;
};

EvalResult evaluate_model(const TrainConfig& cfg, const Models& models, ParamSet& branch,
                          const std::vector<Scenario>& scenarios);

struct TrendRow {
    int level = 0;
    double tp_norm = 0.0, fp_norm = 0.0, map = 0.0;
};

// Adapts under cumulative augmentation levels 1..max_level; TP/FP normalized
// by the source-model counts on the eval split.
std::vector<TrendRow> trend_experiment(const TrainConfig& cfg, Variant variant, int max_level);

// ---- loss composition shared by the training loop and the gradient checks ----

struct LossInputs {
    const Scenario* s_weak = nullptr;
    const Scenario* s_strong = nullptr;
    const std::vector<BBox>* proposals = nullptr;
    const BranchOutput* teacher_out = nullptr;
    const PseudoLabelSet* pseudo = nullptr;
    const std::vector<int>* labels = nullptr;  // pseudo-categories propagated to the strong set
    double sigma = 0.0;
    bool use_lsc = true;
    bool use_luscl = true;
    bool use_mnet = true;
};

struct IterationLosses {
    MtLossResult mt;
    LscResult sc;
    LusclResult uscl;
    double uscl_value = 0.0;
    double hook_value = 0.0;
    double total = 0.0;
    double kink_margin = 0.0;  // min distance to a relu/huber kink, for FD harnesses
    ContrastPartition partition;
    HeRatioStats he;
};

// Runs the student branches and every enabled loss, accumulating gradients
// into student/aux when with_grad is set. A frozen partition keeps the
// discrete structure fixed across finite-difference probes.
IterationLosses compute_losses(const TrainConfig& cfg, const Models& models,
                               ParamSet& student, ParamSet& aux, const LossInputs& inputs,
                               bool with_grad, ForwardMode mode,
                               const ContrastPartition* frozen_partition = nullptr,
                               const HookRegistry* hooks = nullptr,
                               bool* hook_disabled = nullptr);

}  // namespace wsco
