#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "wsco/geometry.hpp"
#include "wsco/rng.hpp"

namespace wsco {

// Geometry and feature-space knobs of the synthetic world. Class signatures
// share a common "objectness" block; only the first d_feat/4 coordinates
// discriminate between classes, which is what makes erasing them produce
// genuine inter-category confusion.
struct WorldConfig {
    int num_classes = 4;
    int d_feat = 64;
    int n_source = 40;
    int n_target = 50;
    int min_instances = 2;
    int max_instances = 5;
    std::vector<double> class_prior;  // empty -> uniform
    double noise_scale = 0.05;
    double shift_scale = 0.35;   // per-coordinate sd of the domain shift
    double sigma_weak = 0.01;
    double p_erase = 0.3;        // chance a level>=4 mask may hit class-relevant coords
    std::array<double, 5> mask_frac = {0.05, 0.15, 0.30, 0.45, 0.60};
    double level_noise = 0.02;   // per-level noise sd increment
    double bg_feature_scale = 1.0;  // sd of background region content

    // teacher proposal synthesis
    int proposals_per_gt = 3;
    double proposal_jitter = 0.18;  // relative to box size
    int background_proposals = 6;
    double background_max_iou = 0.3;

    int relevant_width() const { return d_feat / 4; }
    std::vector<double> prior() const;
    void validate() const;
};

struct ScenarioInstance {
    int class_id = 0;
    std::vector<double> signature;
    BBox box;
};

struct Scenario {
    int image_id = 0;
    double noise_scale = 0.0;
    std::vector<double> shift;  // domain shift applied to this scenario's instances
    std::vector<ScenarioInstance> instances;
};

// Binary keep-mask over feature coordinates; coordinates below
// relevant_width are the class-relevant group.
struct MaskOperator {
    std::vector<double> keep;
    int relevant_width = 0;

    int erased_count() const;
    bool erases_relevant() const;
};

struct ClassBank {
    std::vector<std::vector<double>> signatures;  // K x d_feat
    int relevant_width = 0;
};

ClassBank make_class_bank(std::uint64_t seed, const WorldConfig& world);

struct ScenarioSets {
    ClassBank bank;
    std::vector<double> shift;
    std::vector<Scenario> source;
    std::vector<Scenario> target;
};

// Deterministic per (seed, world): signatures once per class, source
// instances at zero shift, target instances at the drawn domain shift.
ScenarioSets generate_scenarios(std::uint64_t seed, const WorldConfig& world);

// Low-variance feature noise plus box jitter of at most 2% of the canvas.
Scenario weak_augment(const Scenario& s, std::uint64_t seed, const WorldConfig& world);

// Draws one keep-mask whose erased set grows with the level, applies it to
// every instance and adds level-scaled noise.
std::pair<Scenario, MaskOperator> strong_augment(const Scenario& s, int level,
                                                 std::uint64_t seed, const WorldConfig& world);

// Single-feature variant drawing a fresh mask; used by the entropy estimator.
std::vector<double> strong_mask_feature(const std::vector<double>& f, int level,
                                        const WorldConfig& world, Rng& rng);
// Applies a fixed keep-mask (no noise).
std::vector<double> apply_mask(const std::vector<double>& f, const MaskOperator& mask);

using Classifier = std::function<std::vector<double>(const std::vector<double>&)>;
using FeatureAugment = std::function<std::vector<double>(const std::vector<double>&, Rng&)>;

// Mean plug-in predictive entropy (nats) over all instances; with an
// augment, each instance is averaged over n_mc draws.
double estimate_conditional_entropy(const Classifier& classifier,
                                    const std::vector<Scenario>& scenarios,
                                    const FeatureAugment* augment = nullptr, int n_mc = 64,
                                    std::uint64_t seed = 0);

// Ground-truth boxes with jittered copies plus random background boxes at
// IoU < background_max_iou to every ground truth, capped at max_proposals.
std::vector<BBox> make_proposals(const Scenario& s, const WorldConfig& world,
                                 std::uint64_t seed, int max_proposals);

std::vector<GroundTruth> ground_truths(const Scenario& s);

}  // namespace wsco
