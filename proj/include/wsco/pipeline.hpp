#pragma once

#include <array>
#include <vector>

#include "wsco/geometry.hpp"
#include "wsco/nn.hpp"
#include "wsco/synthetic.hpp"

namespace wsco {

// Structure shared by the weak (teacher) and strong (student) branches:
// a feature transform plus classification and box-delta heads. Parameters
// live in per-branch ParamSets under identical names so EMA lines up.
struct BranchDef {
    DenseNet ext;   // d_feat -> d_feat
    DenseNet cls;   // d_feat -> K+1
    DenseNet box;   // d_feat -> 4

    void register_params(ParamSet& ps) const;
    void init_params(ParamSet& ps, Rng& rng) const;
};

struct Models {
    int d_feat = 0;
    int d_embed = 0;
    int num_classes = 0;  // K foreground classes; distributions have K+1 entries
    BranchDef branch;
    DenseNet mnet;        // d_feat -> 2*d_feat -> 2*d_feat -> d_embed
    DenseNet emb_head;    // d_embed -> K+1, linear softmax head for calibration
};

Models make_models(int d_feat, int d_embed, int num_classes);

// Registers and initializes branch tensors into `ps` (teacher and student use
// separate ParamSets); MNet and the embedding head go into `aux`.
void init_branch_params(const Models& m, ParamSet& ps, Rng& rng);
void init_aux_params(const Models& m, ParamSet& aux, Rng& rng);

// R-CNN style box encoding between a proposal and a target box.
std::array<double, 4> encode_box(const BBox& proposal, const BBox& target);
BBox decode_box(const BBox& proposal, const double* deltas);

struct BranchOutput {
    Matrix features;     // M x d_feat, post feature transform
    Matrix cls_logits;   // M x (K+1)
    Matrix class_dist;   // M x (K+1)
    Matrix box_deltas;   // M x 4
    std::vector<BBox> proposals;
    std::vector<Detection> detections;  // decoded boxes with full distributions
    ForwardTrace ext_trace, cls_trace, box_trace;
};

// Region features blended from the best-IoU instance; proposals under the
// background IoU floor get noise-only features keyed to their coordinates so
// both branches see the same underlying region content.
Matrix region_features(const Scenario& s, const std::vector<BBox>& proposals,
                       const WorldConfig& world);

BranchOutput run_branch(const Models& m, ParamSet& branch_params, const Scenario& s,
                        const std::vector<BBox>& proposals, ForwardMode mode,
                        const WorldConfig& world);

// Teacher proposals viewed as detections for the uncertainty estimator:
// raw proposal boxes scored by objectness (1 - background probability).
std::vector<Detection> proposal_detections(const BranchOutput& out);

// Final detections for evaluation: background-argmax rows dropped, per-class
// NMS at nms_thr, result ordered by descending score.
std::vector<Detection> eval_detections(const BranchOutput& out, double nms_thr);

struct PseudoLabelSet {
    std::vector<int> indices;  // into the M proposals
    std::vector<int> classes;  // argmax foreground class per retained index
    Matrix box_targets;        // teacher box deltas, |indices| x 4

    int size() const { return static_cast<int>(indices.size()); }
};

PseudoLabelSet filter_high_confidence(const BranchOutput& teacher, double threshold);

// Sum p_i * ln(p_i / max(q_i, floor)) with 0 ln 0 = 0. Both inputs must be
// normalized within 1e-6.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     double floor = 1e-8);

struct MtLossOpts {
    double kl_floor = 1e-8;
    bool with_grad = true;
};

struct MtLossResult {
    double l_rcnn = 0.0;
    double l_rpn = 0.0;
    double l_det = 0.0;
    double l_con = 0.0;
    double total = 0.0;
};

// Eq-3-shaped objective: smooth-L1 + cross-entropy on pseudo-labeled indices
// plus the KL consistency term over all M pairs. Gradients are accumulated
// into `student` through the recorded traces when opts.with_grad is set.
MtLossResult l_mt(const Models& m, ParamSet& student, const BranchOutput& student_out,
                  const PseudoLabelSet& pseudo, const BranchOutput& teacher_out,
                  const MtLossOpts& opts = {});

}  // namespace wsco
