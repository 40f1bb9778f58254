#pragma once

#include <vector>

#include "wsco/pipeline.hpp"

namespace wsco {

// Row-wise MNet projection. Train mode updates running statistics, Probe
// computes batch statistics without side effects, Eval uses running ones.
Matrix project(const DenseNet& mnet, ParamSet& aux, const Matrix& features,
               ForwardMode mode = ForwardMode::Eval);

// Region-aligned embedding pair: row i of weak_prime and strong derive from
// the same teacher proposal.
struct EmbeddingPairBatch {
    Matrix weak_prime;  // M x d_embed, weak image through the strong branch
    Matrix strong;      // M x d_embed
    ForwardTrace wp_trace, st_trace;
};

EmbeddingPairBatch project_pair(const Models& m, ParamSet& aux, const Matrix& feat_weak_prime,
                                const Matrix& feat_strong, ForwardMode mode);

struct LGradResult {
    double value = 0.0;
    bool skipped = false;    // no high-confidence targets
    bool zero_norm = false;  // a gradient vector had zero norm; cos taken as 0
};

struct LGradOpts {
    bool with_grad = true;
    double hvp_step = 1e-5;
};

// 1 - cos(g1, g2) where g1, g2 are the MNet-parameter gradients of the
// embedding-head cross-entropy on the weak-prime and strong projections.
// The parameter gradient of the cosine is recovered with central-difference
// Hessian-vector products, so only first-order passes are ever run. Feature
// gradients (for the upstream extractor) accumulate into dfeat_* when given.
LGradResult l_grad(const Models& m, ParamSet& aux, const Matrix& feat_weak_prime,
                   const Matrix& feat_strong, const std::vector<int>& target_indices,
                   const std::vector<int>& target_classes, Matrix* dfeat_weak_prime,
                   Matrix* dfeat_strong, const LGradOpts& opts = {});

struct LUnsupResult {
    double value = 0.0;
    bool skipped = false;  // fewer than 2 pairs
};

// InfoNCE over the union of both embedding sets; the positive of every
// embedding is its cross-augmentation partner, the denominator runs over all
// other union members. Averaged per anchor. dZ buffers receive the embedding
// gradients when non-null.
LUnsupResult l_unsup(const EmbeddingPairBatch& batch, double tau, Matrix* d_weak_prime,
                     Matrix* d_strong);

struct LscResult {
    double total = 0.0;
    double grad_value = 0.0;
    double unsup_value = 0.0;
    bool grad_skipped = false;
    bool unsup_skipped = false;
    bool zero_norm = false;
};

struct LscOpts {
    double alpha = 0.1;
    double tau = 0.07;
    bool with_grad = true;
    double hvp_step = 1e-5;
    ForwardMode mode = ForwardMode::Train;
};

// l_grad + alpha * l_unsup over one projection of the feature pair batch.
// Parameter gradients accumulate into aux; feature gradients into dfeat_*.
LscResult l_sc(const Models& m, ParamSet& aux, const Matrix& feat_weak_prime,
               const Matrix& feat_strong, const std::vector<int>& target_indices,
               const std::vector<int>& target_classes, Matrix* dfeat_weak_prime,
               Matrix* dfeat_strong, const LscOpts& opts = {});

// Rows scaled to unit L2 norm; rows under the floor stay zero.
Matrix l2_normalize_rows(const Matrix& x);

}  // namespace wsco
