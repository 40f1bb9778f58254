#pragma once

#include <vector>

#include "wsco/geometry.hpp"
#include "wsco/matrix.hpp"

namespace wsco {

// Index sets into the strong embedding set for one anchor. Anchors labeled
// background, without positives, or without negatives are carried with
// loss_active = false and contribute nothing to the loss.
struct AnchorPartition {
    std::vector<int> positives;   // same pseudo-category, anchor excluded
    std::vector<int> hard;        // positives outside the neighborhood
    std::vector<int> easy;        // positives inside it
    std::vector<int> complement;  // everything else
    std::vector<int> background;  // background-labeled subset of the complement
    std::vector<int> negatives;   // B_i after the adaptive rule
    bool loss_active = false;
};

struct ContrastPartition {
    std::vector<AnchorPartition> anchors;
};

// Top-|Z_i| cosine neighborhood split of the positive set.
std::pair<std::vector<int>, std::vector<int>> split_hard_easy(int anchor, const Matrix& embs,
                                                              const std::vector<int>& labels,
                                                              int background_class);

struct ImageUncertainty {
    double sigma = 0.0;
    double mu = 0.0;
    std::vector<int> retained;  // N_1..N_H
    bool empty_input = false;
};

// NMS retained-count variance across IoU thresholds 0.1*h for h = 1..H.
ImageUncertainty image_uncertainty(const std::vector<Detection>& proposals, int H);

// B_i = complement \ background when sigma > u, else the full complement.
std::vector<int> select_negatives(const AnchorPartition& p, double sigma, double u);

ContrastPartition build_partition(const Matrix& strong_embs, const std::vector<int>& labels,
                                  int background_class, double sigma, double u);

struct LusclResult {
    double value = 0.0;
    int active_anchors = 0;
    int skipped_anchors = 0;
};

// Two-term supervised contrastive objective over L2-normalized embeddings:
// hard positives weighted by lambda, easy ones by 1-lambda, log-softmax
// denominators over the anchor's negative set. Sum over anchors. Embedding
// gradients accumulate into d_embs when non-null.
LusclResult l_uscl(const Matrix& strong_embs, const ContrastPartition& partition,
                   double lambda, double tau, Matrix* d_embs);

struct HeRatioStats {
    std::vector<double> ratios;  // |hp| / |ep| where |ep| > 0
    int zero_denominator = 0;    // anchors with positives but |ep| == 0
    std::vector<long> histogram;
    double bin_width = 0.1;

    double mean() const;
};

HeRatioStats he_ratio_score(const ContrastPartition& partition);

}  // namespace wsco
