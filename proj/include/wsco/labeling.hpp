#pragma once

#include <functional>
#include <vector>

#include "wsco/matrix.hpp"

namespace wsco {

// Distance assigned to clusters that do not exist (uninitialized prototype,
// dropped centroid). Finite so warm-up blending stays well defined; larger
// than any cosine distance so such clusters never win an argmin.
inline constexpr double kMissingDistance = 4.0;

struct BankEntry {
    std::vector<double> feature;  // pre-MNet weak instance feature
    double confidence = 0.0;
};

// K confidence-ordered queues of capacity D.
struct MemoryBank {
    std::vector<std::vector<BankEntry>> queues;
    int capacity = 10;

    MemoryBank() = default;
    MemoryBank(int num_classes, int capacity_d)
        : queues(static_cast<std::size_t>(num_classes)), capacity(capacity_d) {}

    int num_classes() const { return static_cast<int>(queues.size()); }
};

// Per class, keeps the top-D entries by confidence among existing and new
// candidates. Ties keep the older entry first.
void update_memory(MemoryBank& bank, const Matrix& features,
                   const std::vector<int>& classes, const std::vector<double>& confidences);

struct PrototypeSet {
    Matrix foreground;               // K x dim
    std::vector<double> background;  // dim
    std::vector<bool> initialized;   // per foreground class
    bool background_valid = false;
    long long iteration = 0;

    PrototypeSet() = default;
    PrototypeSet(int num_classes, int dim)
        : foreground(num_classes, dim),
          background(static_cast<std::size_t>(dim), 0.0),
          initialized(static_cast<std::size_t>(num_classes), false) {}

    int num_classes() const { return foreground.rows(); }
    int dim() const { return foreground.cols(); }
};

struct ProtoUpdateFlags {
    bool background_undefined = false;      // all background weights ~ 0
    std::vector<int> partial_queues;        // classes averaged over < D entries
};

using RowMap = std::function<Matrix(const Matrix&)>;

// EMA update of foreground prototypes toward the mapped bank means plus the
// background-probability-weighted mean of the current weak embeddings.
// Classes with empty queues keep their previous prototype; a class seen for
// the first time is set directly to its bank mean.
ProtoUpdateFlags update_prototypes(PrototypeSet& protos, const MemoryBank& bank,
                                   const RowMap& map_rows, const Matrix& weak_embs,
                                   const Matrix& weak_dists, double eta);

struct LabelResult {
    std::vector<int> labels;                       // 0..K-1 foreground, K background
    std::vector<std::vector<double>> distances;    // per embedding, K+1 cosine distances
    bool zero_norm = false;
};

// Nearest centroid over the K+1 prototypes by cosine distance; ties pick the
// lowest index. Zero-norm embeddings get distance 1 to every prototype.
LabelResult nearest_centroid_labels(const Matrix& embs, const PrototypeSet& protos);

struct KmeansResult {
    std::vector<int> labels;
    Matrix centroids;                            // (K+1) x dim
    std::vector<bool> active;                    // centroid exists
    std::vector<std::vector<double>> distances;  // to final centroids
    bool dropped_class = false;
};

// SHOT-style refinement: soft-assignment confidence of each point toward its
// current label weights the centroid means, then points relabel to the
// nearest centroid; repeated for n_rounds or until labels stabilize.
KmeansResult weighted_kmeans_refine(const Matrix& embs, const std::vector<int>& initial_labels,
                                    const PrototypeSet& protos, int n_rounds);

// argmin of (1 - omega) * d_feature + omega * d_embedding; ties pick the
// lowest index.
int warmup_blend(const std::vector<double>& feature_dists,
                 const std::vector<double>& embedding_dists, double omega);

struct LabelingResult {
    std::vector<int> labels;
    std::vector<std::vector<double>> embedding_dists;
    bool zero_norm = false;
    bool dropped_class = false;
};

// Full labeling pass: nearest centroid + weighted K-means in embedding space,
// blended during warm-up (omega < 1) with the same procedure run in feature
// space.
LabelingResult label_weak_instances(const Matrix& weak_embs, const PrototypeSet& emb_protos,
                                    const Matrix& weak_feats, const PrototypeSet& feat_protos,
                                    double omega, int n_rounds);

}  // namespace wsco
