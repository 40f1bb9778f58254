#include "wsco/labeling.hpp"

#include <algorithm>
#include <cmath>

#include "wsco/check.hpp"

namespace wsco {

void update_memory(MemoryBank& bank, const Matrix& features, const std::vector<int>& classes,
                   const std::vector<double>& confidences) {
    check_config(static_cast<int>(classes.size()) == features.rows() &&
                     classes.size() == confidences.size(),
                 "update_memory: candidate arity mismatch");
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const int k = classes[i];
        check_config(k >= 0 && k < bank.num_classes(), "update_memory: class out of range");
        auto& queue = bank.queues[static_cast<std::size_t>(k)];
        queue.push_back({features.row_copy(static_cast<int>(i)), confidences[i]});
        std::stable_sort(queue.begin(), queue.end(),
                         [](const BankEntry& a, const BankEntry& b) {
                             return a.confidence > b.confidence;
                         });
        if (static_cast<int>(queue.size()) > bank.capacity) queue.resize(bank.capacity);
    }
}

ProtoUpdateFlags update_prototypes(PrototypeSet& protos, const MemoryBank& bank,
                                   const RowMap& map_rows, const Matrix& weak_embs,
                                   const Matrix& weak_dists, double eta) {
    check_config(eta >= 0.0 && eta < 1.0, "update_prototypes: eta outside [0,1)");
    check_config(bank.num_classes() == protos.num_classes(),
                 "update_prototypes: class count mismatch");
    ProtoUpdateFlags flags;

    for (int k = 0; k < bank.num_classes(); ++k) {
        const auto& queue = bank.queues[static_cast<std::size_t>(k)];
        if (queue.empty()) continue;  // previous prototype kept
        if (static_cast<int>(queue.size()) < bank.capacity) flags.partial_queues.push_back(k);
        Matrix stacked(static_cast<int>(queue.size()),
                       static_cast<int>(queue.front().feature.size()));
        for (std::size_t i = 0; i < queue.size(); ++i)
            stacked.set_row(static_cast<int>(i), queue[i].feature.data());
        const Matrix mapped = map_rows(stacked);
        check_config(mapped.cols() == protos.dim(), "update_prototypes: mapped width mismatch");
        std::vector<double> mean(static_cast<std::size_t>(protos.dim()), 0.0);
        for (int i = 0; i < mapped.rows(); ++i)
            kernels::active().axpy(1.0, mapped.row(i), mean.data(), mean.size());
        kernels::active().scale(1.0 / mapped.rows(), mean.data(), mean.size());

        if (!protos.initialized[static_cast<std::size_t>(k)]) {
            protos.foreground.set_row(k, mean.data());
            protos.initialized[static_cast<std::size_t>(k)] = true;
        } else {
            // P_k <- (1 - eta) P_k + eta * mean
            kernels::active().ema_blend(1.0 - eta, mean.data(), protos.foreground.row(k),
                                        mean.size());
        }
    }

    // background prototype from the current weak embeddings
    const int bg_col = weak_dists.cols() - 1;
    check_config(weak_dists.rows() == weak_embs.rows(),
                 "update_prototypes: embedding/distribution mismatch");
    double weight_sum = 0.0;
    std::vector<double> acc(static_cast<std::size_t>(weak_embs.cols()), 0.0);
    for (int i = 0; i < weak_embs.rows(); ++i) {
        const double w = weak_dists(i, bg_col);
        weight_sum += w;
        kernels::active().axpy(w, weak_embs.row(i), acc.data(), acc.size());
    }
    if (weight_sum > 1e-12) {
        kernels::active().scale(1.0 / weight_sum, acc.data(), acc.size());
        check_config(static_cast<int>(acc.size()) == protos.dim(),
                     "update_prototypes: background width mismatch");
        protos.background = acc;
        protos.background_valid = true;
    } else {
        flags.background_undefined = true;  // previous value retained
    }
    ++protos.iteration;
    return flags;
}

namespace {

double proto_distance(const double* emb, int dim, const double* proto, bool exists,
                      bool* zero_norm) {
    if (!exists) return kMissingDistance;
    const double n = std::sqrt(kernels::active().sumsq(emb, static_cast<std::size_t>(dim)));
    if (n < 1e-12) {
        if (zero_norm) *zero_norm = true;
        return 1.0;
    }
    return cosine_distance(emb, proto, static_cast<std::size_t>(dim));
}

}  // namespace

LabelResult nearest_centroid_labels(const Matrix& embs, const PrototypeSet& protos) {
    check_config(embs.cols() == protos.dim(), "nearest_centroid: width mismatch");
    check_config(protos.foreground.all_finite(), "nearest_centroid: non-finite prototype");
    LabelResult res;
    const int K = protos.num_classes();
    for (int i = 0; i < embs.rows(); ++i) {
        std::vector<double> d(static_cast<std::size_t>(K) + 1, kMissingDistance);
        for (int k = 0; k < K; ++k)
            d[static_cast<std::size_t>(k)] =
                proto_distance(embs.row(i), embs.cols(), protos.foreground.row(k),
                               protos.initialized[static_cast<std::size_t>(k)], &res.zero_norm);
        d[static_cast<std::size_t>(K)] =
            proto_distance(embs.row(i), embs.cols(), protos.background.data(),
                           protos.background_valid, &res.zero_norm);
        int best = 0;
        for (int j = 1; j <= K; ++j)
            if (d[static_cast<std::size_t>(j)] < d[static_cast<std::size_t>(best)]) best = j;
        res.labels.push_back(best);
        res.distances.push_back(std::move(d));
    }
    return res;
}

KmeansResult weighted_kmeans_refine(const Matrix& embs, const std::vector<int>& initial_labels,
                                    const PrototypeSet& protos, int n_rounds) {
    check_config(static_cast<int>(initial_labels.size()) == embs.rows(),
                 "kmeans: label count mismatch");
    const int K = protos.num_classes();
    const int C = K + 1;
    const int dim = embs.cols();
    KmeansResult res;
    res.labels = initial_labels;
    res.centroids = Matrix(C, dim);
    res.active.assign(static_cast<std::size_t>(C), false);

    // reference set for the soft-assignment weights: prototypes first, the
    // evolving centroids afterwards
    Matrix reference(C, dim);
    std::vector<bool> ref_active(static_cast<std::size_t>(C), false);
    for (int k = 0; k < K; ++k) {
        if (!protos.initialized[static_cast<std::size_t>(k)]) continue;
        reference.set_row(k, protos.foreground.row(k));
        ref_active[static_cast<std::size_t>(k)] = true;
    }
    if (protos.background_valid) {
        reference.set_row(K, protos.background.data());
        ref_active[static_cast<std::size_t>(K)] = true;
    }

    for (int round = 0; round < n_rounds; ++round) {
        // soft confidence of each point toward its own label
        std::vector<double> weight(static_cast<std::size_t>(embs.rows()), 1.0);
        for (int i = 0; i < embs.rows(); ++i) {
            double z = 0.0, own = 0.0;
            for (int c = 0; c < C; ++c) {
                if (!ref_active[static_cast<std::size_t>(c)]) continue;
                const double e =
                    std::exp(-cosine_distance(embs.row(i), reference.row(c),
                                              static_cast<std::size_t>(dim)));
                z += e;
                if (c == res.labels[static_cast<std::size_t>(i)]) own = e;
            }
            if (z > 0.0 && own > 0.0) weight[static_cast<std::size_t>(i)] = own / z;
        }

        // weighted means per label
        Matrix centroids(C, dim);
        std::vector<double> wsum(static_cast<std::size_t>(C), 0.0);
        for (int i = 0; i < embs.rows(); ++i) {
            const int c = res.labels[static_cast<std::size_t>(i)];
            kernels::active().axpy(weight[static_cast<std::size_t>(i)], embs.row(i),
                                   centroids.row(c), static_cast<std::size_t>(dim));
            wsum[static_cast<std::size_t>(c)] += weight[static_cast<std::size_t>(i)];
        }
        for (int c = 0; c < C; ++c) {
            if (wsum[static_cast<std::size_t>(c)] > 1e-12) {
                kernels::active().scale(1.0 / wsum[static_cast<std::size_t>(c)],
                                        centroids.row(c), static_cast<std::size_t>(dim));
                res.active[static_cast<std::size_t>(c)] = true;
            } else {
                res.active[static_cast<std::size_t>(c)] = false;
                if (ref_active[static_cast<std::size_t>(c)]) res.dropped_class = true;
            }
        }
        res.centroids = centroids;

        // relabel to the nearest active centroid
        bool changed = false;
        for (int i = 0; i < embs.rows(); ++i) {
            int best = -1;
            double best_d = kMissingDistance;
            for (int c = 0; c < C; ++c) {
                if (!res.active[static_cast<std::size_t>(c)]) continue;
                const double d = cosine_distance(embs.row(i), res.centroids.row(c),
                                                 static_cast<std::size_t>(dim));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (best >= 0 && best != res.labels[static_cast<std::size_t>(i)]) {
                res.labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        reference = res.centroids;
        ref_active = res.active;
        if (!changed && round > 0) break;
    }

    // distances to the final centroids (or the prototypes when n_rounds == 0)
    if (n_rounds == 0) {
        const LabelResult nc = nearest_centroid_labels(embs, protos);
        res.distances = nc.distances;
        for (int k = 0; k < K; ++k)
            res.active[static_cast<std::size_t>(k)] = protos.initialized[static_cast<std::size_t>(k)];
        res.active[static_cast<std::size_t>(K)] = protos.background_valid;
        res.centroids = Matrix(C, dim);
        for (int k = 0; k < K; ++k)
            if (protos.initialized[static_cast<std::size_t>(k)])
                res.centroids.set_row(k, protos.foreground.row(k));
        if (protos.background_valid) res.centroids.set_row(K, protos.background.data());
        return res;
    }
    for (int i = 0; i < embs.rows(); ++i) {
        std::vector<double> d(static_cast<std::size_t>(C), kMissingDistance);
        for (int c = 0; c < C; ++c)
            if (res.active[static_cast<std::size_t>(c)])
                d[static_cast<std::size_t>(c)] = cosine_distance(
                    embs.row(i), res.centroids.row(c), static_cast<std::size_t>(dim));
        res.distances.push_back(std::move(d));
    }
    return res;
}

int warmup_blend(const std::vector<double>& feature_dists,
                 const std::vector<double>& embedding_dists, double omega) {
    check_config(feature_dists.size() == embedding_dists.size() && !feature_dists.empty(),
                 "warmup_blend: distance vector mismatch");
    check_config(omega >= 0.0 && omega <= 1.0, "warmup_blend: omega outside [0,1]");
    int best = 0;
    double best_v = (1.0 - omega) * feature_dists[0] + omega * embedding_dists[0];
    for (std::size_t j = 1; j < feature_dists.size(); ++j) {
        const double v = (1.0 - omega) * feature_dists[j] + omega * embedding_dists[j];
        if (v < best_v) {
            best_v = v;
            best = static_cast<int>(j);
        }
    }
    return best;
}

LabelingResult label_weak_instances(const Matrix& weak_embs, const PrototypeSet& emb_protos,
                                    const Matrix& weak_feats, const PrototypeSet& feat_protos,
                                    double omega, int n_rounds) {
    LabelingResult out;
    const LabelResult nc_emb = nearest_centroid_labels(weak_embs, emb_protos);
    const KmeansResult km_emb =
        weighted_kmeans_refine(weak_embs, nc_emb.labels, emb_protos, n_rounds);
    out.embedding_dists = km_emb.distances;
    out.zero_norm = nc_emb.zero_norm;
    out.dropped_class = km_emb.dropped_class;

    if (omega >= 1.0) {
        out.labels = km_emb.labels;
        return out;
    }
    const LabelResult nc_feat = nearest_centroid_labels(weak_feats, feat_protos);
    const KmeansResult km_feat =
        weighted_kmeans_refine(weak_feats, nc_feat.labels, feat_protos, n_rounds);
    out.zero_norm = out.zero_norm || nc_feat.zero_norm;
    out.dropped_class = out.dropped_class || km_feat.dropped_class;
    for (int i = 0; i < weak_embs.rows(); ++i)
        out.labels.push_back(
            warmup_blend(km_feat.distances[static_cast<std::size_t>(i)],
                         km_emb.distances[static_cast<std::size_t>(i)], omega));
    return out;
}

}  // namespace wsco
