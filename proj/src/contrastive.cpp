#include "wsco/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wsco/calibration.hpp"

namespace wsco {

std::pair<std::vector<int>, std::vector<int>> split_hard_easy(int anchor, const Matrix& embs,
                                                              const std::vector<int>& labels,
                                                              int background_class) {
    check_config(static_cast<int>(labels.size()) == embs.rows(),
                 "split_hard_easy: label count mismatch");
    check_config(embs.rows() >= 2, "split_hard_easy: need at least 2 embeddings");
    std::vector<int> positives;
    for (int j = 0; j < embs.rows(); ++j)
        if (j != anchor && labels[static_cast<std::size_t>(j)] ==
                               labels[static_cast<std::size_t>(anchor)] &&
            labels[static_cast<std::size_t>(j)] != background_class)
            positives.push_back(j);
    if (positives.empty()) return {{}, {}};

    std::vector<int> others;
    for (int j = 0; j < embs.rows(); ++j)
        if (j != anchor) others.push_back(j);
    std::stable_sort(others.begin(), others.end(), [&](int a, int b) {
        return cosine_similarity(embs.row(anchor), embs.row(a),
                                 static_cast<std::size_t>(embs.cols())) >
               cosine_similarity(embs.row(anchor), embs.row(b),
                                 static_cast<std::size_t>(embs.cols()));
    });
    const std::size_t k = std::min(positives.size(), others.size());
    std::vector<bool> in_neighborhood(static_cast<std::size_t>(embs.rows()), false);
    for (std::size_t j = 0; j < k; ++j)
        in_neighborhood[static_cast<std::size_t>(others[j])] = true;

    std::vector<int> hard, easy;
    for (int p : positives)
        (in_neighborhood[static_cast<std::size_t>(p)] ? easy : hard).push_back(p);
    return {hard, easy};
}

ImageUncertainty image_uncertainty(const std::vector<Detection>& proposals, int H) {
    check_config(H >= 2, "image_uncertainty: H must be >= 2");
    ImageUncertainty out;
    if (proposals.empty()) {
        out.empty_input = true;
        out.retained.assign(static_cast<std::size_t>(H), 0);
        return out;
    }
    for (int h = 1; h <= H; ++h)
        out.retained.push_back(static_cast<int>(nms(proposals, 0.1 * h).size()));
    out.mu = std::accumulate(out.retained.begin(), out.retained.end(), 0.0) / H;
    for (int n : out.retained) out.sigma += (n - out.mu) * (n - out.mu);
    out.sigma /= H;
    return out;
}

std::vector<int> select_negatives(const AnchorPartition& p, double sigma, double u) {
    check_config(u >= 0.0, "select_negatives: u must be >= 0");
    if (sigma <= u) return p.complement;
    std::vector<int> out;
    for (int c : p.complement)
        if (std::find(p.background.begin(), p.background.end(), c) == p.background.end())
            out.push_back(c);
    return out;
}

ContrastPartition build_partition(const Matrix& strong_embs, const std::vector<int>& labels,
                                  int background_class, double sigma, double u) {
    check_config(static_cast<int>(labels.size()) == strong_embs.rows(),
                 "build_partition: label count mismatch");
    ContrastPartition partition;
    partition.anchors.resize(static_cast<std::size_t>(strong_embs.rows()));
    for (int i = 0; i < strong_embs.rows(); ++i) {
        AnchorPartition& p = partition.anchors[static_cast<std::size_t>(i)];
        if (labels[static_cast<std::size_t>(i)] == background_class || strong_embs.rows() < 2)
            continue;
        for (int j = 0; j < strong_embs.rows(); ++j) {
            if (j == i) continue;
            if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)])
                p.positives.push_back(j);
            else {
                p.complement.push_back(j);
                if (labels[static_cast<std::size_t>(j)] == background_class)
                    p.background.push_back(j);
            }
        }
        if (p.positives.empty()) continue;
        auto [hard, easy] = split_hard_easy(i, strong_embs, labels, background_class);
        p.hard = std::move(hard);
        p.easy = std::move(easy);
        p.negatives = select_negatives(p, sigma, u);
        p.loss_active = !p.negatives.empty();
    }
    return partition;
}

LusclResult l_uscl(const Matrix& strong_embs, const ContrastPartition& partition,
                   double lambda, double tau, Matrix* d_embs) {
    check_config(lambda >= 0.0 && lambda <= 1.0, "l_uscl: lambda outside [0,1]");
    check_config(tau > 0.0, "l_uscl: tau must be positive");
    check_config(static_cast<int>(partition.anchors.size()) == strong_embs.rows(),
                 "l_uscl: partition arity mismatch");
    LusclResult res;
    const int n = strong_embs.rows();
    const int d = strong_embs.cols();
    const Matrix un = l2_normalize_rows(strong_embs);
    const Matrix sims = matmul_bt(un, un);
    Matrix dsims(n, n);

    for (int i = 0; i < n; ++i) {
        const AnchorPartition& p = partition.anchors[static_cast<std::size_t>(i)];
        if (!p.loss_active) {
            if (!p.positives.empty()) ++res.skipped_anchors;
            continue;
        }
        ++res.active_anchors;
        double mx = -std::numeric_limits<double>::infinity();
        for (int k : p.negatives) mx = std::max(mx, sims(i, k) / tau);
        double z = 0.0;
        for (int k : p.negatives) z += std::exp(sims(i, k) / tau - mx);
        const double logz = std::log(z) + mx;

        double term_weight = 0.0;
        if (!p.hard.empty()) {
            const double w = lambda / static_cast<double>(p.hard.size());
            for (int j : p.hard) {
                res.value -= w * (sims(i, j) / tau - logz);
                if (d_embs) dsims(i, j) -= w / tau;
            }
            term_weight += lambda;
        }
        if (!p.easy.empty()) {
            const double w = (1.0 - lambda) / static_cast<double>(p.easy.size());
            for (int j : p.easy) {
                res.value -= w * (sims(i, j) / tau - logz);
                if (d_embs) dsims(i, j) -= w / tau;
            }
            term_weight += 1.0 - lambda;
        }
        if (d_embs && term_weight != 0.0) {
            for (int k : p.negatives) {
                const double soft = std::exp(sims(i, k) / tau - logz);
                dsims(i, k) += term_weight * soft / tau;
            }
        }
    }

    if (d_embs) {
        Matrix dsym(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) dsym(i, j) = dsims(i, j) + dsims(j, i);
        const Matrix dun = matmul(dsym, un);
        for (int i = 0; i < n; ++i) {
            const double norm =
                std::sqrt(kernels::active().sumsq(strong_embs.row(i), static_cast<std::size_t>(d)));
            if (norm < 1e-12) continue;
            const double proj =
                kernels::active().dot(un.row(i), dun.row(i), static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j)
                (*d_embs)(i, j) += (dun(i, j) - un(i, j) * proj) / norm;
        }
    }
    return res;
}

double HeRatioStats::mean() const {
    if (ratios.empty()) return 0.0;
    return std::accumulate(ratios.begin(), ratios.end(), 0.0) /
           static_cast<double>(ratios.size());
}

HeRatioStats he_ratio_score(const ContrastPartition& partition) {
    HeRatioStats stats;
    double max_ratio = 0.0;
    for (const auto& p : partition.anchors) {
        if (p.positives.empty()) continue;
        if (p.easy.empty()) {
            ++stats.zero_denominator;
            continue;
        }
        const double r = static_cast<double>(p.hard.size()) / static_cast<double>(p.easy.size());
        stats.ratios.push_back(r);
        max_ratio = std::max(max_ratio, r);
    }
    const int bins = static_cast<int>(std::floor(max_ratio / stats.bin_width)) + 1;
    stats.histogram.assign(static_cast<std::size_t>(bins), 0);
    for (double r : stats.ratios)
        ++stats.histogram[static_cast<std::size_t>(std::min<int>(
            bins - 1, static_cast<int>(std::floor(r / stats.bin_width))))];
    return stats;
}

}  // namespace wsco
