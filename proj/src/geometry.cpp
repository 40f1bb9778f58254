#include "wsco/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace wsco {

Detection detection_from_dist(const BBox& box, std::vector<double> class_dist) {
    check_config(class_dist.size() >= 2, "detection: class_dist needs K+1 entries");
    Detection det;
    det.box = box;
    det.class_dist = std::move(class_dist);
    const int fg = static_cast<int>(det.class_dist.size()) - 1;
    int best = 0;
    for (int k = 1; k < fg; ++k)
        if (det.class_dist[k] > det.class_dist[best]) best = k;
    det.class_id = best;
    det.score = det.class_dist[best];
    return det;
}

void validate_detection(const Detection& det) {
    check_config(det.box.valid(), "detection: degenerate box");
    const double sum = std::accumulate(det.class_dist.begin(), det.class_dist.end(), 0.0);
    check_config(std::abs(sum - 1.0) <= 1e-6, "detection: class_dist not normalized");
    check_config(det.score >= 0.0 && det.score <= 1.0, "detection: score outside [0,1]");
    const int fg = static_cast<int>(det.class_dist.size()) - 1;
    check_config(det.class_id >= 0 && det.class_id < fg, "detection: class_id out of range");
    for (int k = 0; k < fg; ++k)
        check_config(det.class_dist[k] <= det.class_dist[det.class_id] + 1e-12,
                     "detection: class_id is not the foreground argmax");
}

double iou(const BBox& a, const BBox& b) {
    const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double thr) {
    check_config(thr >= 0.0 && thr <= 1.0, "nms: threshold outside [0,1]");
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dets[a].score > dets[b].score; });
    std::vector<Detection> kept;
    for (int idx : order) {
        bool suppressed = false;
        for (const Detection& k : kept)
            if (iou(dets[idx].box, k.box) > thr) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(dets[idx]);
    }
    return kept;
}

long long MatchCounts::tp_total() const { return std::accumulate(tp.begin(), tp.end(), 0LL); }
long long MatchCounts::fp_total() const { return std::accumulate(fp.begin(), fp.end(), 0LL); }
long long MatchCounts::fn_total() const { return std::accumulate(fn.begin(), fn.end(), 0LL); }

void MatchCounts::merge(const MatchCounts& other) {
    check_config(num_classes() == other.num_classes(), "MatchCounts: class count mismatch");
    for (int k = 0; k < num_classes(); ++k) {
        tp[k] += other.tp[k];
        fp[k] += other.fp[k];
        fn[k] += other.fn[k];
    }
}

MatchCounts match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_thr,
                             int num_classes) {
    check_config(iou_thr > 0.0 && iou_thr < 1.0, "match_detections: threshold outside (0,1)");
    MatchCounts counts(num_classes);
    for (int k = 0; k < num_classes; ++k) {
        std::vector<int> det_idx, gt_idx;
        for (std::size_t i = 0; i < dets.size(); ++i)
            if (dets[i].class_id == k) det_idx.push_back(static_cast<int>(i));
        for (std::size_t i = 0; i < gts.size(); ++i)
            if (gts[i].class_id == k) gt_idx.push_back(static_cast<int>(i));
        std::stable_sort(det_idx.begin(), det_idx.end(),
                         [&](int a, int b) { return dets[a].score > dets[b].score; });
        std::vector<bool> used(gt_idx.size(), false);
        for (int di : det_idx) {
            int best = -1;
            double best_iou = 0.0;
            for (std::size_t g = 0; g < gt_idx.size(); ++g) {
                if (used[g]) continue;
                const double v = iou(dets[di].box, gts[gt_idx[g]].box);
                if (v > best_iou) {
                    best_iou = v;
                    best = static_cast<int>(g);
                }
            }
            if (best >= 0 && best_iou >= iou_thr) {
                used[best] = true;
                ++counts.tp[k];
            } else {
                ++counts.fp[k];
            }
        }
        for (bool u : used)
            if (!u) ++counts.fn[k];
    }
    return counts;
}

double mean_average_precision(const std::vector<ImageResult>& images, int num_classes,
                              double iou_thr) {
    long long total_gts = 0;
    for (const auto& img : images) total_gts += static_cast<long long>(img.gts.size());
    check_compute(total_gts > 0, "mAP: no ground truth in the evaluation set");

    double ap_sum = 0.0;
    int classes_with_gt = 0;
    for (int k = 0; k < num_classes; ++k) {
        long long n_gt = 0;
        for (const auto& img : images)
            for (const auto& gt : img.gts)
                if (gt.class_id == k) ++n_gt;
        if (n_gt == 0) continue;
        ++classes_with_gt;

        // (image index, det index) for class k, ordered by content so the
        // result is independent of the input detection order.
        struct Entry {
            double score;
            int img;
            BBox box;
        };
        std::vector<Entry> entries;
        for (std::size_t ii = 0; ii < images.size(); ++ii)
            for (const auto& det : images[ii].dets)
                if (det.class_id == k)
                    entries.push_back({det.score, static_cast<int>(ii), det.box});
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            return std::tie(b.score, a.img, a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
                   std::tie(a.score, b.img, b.box.x1, b.box.y1, b.box.x2, b.box.y2);
        });

        std::vector<std::vector<bool>> used(images.size());
        for (std::size_t ii = 0; ii < images.size(); ++ii)
            used[ii].assign(images[ii].gts.size(), false);

        std::vector<double> precision, recall;
        long long tp = 0, fp = 0;
        for (const Entry& e : entries) {
            const auto& gts = images[static_cast<std::size_t>(e.img)].gts;
            int best = -1;
            double best_iou = 0.0;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (gts[g].class_id != k || used[static_cast<std::size_t>(e.img)][g]) continue;
                const double v = iou(e.box, gts[g].box);
                if (v > best_iou) {
                    best_iou = v;
                    best = static_cast<int>(g);
                }
            }
            if (best >= 0 && best_iou >= iou_thr) {
                used[static_cast<std::size_t>(e.img)][static_cast<std::size_t>(best)] = true;
                ++tp;
            } else {
                ++fp;
            }
            precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
            recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
        }

        // area under the exact precision-recall staircase
        double ap = 0.0;
        for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
            precision[static_cast<std::size_t>(i)] =
                std::max(precision[static_cast<std::size_t>(i)],
                         precision[static_cast<std::size_t>(i) + 1]);
        double prev_recall = 0.0;
        for (std::size_t i = 0; i < precision.size(); ++i) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
        ap_sum += ap;
    }
    return classes_with_gt > 0 ? ap_sum / classes_with_gt : 0.0;
}

double fp_gain(const MatchCounts& source, const MatchCounts& epoch) {
    const double dtp = static_cast<double>(epoch.tp_total() - source.tp_total());
    const double dfp = static_cast<double>(epoch.fp_total() - source.fp_total());
    if (dfp == 0.0) {
        if (dtp == 0.0) return 0.0;
        return dtp > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
    }
    return dtp / dfp;
}

}  // namespace wsco
