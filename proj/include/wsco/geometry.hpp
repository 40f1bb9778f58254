#pragma once

#include <vector>

#include "wsco/check.hpp"

namespace wsco {

struct BBox {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    bool valid() const { return x1 < x2 && y1 < y2; }
};

struct GroundTruth {
    BBox box;
    int class_id = 0;
};

// A scored box with its full class distribution over K foreground classes
// plus background (index K). class_id is the argmax over foreground entries,
// score the corresponding probability.
struct Detection {
    BBox box;
    int class_id = 0;
    double score = 0.0;
    std::vector<double> class_dist;
};

// Builds a Detection from a distribution, deriving class_id and score.
Detection detection_from_dist(const BBox& box, std::vector<double> class_dist);

// Checks the type invariants (distribution normalized, argmax consistency).
void validate_detection(const Detection& det);

double iou(const BBox& a, const BBox& b);

// Greedy descending-score suppression; equal scores keep the earlier input
// index first. A box is dropped when IoU with any retained box exceeds thr.
std::vector<Detection> nms(const std::vector<Detection>& dets, double thr);

struct MatchCounts {
    std::vector<long long> tp, fp, fn;

    MatchCounts() = default;
    explicit MatchCounts(int num_classes)
        : tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0) {}

    int num_classes() const { return static_cast<int>(tp.size()); }
    long long tp_total() const;
    long long fp_total() const;
    long long fn_total() const;
    void merge(const MatchCounts& other);
};

// Score-ordered greedy matching per class at the given IoU threshold.
MatchCounts match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_thr,
                             int num_classes);

struct ImageResult {
    int image_id = 0;
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
};

// All-point interpolated AP per class, averaged over classes that have at
// least one ground-truth instance. Throws ComputeError with no ground truth.
double mean_average_precision(const std::vector<ImageResult>& images, int num_classes,
                              double iou_thr = 0.5);

// (TP_t - TP_S) / (FP_t - FP_S) over aggregate counts. A zero denominator
// yields 0 when the numerator is zero and a signed infinity otherwise.
double fp_gain(const MatchCounts& source, const MatchCounts& epoch);

}  // namespace wsco
