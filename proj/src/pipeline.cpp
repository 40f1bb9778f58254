#include "wsco/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace wsco {

void BranchDef::register_params(ParamSet& ps) const {
    ext.register_params(ps);
    cls.register_params(ps);
    box.register_params(ps);
}

void BranchDef::init_params(ParamSet& ps, Rng& rng) const {
    ext.init_params(ps, rng);
    cls.init_params(ps, rng);
    box.init_params(ps, rng);
}

Models make_models(int d_feat, int d_embed, int num_classes) {
    check_config(d_feat >= 4 && d_embed >= 2 && num_classes >= 2, "models: bad dimensions");
    Models m;
    m.d_feat = d_feat;
    m.d_embed = d_embed;
    m.num_classes = num_classes;
    m.branch.ext = DenseNet("ext", {{d_feat, d_feat, Activation::Relu, false},
                                    {d_feat, d_feat, Activation::Identity, false}});
    m.branch.cls = DenseNet("cls", {{d_feat, num_classes + 1, Activation::Identity, false}});
    m.branch.box = DenseNet("box", {{d_feat, 4, Activation::Identity, false}});
    m.mnet = DenseNet("mnet", {{d_feat, 2 * d_feat, Activation::Relu, true},
                               {2 * d_feat, 2 * d_feat, Activation::Identity, false},
                               {2 * d_feat, d_embed, Activation::Identity, false}});
    m.emb_head = DenseNet("embcls", {{d_embed, num_classes + 1, Activation::Identity, false}});
    return m;
}

void init_branch_params(const Models& m, ParamSet& ps, Rng& rng) {
    m.branch.register_params(ps);
    m.branch.init_params(ps, rng);
}

void init_aux_params(const Models& m, ParamSet& aux, Rng& rng) {
    m.mnet.register_params(aux);
    m.mnet.init_params(aux, rng);
    m.emb_head.register_params(aux);
    m.emb_head.init_params(aux, rng);
    // The calibration probe head stays at its random init: the calibrated
    // parameter set is {ext, MNet} only.
    for (auto& t : aux.tensors())
        if (t.name.rfind(m.emb_head.prefix() + ".", 0) == 0) t.trainable = false;
}

std::array<double, 4> encode_box(const BBox& proposal, const BBox& target) {
    const double pw = proposal.width(), ph = proposal.height();
    const double pcx = proposal.x1 + 0.5 * pw, pcy = proposal.y1 + 0.5 * ph;
    const double tw = target.width(), th = target.height();
    const double tcx = target.x1 + 0.5 * tw, tcy = target.y1 + 0.5 * th;
    return {(tcx - pcx) / pw, (tcy - pcy) / ph, std::log(tw / pw), std::log(th / ph)};
}

BBox decode_box(const BBox& proposal, const double* deltas) {
    const double pw = proposal.width(), ph = proposal.height();
    const double pcx = proposal.x1 + 0.5 * pw, pcy = proposal.y1 + 0.5 * ph;
    const double cx = deltas[0] * pw + pcx;
    const double cy = deltas[1] * ph + pcy;
    const double w = std::exp(std::clamp(deltas[2], -4.0, 4.0)) * pw;
    const double h = std::exp(std::clamp(deltas[3], -4.0, 4.0)) * ph;
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

namespace {

std::uint64_t box_key(int image_id, const BBox& b) {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(image_id);
    for (double v : {b.x1, b.y1, b.x2, b.y2}) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        h ^= bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
}

}  // namespace

Matrix region_features(const Scenario& s, const std::vector<BBox>& proposals,
                       const WorldConfig& world) {
    check_config(!proposals.empty(), "region_features: empty proposal list");
    Matrix feats(static_cast<int>(proposals.size()), world.d_feat);
    for (std::size_t p = 0; p < proposals.size(); ++p) {
        double best_iou = 0.0;
        int best = -1;
        for (std::size_t i = 0; i < s.instances.size(); ++i) {
            const double v = iou(proposals[p], s.instances[i].box);
            if (v > best_iou) {
                best_iou = v;
                best = static_cast<int>(i);
            }
        }
        Rng noise(box_key(s.image_id, proposals[p]));
        const auto bg = noise.normal_vec(world.d_feat, world.bg_feature_scale);
        double* row = feats.row(static_cast<int>(p));
        if (best >= 0 && best_iou >= world.background_max_iou) {
            const auto& sig = s.instances[static_cast<std::size_t>(best)].signature;
            for (int j = 0; j < world.d_feat; ++j)
                row[j] = best_iou * sig[static_cast<std::size_t>(j)] +
                         (1.0 - best_iou) * bg[static_cast<std::size_t>(j)];
        } else {
            for (int j = 0; j < world.d_feat; ++j) row[j] = bg[static_cast<std::size_t>(j)];
        }
    }
    return feats;
}

BranchOutput run_branch(const Models& m, ParamSet& branch_params, const Scenario& s,
                        const std::vector<BBox>& proposals, ForwardMode mode,
                        const WorldConfig& world) {
    check_config(!proposals.empty(), "run_branch: empty proposal list");
    BranchOutput out;
    out.proposals = proposals;
    const Matrix raw = region_features(s, proposals, world);
    out.ext_trace = m.branch.ext.forward_trace(branch_params, raw, mode);
    out.features = out.ext_trace.output;
    out.cls_trace = m.branch.cls.forward_trace(branch_params, out.features, mode);
    out.cls_logits = out.cls_trace.output;
    out.class_dist = softmax_rows(out.cls_logits);
    out.box_trace = m.branch.box.forward_trace(branch_params, out.features, mode);
    out.box_deltas = out.box_trace.output;
    out.detections.reserve(proposals.size());
    for (std::size_t p = 0; p < proposals.size(); ++p) {
        const BBox decoded = decode_box(proposals[p],
                                        out.box_deltas.row(static_cast<int>(p)));
        out.detections.push_back(
            detection_from_dist(decoded, out.class_dist.row_copy(static_cast<int>(p))));
    }
    return out;
}

std::vector<Detection> proposal_detections(const BranchOutput& out) {
    std::vector<Detection> dets;
    dets.reserve(out.proposals.size());
    const int bg = out.class_dist.cols() - 1;
    for (std::size_t p = 0; p < out.proposals.size(); ++p) {
        Detection d = detection_from_dist(out.proposals[p],
                                          out.class_dist.row_copy(static_cast<int>(p)));
        d.score = 1.0 - out.class_dist(static_cast<int>(p), bg);
        dets.push_back(std::move(d));
    }
    return dets;
}

std::vector<Detection> eval_detections(const BranchOutput& out, double nms_thr) {
    const int bg = out.class_dist.cols() - 1;
    const int num_classes = bg;
    std::vector<Detection> merged;
    for (int k = 0; k < num_classes; ++k) {
        std::vector<Detection> cls;
        for (const Detection& d : out.detections) {
            if (d.class_id != k) continue;
            int argmax = 0;
            for (int j = 1; j <= bg; ++j)
                if (d.class_dist[static_cast<std::size_t>(j)] >
                    d.class_dist[static_cast<std::size_t>(argmax)])
                    argmax = j;
            if (argmax == bg) continue;  // background wins outright
            cls.push_back(d);
        }
        auto kept = nms(cls, nms_thr);
        merged.insert(merged.end(), kept.begin(), kept.end());
    }
    std::stable_sort(merged.begin(), merged.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    return merged;
}

PseudoLabelSet filter_high_confidence(const BranchOutput& teacher, double threshold) {
    check_config(threshold > 0.0 && threshold < 1.0, "filter: threshold outside (0,1)");
    PseudoLabelSet set;
    const int fg = teacher.class_dist.cols() - 1;
    std::vector<std::array<double, 4>> targets;
    for (int i = 0; i < teacher.class_dist.rows(); ++i) {
        int best = 0;
        for (int k = 1; k < fg; ++k)
            if (teacher.class_dist(i, k) > teacher.class_dist(i, best)) best = k;
        if (teacher.class_dist(i, best) >= threshold) {
            set.indices.push_back(i);
            set.classes.push_back(best);
            targets.push_back({teacher.box_deltas(i, 0), teacher.box_deltas(i, 1),
                               teacher.box_deltas(i, 2), teacher.box_deltas(i, 3)});
        }
    }
    set.box_targets = Matrix(static_cast<int>(targets.size()), 4);
    for (std::size_t r = 0; r < targets.size(); ++r)
        for (int j = 0; j < 4; ++j) set.box_targets(static_cast<int>(r), j) = targets[r][static_cast<std::size_t>(j)];
    return set;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     double floor) {
    check_config(p.size() == q.size(), "kl: length mismatch");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sp += p[i];
        sq += q[i];
    }
    check_compute(std::abs(sp - 1.0) <= 1e-6 && std::abs(sq - 1.0) <= 1e-6,
                  "kl: inputs not normalized");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], floor));
    return kl;
}

MtLossResult l_mt(const Models& m, ParamSet& student, const BranchOutput& student_out,
                  const PseudoLabelSet& pseudo, const BranchOutput& teacher_out,
                  const MtLossOpts& opts) {
    const int M = student_out.cls_logits.rows();
    const int C = student_out.cls_logits.cols();
    check_config(teacher_out.cls_logits.rows() == M, "l_mt: branch pair misalignment");
    MtLossResult res;

    Matrix dlogits(M, C);
    Matrix ddeltas(M, 4);

    // L_det on pseudo-labeled indices
    if (pseudo.size() > 0) {
        Matrix sub_logits(pseudo.size(), C);
        Matrix sub_deltas(pseudo.size(), 4);
        for (int r = 0; r < pseudo.size(); ++r) {
            sub_logits.set_row(r, student_out.cls_logits.row(pseudo.indices[static_cast<std::size_t>(r)]));
            sub_deltas.set_row(r, student_out.box_deltas.row(pseudo.indices[static_cast<std::size_t>(r)]));
        }
        Matrix dsub_logits, dsub_deltas;
        res.l_rcnn = softmax_cross_entropy(sub_logits, pseudo.classes, &dsub_logits);
        res.l_rpn = smooth_l1(sub_deltas, pseudo.box_targets, &dsub_deltas);
        for (int r = 0; r < pseudo.size(); ++r) {
            const int i = pseudo.indices[static_cast<std::size_t>(r)];
            for (int j = 0; j < C; ++j) dlogits(i, j) += dsub_logits(r, j);
            for (int j = 0; j < 4; ++j) ddeltas(i, j) += dsub_deltas(r, j);
        }
    }
    res.l_det = res.l_rcnn + res.l_rpn;

    // L_con over all M pairs, D_KL(student || teacher)
    for (int i = 0; i < M; ++i) {
        const auto p = student_out.class_dist.row(i);
        const auto q = teacher_out.class_dist.row(i);
        double kl = 0.0;
        for (int j = 0; j < C; ++j)
            if (p[j] > 0.0) kl += p[j] * std::log(p[j] / std::max(q[j], opts.kl_floor));
        res.l_con += kl / M;
        // d/dz_k [KL(softmax(z) || q)] = p_k * ((log p_k - log q_k) - KL)
        for (int j = 0; j < C; ++j) {
            const double a = p[j] > 0.0 ? std::log(p[j]) - std::log(std::max(q[j], opts.kl_floor)) : 0.0;
            dlogits(i, j) += p[j] * (a - kl) / M;
        }
    }
    res.total = res.l_det + res.l_con;

    if (opts.with_grad) {
        Matrix dfeat = m.branch.cls.backward_trace(student, student_out.cls_trace, dlogits);
        const Matrix dfeat_box =
            m.branch.box.backward_trace(student, student_out.box_trace, ddeltas);
        kernels::active().axpy(1.0, dfeat_box.data(), dfeat.data(), dfeat.size());
        m.branch.ext.backward_trace(student, student_out.ext_trace, dfeat);
    }
    return res;
}

}  // namespace wsco
