#include "wsco/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wsco {

Matrix project(const DenseNet& mnet, ParamSet& aux, const Matrix& features, ForwardMode mode) {
    check_config(features.cols() == mnet.input_width(), "project: feature width mismatch");
    return mnet.forward_trace(aux, features, mode).output;
}

EmbeddingPairBatch project_pair(const Models& m, ParamSet& aux, const Matrix& feat_weak_prime,
                                const Matrix& feat_strong, ForwardMode mode) {
    check_config(feat_weak_prime.rows() == feat_strong.rows(),
                 "project_pair: pair misalignment");
    EmbeddingPairBatch batch;
    batch.wp_trace = m.mnet.forward_trace(aux, feat_weak_prime, mode);
    batch.st_trace = m.mnet.forward_trace(aux, feat_strong, mode);
    batch.weak_prime = batch.wp_trace.output;
    batch.strong = batch.st_trace.output;
    return batch;
}

namespace {

// Cross-entropy of the fixed linear probe head on MNet projections of
// `features`, restricted to the target rows. Fills the flattened MNet
// gradient and optionally the input-feature gradient.
double probe_ce_grad(const Models& m, ParamSet& ps, const Matrix& features,
                     const std::vector<int>& target_indices,
                     const std::vector<int>& target_classes, std::vector<double>* mnet_grad,
                     Matrix* dfeat) {
    ps.zero_grad();
    const ForwardTrace mtrace = m.mnet.forward_trace(ps, features, ForwardMode::Probe);
    const ForwardTrace htrace = m.emb_head.forward_trace(ps, mtrace.output, ForwardMode::Probe);

    Matrix sub(static_cast<int>(target_indices.size()), htrace.output.cols());
    for (std::size_t r = 0; r < target_indices.size(); ++r)
        sub.set_row(static_cast<int>(r), htrace.output.row(target_indices[r]));
    Matrix dsub;
    const double ce = softmax_cross_entropy(sub, target_classes, &dsub);

    Matrix dlogits(htrace.output.rows(), htrace.output.cols());
    for (std::size_t r = 0; r < target_indices.size(); ++r)
        for (int j = 0; j < dlogits.cols(); ++j)
            dlogits(target_indices[r], j) += dsub(static_cast<int>(r), j);

    const Matrix demb = m.emb_head.backward_trace(ps, htrace, dlogits);
    const Matrix din = m.mnet.backward_trace(ps, mtrace, demb);
    if (dfeat) *dfeat = din;

    if (mnet_grad) {
        mnet_grad->clear();
        for (const auto& t : ps.tensors())
            if (t.trainable && t.name.rfind(m.mnet.prefix() + ".", 0) == 0)
                mnet_grad->insert(mnet_grad->end(), t.grad.begin(), t.grad.end());
    }
    return ce;
}

// Adds `scale * (grad at +h) - scale * (grad at -h)) / (2h)` of the probe CE,
// perturbing the MNet block along `dir`, into the real gradient buffers.
// This is the Hessian-vector product that backs the cosine-of-gradients term.
void accumulate_hvp(const Models& m, ParamSet& aux, const Matrix& features,
                    const std::vector<int>& target_indices,
                    const std::vector<int>& target_classes, const std::vector<double>& dir,
                    double scale, double step, Matrix* dfeat) {
    ParamSet scratch = aux;
    auto shift = [&](double sign) {
        std::size_t off = 0;
        for (auto& t : scratch.tensors()) {
            if (!(t.trainable && t.name.rfind(m.mnet.prefix() + ".", 0) == 0)) continue;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double delta = sign * step * dir[off + i];
                t.value[i] += delta;
            }
            off += t.size();
        }
    };

    Matrix dfeat_plus, dfeat_minus;
    shift(+1.0);
    probe_ce_grad(m, scratch, features, target_indices, target_classes, nullptr, &dfeat_plus);
    ParamSet plus = scratch;
    shift(-2.0);
    probe_ce_grad(m, scratch, features, target_indices, target_classes, nullptr, &dfeat_minus);

    const double w = scale / (2.0 * step);
    for (std::size_t ti = 0; ti < aux.tensors().size(); ++ti) {
        Tensor& dst = aux.tensors()[ti];
        if (!dst.trainable) continue;
        const Tensor& gp = plus.tensors()[ti];
        const Tensor& gm = scratch.tensors()[ti];
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst.grad[i] += w * (gp.grad[i] - gm.grad[i]);
    }
    if (dfeat) {
        for (std::size_t i = 0; i < dfeat->size(); ++i)
            dfeat->data()[i] += w * (dfeat_plus.data()[i] - dfeat_minus.data()[i]);
    }
}

}  // namespace

LGradResult l_grad(const Models& m, ParamSet& aux, const Matrix& feat_weak_prime,
                   const Matrix& feat_strong, const std::vector<int>& target_indices,
                   const std::vector<int>& target_classes, Matrix* dfeat_weak_prime,
                   Matrix* dfeat_strong, const LGradOpts& opts) {
    LGradResult res;
    if (target_indices.empty()) {
        res.skipped = true;
        return res;
    }
    check_config(target_indices.size() == target_classes.size(), "l_grad: target mismatch");
    check_config(feat_weak_prime.rows() == feat_strong.rows(), "l_grad: pair misalignment");

    ParamSet scratch = aux;
    std::vector<double> g1, g2;
    probe_ce_grad(m, scratch, feat_weak_prime, target_indices, target_classes, &g1, nullptr);
    probe_ce_grad(m, scratch, feat_strong, target_indices, target_classes, &g2, nullptr);

    const double n1 = l2_norm(g1), n2 = l2_norm(g2);
    if (n1 < 1e-12 || n2 < 1e-12) {
        res.zero_norm = true;
        res.value = 1.0;  // cos taken as 0
        return res;
    }
    const double cosv = dot(g1, g2) / (n1 * n2);
    res.value = 1.0 - cosv;

    if (!opts.with_grad) return res;

    // d(1-cos)/dg1 = cos*g1/|g1|^2 - g2/(|g1||g2|); symmetric for g2.
    auto weight_vec = [&](const std::vector<double>& ga, const std::vector<double>& gb,
                          double na, double nb) {
        std::vector<double> w(ga.size());
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = cosv * ga[i] / (na * na) - gb[i] / (na * nb);
        return w;
    };
    std::vector<double> w1 = weight_vec(g1, g2, n1, n2);
    std::vector<double> w2 = weight_vec(g2, g1, n2, n1);

    for (auto* pair : {&w1, &w2}) {
        const double norm = l2_norm(*pair);
        if (norm < 1e-14) continue;
        for (auto& v : *pair) v /= norm;
        const Matrix& feats = pair == &w1 ? feat_weak_prime : feat_strong;
        Matrix* dfeat = pair == &w1 ? dfeat_weak_prime : dfeat_strong;
        accumulate_hvp(m, aux, feats, target_indices, target_classes, *pair, norm,
                       opts.hvp_step, dfeat);
    }
    return res;
}

Matrix l2_normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (int i = 0; i < x.rows(); ++i) {
        const double n = std::sqrt(kernels::active().sumsq(x.row(i), x.cols()));
        if (n > 1e-12) kernels::active().scale(1.0 / n, out.row(i), out.cols());
        else out.set_row(i, std::vector<double>(static_cast<std::size_t>(x.cols()), 0.0).data());
    }
    return out;
}

LUnsupResult l_unsup(const EmbeddingPairBatch& batch, double tau, Matrix* d_weak_prime,
                     Matrix* d_strong) {
    check_config(tau > 0.0, "l_unsup: tau must be positive");
    LUnsupResult res;
    const int M = batch.weak_prime.rows();
    if (M < 2) {
        res.skipped = true;
        return res;
    }
    const int d = batch.weak_prime.cols();
    const int n = 2 * M;
    Matrix u(n, d);
    for (int i = 0; i < M; ++i) {
        u.set_row(i, batch.weak_prime.row(i));
        u.set_row(M + i, batch.strong.row(i));
    }
    const Matrix un = l2_normalize_rows(u);
    const Matrix sims = matmul_bt(un, un);

    Matrix dsims(n, n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int partner = i < M ? i + M : i - M;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j)
            if (j != i) mx = std::max(mx, sims(i, j) / tau);
        double z = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) z += std::exp(sims(i, j) / tau - mx);
        const double logz = std::log(z) + mx;
        total += logz - sims(i, partner) / tau;
        if (d_weak_prime || d_strong) {
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double soft = std::exp(sims(i, j) / tau - logz);
                dsims(i, j) += (soft - (j == partner ? 1.0 : 0.0)) / (tau * n);
            }
        }
    }
    res.value = total / n;

    if (d_weak_prime || d_strong) {
        // sims = un * un^T, so dun = (dsims + dsims^T) * un
        Matrix dsym(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) dsym(i, j) = dsims(i, j) + dsims(j, i);
        const Matrix dun = matmul(dsym, un);
        // through row normalization: dx = (dun - u_hat (u_hat . dun)) / |x|
        for (int i = 0; i < n; ++i) {
            const double norm = std::sqrt(kernels::active().sumsq(u.row(i), d));
            std::vector<double> dx(static_cast<std::size_t>(d), 0.0);
            if (norm > 1e-12) {
                const double proj = kernels::active().dot(un.row(i), dun.row(i), d);
                for (int j = 0; j < d; ++j)
                    dx[static_cast<std::size_t>(j)] = (dun(i, j) - un(i, j) * proj) / norm;
            }
            Matrix* dst = i < M ? d_weak_prime : d_strong;
            if (dst) {
                const int row = i < M ? i : i - M;
                for (int j = 0; j < d; ++j) (*dst)(row, j) += dx[static_cast<std::size_t>(j)];
            }
        }
    }
    return res;
}

LscResult l_sc(const Models& m, ParamSet& aux, const Matrix& feat_weak_prime,
               const Matrix& feat_strong, const std::vector<int>& target_indices,
               const std::vector<int>& target_classes, Matrix* dfeat_weak_prime,
               Matrix* dfeat_strong, const LscOpts& opts) {
    LscResult res;

    const EmbeddingPairBatch batch =
        project_pair(m, aux, feat_weak_prime, feat_strong, opts.mode);
    const int M = batch.weak_prime.rows();
    const int d = batch.weak_prime.cols();

    Matrix dz_wp(M, d), dz_st(M, d);
    const LUnsupResult lu =
        l_unsup(batch, opts.tau, opts.with_grad ? &dz_wp : nullptr,
                opts.with_grad ? &dz_st : nullptr);
    res.unsup_value = lu.value;
    res.unsup_skipped = lu.skipped;
    if (opts.with_grad && !lu.skipped && opts.alpha != 0.0) {
        kernels::active().scale(opts.alpha, dz_wp.data(), dz_wp.size());
        kernels::active().scale(opts.alpha, dz_st.data(), dz_st.size());
        const Matrix din_wp = m.mnet.backward_trace(aux, batch.wp_trace, dz_wp);
        const Matrix din_st = m.mnet.backward_trace(aux, batch.st_trace, dz_st);
        if (dfeat_weak_prime)
            kernels::active().axpy(1.0, din_wp.data(), dfeat_weak_prime->data(), din_wp.size());
        if (dfeat_strong)
            kernels::active().axpy(1.0, din_st.data(), dfeat_strong->data(), din_st.size());
    }

    const LGradResult lg =
        l_grad(m, aux, feat_weak_prime, feat_strong, target_indices, target_classes,
               dfeat_weak_prime, dfeat_strong,
               {opts.with_grad, opts.hvp_step});
    res.grad_value = lg.skipped ? 0.0 : lg.value;
    res.grad_skipped = lg.skipped;
    res.zero_norm = lg.zero_norm;

    res.total = res.grad_value + opts.alpha * (lu.skipped ? 0.0 : lu.value);
    return res;
}

}  // namespace wsco
