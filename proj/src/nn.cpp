#include "wsco/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <limits>
#include <sstream>

#include "wsco/check.hpp"

namespace wsco {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;  // running <- (1-m)*running + m*batch
}  // namespace

// ---- Matrix free functions ----

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_config(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    kernels::active().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data(), false);
    return c;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    check_config(a.rows() == b.rows(), "matmul_at: batch dimensions differ");
    Matrix c(a.cols(), b.cols());
    kernels::active().gemm_tn(a.cols(), b.cols(), a.rows(), a.data(), b.data(), c.data(), false);
    return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    check_config(a.cols() == b.cols(), "matmul_bt: inner dimensions differ");
    Matrix c(a.rows(), b.rows());
    kernels::active().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), b.data(), c.data(), false);
    return c;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    check_config(a.size() == b.size(), "dot: length mismatch");
    return kernels::active().dot(a.data(), b.data(), a.size());
}

double l2_norm(const std::vector<double>& v) {
    return std::sqrt(kernels::active().sumsq(v.data(), v.size()));
}

double cosine_similarity(const double* a, const double* b, std::size_t n) {
    const auto& k = kernels::active();
    const double na = std::sqrt(k.sumsq(a, n));
    const double nb = std::sqrt(k.sumsq(b, n));
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return k.dot(a, b, n) / (na * nb);
}

// ---- ParamSet ----

int ParamSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        if (tensors_[i].name == name) return static_cast<int>(i);
    return -1;
}

Tensor& ParamSet::add(const std::string& name, std::vector<int> shape, bool trainable) {
    check_config(find(name) < 0, "ParamSet: duplicate tensor " + name);
    std::size_t n = 1;
    for (int d : shape) {
        check_config(d >= 0, "ParamSet: negative dimension in " + name);
        n *= static_cast<std::size_t>(d);
    }
    Tensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.value.assign(n, 0.0);
    t.grad.assign(n, 0.0);
    t.vel.assign(n, 0.0);
    t.trainable = trainable;
    tensors_.push_back(std::move(t));
    return tensors_.back();
}

Tensor& ParamSet::at(const std::string& name) {
    const int i = find(name);
    check_config(i >= 0, "ParamSet: unknown tensor " + name);
    return tensors_[static_cast<std::size_t>(i)];
}

const Tensor& ParamSet::at(const std::string& name) const {
    const int i = find(name);
    check_config(i >= 0, "ParamSet: unknown tensor " + name);
    return tensors_[static_cast<std::size_t>(i)];
}

bool ParamSet::has(const std::string& name) const { return find(name) >= 0; }

void ParamSet::zero_grad() {
    for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

bool ParamSet::grads_finite() const {
    for (const auto& t : tensors_)
        for (double g : t.grad)
            if (!std::isfinite(g)) return false;
    return true;
}

bool ParamSet::values_finite() const {
    for (const auto& t : tensors_)
        for (double v : t.value)
            if (!std::isfinite(v)) return false;
    return true;
}

std::size_t ParamSet::total_params() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

std::uint64_t ParamSet::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tensors_) {
        for (double v : t.value) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

void sgd_step(ParamSet& params, double lr, double momentum) {
    check_compute(params.grads_finite(), "sgd_step: non-finite gradient, step aborted");
    for (auto& t : params.tensors()) {
        if (!t.trainable) continue;
        for (std::size_t i = 0; i < t.size(); ++i) {
            t.vel[i] = momentum * t.vel[i] + t.grad[i];
            t.value[i] -= lr * t.vel[i];
        }
        std::fill(t.grad.begin(), t.grad.end(), 0.0);
    }
}

void ema_update(ParamSet& teacher, const ParamSet& student, double rate) {
    check_config(rate >= 0.0 && rate <= 1.0, "ema_update: rate outside [0,1]");
    check_config(teacher.tensors().size() == student.tensors().size(),
                 "ema_update: tensor count mismatch");
    for (std::size_t i = 0; i < teacher.tensors().size(); ++i) {
        Tensor& t = teacher.tensors()[i];
        const Tensor& s = student.tensors()[i];
        check_config(t.shape == s.shape && t.name == s.name, "ema_update: shape mismatch");
        kernels::active().ema_blend(rate, s.value.data(), t.value.data(), t.size());
    }
}

// ---- DenseNet ----

DenseNet::DenseNet(std::string prefix, std::vector<LayerSpec> layers)
    : prefix_(std::move(prefix)), layers_(std::move(layers)) {
    check_config(!layers_.empty(), "DenseNet: no layers");
    for (std::size_t l = 1; l < layers_.size(); ++l)
        check_config(layers_[l].in == layers_[l - 1].out,
                     "DenseNet: layer dimensions do not chain");
}

void DenseNet::register_params(ParamSet& ps) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& spec = layers_[l];
        ps.add(wname(static_cast<int>(l)), {spec.in, spec.out});
        ps.add(bname(static_cast<int>(l)), {spec.out});
        if (spec.norm) {
            ps.add(gname(static_cast<int>(l)), {spec.out});
            ps.add(betaname(static_cast<int>(l)), {spec.out});
            ps.add(rmname(static_cast<int>(l)), {spec.out}, false);
            auto& rv = ps.add(rvname(static_cast<int>(l)), {spec.out}, false);
            std::fill(rv.value.begin(), rv.value.end(), 1.0);
        }
    }
}

void DenseNet::init_params(ParamSet& ps, Rng& rng) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& spec = layers_[l];
        const double gain = spec.act == Activation::Relu ? 2.0 : 1.0;
        const double sd = std::sqrt(gain / spec.in);
        auto& w = ps.at(wname(static_cast<int>(l)));
        for (auto& v : w.value) v = sd * rng.normal();
        if (spec.norm) {
            auto& g = ps.at(gname(static_cast<int>(l)));
            std::fill(g.value.begin(), g.value.end(), 1.0);
        }
    }
}

ForwardTrace DenseNet::forward_trace(ParamSet& ps, const Matrix& x, ForwardMode mode) const {
    check_config(x.cols() == input_width(), "forward: input width mismatch for " + prefix_);
    ForwardTrace trace;
    trace.mode = mode;
    trace.layers.resize(layers_.size());
    Matrix cur = x;
    const int n = x.rows();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& spec = layers_[l];
        LayerTrace& lt = trace.layers[l];
        lt.input = cur;

        const Tensor& w = ps.at(wname(static_cast<int>(l)));
        const Tensor& b = ps.at(bname(static_cast<int>(l)));
        Matrix lin(n, spec.out);
        kernels::active().gemm_nn(n, spec.out, spec.in, cur.data(), w.value.data(), lin.data(),
                                  false);
        for (int i = 0; i < n; ++i) kernels::active().axpy(1.0, b.value.data(), lin.row(i), spec.out);
        lt.lin = lin;

        Matrix preact = lin;
        if (spec.norm && n > 0) {
            const Tensor& gamma = ps.at(gname(static_cast<int>(l)));
            const Tensor& beta = ps.at(betaname(static_cast<int>(l)));
            lt.mean.assign(spec.out, 0.0);
            lt.var.assign(spec.out, 0.0);
            if (mode == ForwardMode::Eval) {
                lt.mean = ps.at(rmname(static_cast<int>(l))).value;
                lt.var = ps.at(rvname(static_cast<int>(l))).value;
            } else {
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < spec.out; ++j) lt.mean[j] += lin(i, j);
                for (int j = 0; j < spec.out; ++j) lt.mean[j] /= n;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < spec.out; ++j) {
                        const double d = lin(i, j) - lt.mean[j];
                        lt.var[j] += d * d;
                    }
                for (int j = 0; j < spec.out; ++j) lt.var[j] /= n;
                if (mode == ForwardMode::Train) {
                    auto& rm = ps.at(rmname(static_cast<int>(l))).value;
                    auto& rv = ps.at(rvname(static_cast<int>(l))).value;
                    for (int j = 0; j < spec.out; ++j) {
                        rm[j] = (1.0 - kBnMomentum) * rm[j] + kBnMomentum * lt.mean[j];
                        rv[j] = (1.0 - kBnMomentum) * rv[j] + kBnMomentum * lt.var[j];
                    }
                }
            }
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < spec.out; ++j) {
                    const double xhat = (lin(i, j) - lt.mean[j]) / std::sqrt(lt.var[j] + kBnEps);
                    preact(i, j) = gamma.value[j] * xhat + beta.value[j];
                }
        }
        lt.preact = preact;

        if (spec.act == Activation::Relu) {
            Matrix out(n, spec.out);
            kernels::active().relu(preact.data(), out.data(), preact.size());
            cur = std::move(out);
        } else {
            cur = preact;
        }
    }
    trace.output = cur;
    trace.valid = true;
    return trace;
}

Matrix DenseNet::forward(ParamSet& ps, const Matrix& x, ForwardMode mode) const {
    last_ = forward_trace(ps, x, mode);
    return last_->output;
}

Matrix DenseNet::backward(ParamSet& ps, const Matrix& upstream) const {
    check_state(last_.has_value() && last_->valid,
                "backward: no recorded forward pass for " + prefix_);
    return backward_trace(ps, *last_, upstream);
}

Matrix DenseNet::backward_trace(ParamSet& ps, const ForwardTrace& trace,
                                const Matrix& upstream) const {
    check_state(trace.valid, "backward: invalid trace for " + prefix_);
    check_config(upstream.rows() == trace.output.rows() &&
                     upstream.cols() == trace.output.cols(),
                 "backward: upstream shape mismatch");
    Matrix grad = upstream;
    const int n = upstream.rows();
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
        const auto& spec = layers_[static_cast<std::size_t>(l)];
        const LayerTrace& lt = trace.layers[static_cast<std::size_t>(l)];

        // activation
        if (spec.act == Activation::Relu) {
            Matrix masked(n, spec.out);
            kernels::active().relu_grad(lt.preact.data(), grad.data(), masked.data(), grad.size());
            grad = std::move(masked);
        }

        // normalization
        if (spec.norm && n > 0) {
            Tensor& gamma = ps.at(gname(l));
            Tensor& beta = ps.at(betaname(l));
            Matrix dlin(n, spec.out);
            for (int j = 0; j < spec.out; ++j) {
                const double invsd = 1.0 / std::sqrt(lt.var[j] + kBnEps);
                double dgamma = 0.0, dbeta = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double xhat = (lt.lin(i, j) - lt.mean[j]) * invsd;
                    dgamma += grad(i, j) * xhat;
                    dbeta += grad(i, j);
                }
                gamma.grad[j] += dgamma;
                beta.grad[j] += dbeta;

                if (trace.mode == ForwardMode::Eval) {
                    for (int i = 0; i < n; ++i) dlin(i, j) = grad(i, j) * gamma.value[j] * invsd;
                } else {
                    double dvar = 0.0, dmean_a = 0.0, sum_centered = 0.0;
                    for (int i = 0; i < n; ++i) {
                        const double dxhat = grad(i, j) * gamma.value[j];
                        const double centered = lt.lin(i, j) - lt.mean[j];
                        dvar += dxhat * centered;
                        dmean_a += dxhat;
                        sum_centered += centered;
                    }
                    dvar *= -0.5 * invsd * invsd * invsd;
                    const double dmean = -dmean_a * invsd + dvar * (-2.0 / n) * sum_centered;
                    for (int i = 0; i < n; ++i) {
                        const double dxhat = grad(i, j) * gamma.value[j];
                        const double centered = lt.lin(i, j) - lt.mean[j];
                        dlin(i, j) = dxhat * invsd + dvar * 2.0 * centered / n + dmean / n;
                    }
                }
            }
            grad = std::move(dlin);
        }

        // linear
        Tensor& w = ps.at(wname(l));
        Tensor& b = ps.at(bname(l));
        kernels::active().gemm_tn(spec.in, spec.out, n, lt.input.data(), grad.data(),
                                  w.grad.data(), true);
        for (int i = 0; i < n; ++i) kernels::active().axpy(1.0, grad.row(i), b.grad.data(), spec.out);
        Matrix dinput(n, spec.in);
        kernels::active().gemm_nt(n, spec.in, spec.out, grad.data(), w.value.data(),
                                  dinput.data(), false);
        grad = std::move(dinput);
    }
    return grad;
}

double DenseNet::min_abs_preactivation() const {
    if (!last_ || !last_->valid) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].act != Activation::Relu) continue;
        const Matrix& p = last_->layers[l].preact;
        for (std::size_t i = 0; i < p.size(); ++i)
            best = std::min(best, std::abs(p.data()[i]));
    }
    return std::isfinite(best) ? best : 1.0;
}

// ---- gradient checking ----

GradCheckReport grad_check(ParamSet& params,
                           const std::function<double(bool with_grad)>& eval,
                           double fd_step) {
    const double base = eval(true);
    check_compute(std::isfinite(base), "grad_check: non-finite loss");
    std::vector<std::vector<double>> analytic;
    for (const auto& t : params.tensors()) analytic.push_back(t.grad);

    GradCheckReport report;
    for (std::size_t ti = 0; ti < params.tensors().size(); ++ti) {
        Tensor& t = params.tensors()[ti];
        if (!t.trainable) continue;
        double max_diff = 0.0, scale = 1e-8;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t.value[i];
            t.value[i] = saved + fd_step;
            const double lp = eval(false);
            t.value[i] = saved - fd_step;
            const double lm = eval(false);
            t.value[i] = saved;
            check_compute(std::isfinite(lp) && std::isfinite(lm),
                          "grad_check: non-finite loss at perturbed point");
            const double fd = (lp - lm) / (2.0 * fd_step);
            const double a = analytic[ti][i];
            max_diff = std::max(max_diff, std::abs(a - fd));
            scale = std::max({scale, std::abs(a), std::abs(fd)});
        }
        GradCheckEntry entry{t.name, max_diff / scale};
        report.worst = std::max(report.worst, entry.max_rel_dev);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

// ---- loss primitives ----

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (int i = 0; i < logits.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
        double z = 0.0;
        for (int j = 0; j < logits.cols(); ++j) {
            p(i, j) = std::exp(logits(i, j) - mx);
            z += p(i, j);
        }
        for (int j = 0; j < logits.cols(); ++j) p(i, j) /= z;
    }
    return p;
}

double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& targets,
                             Matrix* dlogits) {
    check_config(static_cast<int>(targets.size()) == logits.rows(),
                 "softmax_cross_entropy: target count mismatch");
    const int n = logits.rows();
    if (dlogits) *dlogits = Matrix(n, logits.cols());
    if (n == 0) return 0.0;
    const Matrix p = softmax_rows(logits);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const int t = targets[i];
        check_config(t >= 0 && t < logits.cols(), "softmax_cross_entropy: target out of range");
        loss -= std::log(std::max(p(i, t), 1e-300));
        if (dlogits)
            for (int j = 0; j < logits.cols(); ++j)
                (*dlogits)(i, j) = (p(i, j) - (j == t ? 1.0 : 0.0)) / n;
    }
    return loss / n;
}

double smooth_l1(const Matrix& pred, const Matrix& target, Matrix* dpred) {
    check_config(pred.rows() == target.rows() && pred.cols() == target.cols(),
                 "smooth_l1: shape mismatch");
    const int n = pred.rows();
    if (dpred) *dpred = Matrix(n, pred.cols());
    if (n == 0) return 0.0;
    double loss = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < pred.cols(); ++j) {
            const double e = pred(i, j) - target(i, j);
            const double ae = std::abs(e);
            loss += ae < 1.0 ? 0.5 * e * e : ae - 0.5;
            if (dpred) (*dpred)(i, j) = (ae < 1.0 ? e : (e > 0 ? 1.0 : -1.0)) / n;
        }
    return loss / n;
}

// ---- checkpoint manifest ----

std::string params_to_manifest(const ParamSet& ps) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "wsco-params 1\n";
    for (const auto& t : ps.tensors()) {
        out << "tensor " << t.name << ' ' << (t.trainable ? 1 : 0) << ' ' << t.shape.size();
        for (int d : t.shape) out << ' ' << d;
        out << '\n';
        out << "v";
        for (double v : t.value) out << ' ' << v;
        out << "\nvel";
        for (double v : t.vel) out << ' ' << v;
        out << '\n';
    }
    return out.str();
}

void params_from_manifest(const std::string& text, ParamSet& ps) {
    std::istringstream in(text);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    check_config(magic == "wsco-params" && version == 1, "manifest: bad header");
    std::string tok;
    while (in >> tok) {
        check_config(tok == "tensor", "manifest: expected tensor record");
        std::string name;
        int trainable = 1, ndim = 0;
        in >> name >> trainable >> ndim;
        std::vector<int> shape(ndim);
        std::size_t count = 1;
        for (int& d : shape) {
            in >> d;
            count *= static_cast<std::size_t>(d);
        }
        Tensor* t;
        if (ps.has(name)) {
            t = &ps.at(name);
            check_config(t->shape == shape, "manifest: shape mismatch for " + name);
        } else {
            t = &ps.add(name, shape, trainable != 0);
        }
        in >> tok;
        check_config(tok == "v", "manifest: expected values for " + name);
        for (std::size_t i = 0; i < count; ++i) in >> t->value[i];
        in >> tok;
        check_config(tok == "vel", "manifest: expected velocity for " + name);
        for (std::size_t i = 0; i < count; ++i) in >> t->vel[i];
        check_config(static_cast<bool>(in), "manifest: truncated record for " + name);
    }
}

}  // namespace wsco
