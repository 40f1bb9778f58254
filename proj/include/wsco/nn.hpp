#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wsco/matrix.hpp"
#include "wsco/rng.hpp"

namespace wsco {

// Named parameter tensor with its gradient buffer and SGD velocity.
// Shapes are fixed at construction. Non-trainable tensors (batch-norm
// running statistics) are carried through checkpoints and EMA but are
// ignored by the optimizer and the gradient checker.
struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> vel;
    bool trainable = true;

    std::size_t size() const { return value.size(); }
};

class ParamSet {
public:
    Tensor& add(const std::string& name, std::vector<int> shape, bool trainable = true);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    void zero_grad();
    bool grads_finite() const;
    bool values_finite() const;
    std::size_t total_params() const;

    // FNV-1a over the value bytes of every tensor, in registration order.
    std::uint64_t checksum() const;

private:
    std::vector<Tensor> tensors_;
    int find(const std::string& name) const;
};

// theta <- theta - lr * vel with vel <- momentum * vel + grad; grads cleared.
void sgd_step(ParamSet& params, double lr, double momentum);

// teacher <- rate * teacher + (1 - rate) * student, element-wise over values.
void ema_update(ParamSet& teacher, const ParamSet& student, double rate);

enum class Activation { Identity, Relu };

struct LayerSpec {
    int in = 0;
    int out = 0;
    Activation act = Activation::Identity;
    bool norm = false;
};

// Train: batch statistics, running stats updated.
// Probe: batch statistics, no side effects (finite-difference evaluations).
// Eval:  running statistics (teacher / frozen use).
enum class ForwardMode { Train, Probe, Eval };

struct LayerTrace {
    Matrix input;
    Matrix lin;      // input * W + b
    Matrix preact;   // after normalization (== lin when the layer has none)
    std::vector<double> mean, var;  // batch statistics actually used
};

struct ForwardTrace {
    ForwardMode mode = ForwardMode::Probe;
    std::vector<LayerTrace> layers;
    Matrix output;
    bool valid = false;
};

// Feed-forward dense stack. The net owns structure only; tensors live in a
// ParamSet under `prefix` so teacher/student copies share one definition.
class DenseNet {
public:
    DenseNet() = default;
    DenseNet(std::string prefix, std::vector<LayerSpec> layers);

    void register_params(ParamSet& ps) const;
    void init_params(ParamSet& ps, Rng& rng) const;

    int input_width() const { return layers_.empty() ? 0 : layers_.front().in; }
    int output_width() const { return layers_.empty() ? 0 : layers_.back().out; }
    const std::string& prefix() const { return prefix_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }

    // Records the trace needed by the stateful backward().
    Matrix forward(ParamSet& ps, const Matrix& x, ForwardMode mode) const;
    // Trace-explicit variants for concurrent or nested use.
    ForwardTrace forward_trace(ParamSet& ps, const Matrix& x, ForwardMode mode) const;

    // Accumulates parameter gradients, returns dLoss/dInput.
    Matrix backward(ParamSet& ps, const Matrix& upstream) const;
    Matrix backward_trace(ParamSet& ps, const ForwardTrace& trace, const Matrix& upstream) const;

    // Smallest |pre-activation| over relu layers of the last forward; used by
    // tests to keep finite-difference probes away from kinks.
    double min_abs_preactivation() const;

    std::string wname(int l) const { return prefix_ + ".w" + std::to_string(l); }
    std::string bname(int l) const { return prefix_ + ".b" + std::to_string(l); }
    std::string gname(int l) const { return prefix_ + ".gamma" + std::to_string(l); }
    std::string betaname(int l) const { return prefix_ + ".beta" + std::to_string(l); }
    std::string rmname(int l) const { return prefix_ + ".rmean" + std::to_string(l); }
    std::string rvname(int l) const { return prefix_ + ".rvar" + std::to_string(l); }

private:
    std::string prefix_;
    std::vector<LayerSpec> layers_;
    mutable std::optional<ForwardTrace> last_;
};

struct GradCheckEntry {
    std::string tensor;
    double max_rel_dev = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;
    bool ok(double tol) const { return worst < tol; }
};

// eval(true) must zero grads, run forward+backward and leave analytic
// gradients in `params`; eval(false) must return the loss without side
// effects. Central differences with the given step.
GradCheckReport grad_check(ParamSet& params,
                           const std::function<double(bool with_grad)>& eval,
                           double fd_step = 1e-5);

// ---- loss primitives (mean over rows) ----

Matrix softmax_rows(const Matrix& logits);

// Cross-entropy against integer class targets. If dlogits is non-null it
// receives (softmax - onehot) / n_rows.
double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& targets,
                             Matrix* dlogits);

// Huber with delta = 1, summed over columns, averaged over rows.
double smooth_l1(const Matrix& pred, const Matrix& target, Matrix* dpred);

// ---- checkpoint manifest ----

std::string params_to_manifest(const ParamSet& ps);
void params_from_manifest(const std::string& text, ParamSet& ps);

}  // namespace wsco
