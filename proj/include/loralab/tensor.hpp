#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace loralab {

class Rng;

// Dense 64-bit float tensor, flat row-major storage. Handles are shared:
// copying a Tensor aliases the same storage (weights live once, every op
// output is a fresh tensor). Gradients are allocated lazily.
struct TensorImpl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched; same length as data otherwise
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev,
                        bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    size_t numel() const { return impl_->data.size(); }
    int rows() const;
    int cols() const;

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    double& at(int i, int j);
    double at(int i, int j) const;
    double value() const;  // scalar fetch, errors unless numel == 1

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }
    bool has_grad() const { return !impl_->grad.empty(); }
    double* grad();              // allocates a zeroed buffer on first use
    const double* grad() const;  // nullptr if never touched
    void zero_grad();

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> share() const { return impl_; }
    bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }
    Tensor clone() const;  // deep copy of data (not grad)

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Errors if any value is NaN/Inf; `label` names the producing op.
void check_finite(const Tensor& t, const char* label);

// Records one closure per primitive op in execution order. Execution order is
// a topological order of the DAG, so replaying the closures in reverse visits
// every op exactly once in reverse topological order.
class Tape {
public:
    void record(std::shared_ptr<TensorImpl> output, std::function<void()> step);
    size_t size() const { return steps_.size(); }
    void clear();

    // Zeroes the grads of all op outputs recorded on this tape, seeds
    // d(loss)/d(loss) = 1 and replays backward. Grads of leaf tensors
    // accumulate across calls until explicitly zeroed.
    void backward(const Tensor& loss);

private:
    struct Step {
        std::shared_ptr<TensorImpl> output;
        std::function<void()> fn;
    };
    std::vector<Step> steps_;
};

// ---- primitive ops -------------------------------------------------------
// Every op validates shapes, checks its output for NaN/Inf and, when `tape`
// is non-null and an input requires grad, records a backward closure.
// `tape == nullptr` is the inference path.

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape);  // [m,k]x[n,k]^T -> [m,n]
Tensor add(const Tensor& a, const Tensor& b, Tape* tape);        // same shape
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);        // elementwise
Tensor scale(const Tensor& a, double c, Tape* tape);
Tensor gelu(const Tensor& a, Tape* tape);  // tanh approximation
Tensor softmax_rows(const Tensor& a, Tape* tape);
Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps, Tape* tape);
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids, Tape* tape);
Tensor slice_cols(const Tensor& a, int start, int len, Tape* tape);
Tensor concat_cols(const std::vector<Tensor>& parts, Tape* tape);
Tensor sum_all(const Tensor& a, Tape* tape);

// Sum over rows of weights[i] * (logsumexp(logits[i]) - logits[i, targets[i]]).
// Rows with weight 0 are ignored entirely; returns a scalar.
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets,
                          std::span<const double> weights, Tape* tape);

// Inverted-dropout mask: values are 0 with probability p, else 1/(1-p).
// Drawn row-major from a fresh stream, so a mask over a longer sequence
// extends a shorter one drawn from the same seed. Not a grad leaf.
Tensor dropout_mask(std::vector<int> shape, double p, uint64_t seed);

// ---- plain numeric helpers (no autodiff) ---------------------------------

double log_sum_exp(std::span<const double> v);
std::vector<double> softmax_vector(std::span<const double> logits);
// natural-log entropy; zero-probability entries contribute zero
double entropy_of_distribution(std::span<const double> probs);
// argmax with ties broken toward the lowest index
int argmax_index(std::span<const double> v);

}  // namespace loralab
