#include "loralab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "loralab/rng.hpp"

namespace loralab {

namespace {

std::shared_ptr<TensorImpl> make_impl(std::vector<int> shape, bool requires_grad) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dim");
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
        n *= static_cast<size_t>(d);
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data.assign(n, 0.0);
    impl->requires_grad = requires_grad;
    return impl;
}

void ensure_grad(TensorImpl* t) {
    if (t->grad.size() != t->data.size()) t->grad.assign(t->data.size(), 0.0);
}

void require_2d(const Tensor& t, const char* who) {
    if (!t.defined() || t.shape().size() != 2)
        throw std::invalid_argument(std::string(who) + ": expected a 2-d tensor");
}

// c += a * b, a is [m,k], b is [k,n], all row major. ikj order so the inner
// loop is a contiguous saxpy the compiler vectorizes.
void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ar = a + static_cast<size_t>(i) * k;
        double* cr = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = ar[p];
            if (av == 0.0) continue;
            const double* br = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

std::vector<double> transposed(const double* src, int r, int c) {
    std::vector<double> out(static_cast<size_t>(r) * c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[static_cast<size_t>(j) * r + i] = src[static_cast<size_t>(i) * c + j];
    return out;
}

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    t.impl_ = make_impl(std::move(shape), requires_grad);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    if (values.size() != t.numel())
        throw std::invalid_argument("from_data: value count does not match shape");
    t.impl_->data = std::move(values);
    check_finite(t, "from_data");
    return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.impl_->data) v = rng.normal(0.0, stddev);
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

int Tensor::rows() const {
    require_2d(*this, "rows");
    return impl_->shape[0];
}

int Tensor::cols() const {
    require_2d(*this, "cols");
    return impl_->shape[1];
}

double& Tensor::at(int i, int j) {
    require_2d(*this, "at");
    return impl_->data[static_cast<size_t>(i) * impl_->shape[1] + j];
}

double Tensor::at(int i, int j) const {
    require_2d(*this, "at");
    return impl_->data[static_cast<size_t>(i) * impl_->shape[1] + j];
}

double Tensor::value() const {
    if (numel() != 1) throw std::invalid_argument("value(): tensor is not a scalar");
    return impl_->data[0];
}

double* Tensor::grad() {
    ensure_grad(impl_.get());
    return impl_->grad.data();
}

const double* Tensor::grad() const {
    return impl_->grad.empty() ? nullptr : impl_->grad.data();
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    Tensor t = zeros(impl_->shape, impl_->requires_grad);
    t.impl_->data = impl_->data;
    return t;
}

void check_finite(const Tensor& t, const char* label) {
    for (double v : t.impl()->data) {
        if (!std::isfinite(v))
            throw std::invalid_argument(std::string(label) + ": non-finite value in tensor");
    }
}

// ---- Tape ------------------------------------------------------------------

void Tape::record(std::shared_ptr<TensorImpl> output, std::function<void()> step) {
    steps_.push_back({std::move(output), std::move(step)});
}

void Tape::clear() { steps_.clear(); }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be a defined scalar");
    // zero op outputs so repeated backward calls accumulate only into leaves
    for (auto& s : steps_) {
        ensure_grad(s.output.get());
        std::fill(s.output->grad.begin(), s.output->grad.end(), 0.0);
    }
    ensure_grad(loss.impl());
    loss.impl()->grad[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->fn();
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) throw std::invalid_argument("matmul: inner dims mismatch");
    Tensor c = Tensor::zeros({m, n});
    mm_acc(a.data(), b.data(), c.data(), m, k, n);
    check_finite(c, "matmul");
    if (tape && (wants_grad(a) || wants_grad(b))) {
        c.set_requires_grad(true);
        auto ai = a.share(), bi = b.share(), ci = c.share();
        tape->record(ci, [ai, bi, ci, m, k, n]() {
            const double* gc = ci->grad.data();
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                auto bt = transposed(bi->data.data(), k, n);
                mm_acc(gc, bt.data(), ai->grad.data(), m, n, k);
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                auto at = transposed(ai->data.data(), m, k);
                mm_acc(at.data(), gc, bi->grad.data(), k, m, n);
            }
        });
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    int m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k) throw std::invalid_argument("matmul_nt: inner dims mismatch");
    Tensor c = Tensor::zeros({m, n});
    {
        auto bt = transposed(b.data(), n, k);
        mm_acc(a.data(), bt.data(), c.data(), m, k, n);
    }
    check_finite(c, "matmul_nt");
    if (tape && (wants_grad(a) || wants_grad(b))) {
        c.set_requires_grad(true);
        auto ai = a.share(), bi = b.share(), ci = c.share();
        tape->record(ci, [ai, bi, ci, m, k, n]() {
            const double* gc = ci->grad.data();
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                mm_acc(gc, bi->data.data(), ai->grad.data(), m, n, k);
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                auto gt = transposed(gc, m, n);
                mm_acc(gt.data(), ai->data.data(), bi->grad.data(), n, m, k);
            }
        });
    }
    return c;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    if (!a.defined() || !b.defined() || a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch");
    Tensor c = Tensor::zeros(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (size_t i = 0; i < c.numel(); ++i) pc[i] = pa[i] + pb[i];
    check_finite(c, "add");
    if (tape && (wants_grad(a) || wants_grad(b))) {
        c.set_requires_grad(true);
        auto ai = a.share(), bi = b.share(), ci = c.share();
        tape->record(ci, [ai, bi, ci]() {
            const auto& gc = ci->grad;
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                for (size_t i = 0; i < gc.size(); ++i) ai->grad[i] += gc[i];
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                for (size_t i = 0; i < gc.size(); ++i) bi->grad[i] += gc[i];
            }
        });
    }
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    if (!a.defined() || !b.defined() || a.shape() != b.shape())
        throw std::invalid_argument("mul: shape mismatch");
    Tensor c = Tensor::zeros(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (size_t i = 0; i < c.numel(); ++i) pc[i] = pa[i] * pb[i];
    check_finite(c, "mul");
    if (tape && (wants_grad(a) || wants_grad(b))) {
        c.set_requires_grad(true);
        auto ai = a.share(), bi = b.share(), ci = c.share();
        tape->record(ci, [ai, bi, ci]() {
            const auto& gc = ci->grad;
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                for (size_t i = 0; i < gc.size(); ++i) ai->grad[i] += gc[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                for (size_t i = 0; i < gc.size(); ++i) bi->grad[i] += gc[i] * ai->data[i];
            }
        });
    }
    return c;
}

Tensor scale(const Tensor& a, double cfac, Tape* tape) {
    if (!a.defined()) throw std::invalid_argument("scale: undefined tensor");
    Tensor c = Tensor::zeros(a.shape());
    const double* pa = a.data();
    double* pc = c.data();
    for (size_t i = 0; i < c.numel(); ++i) pc[i] = pa[i] * cfac;
    check_finite(c, "scale");
    if (tape && wants_grad(a)) {
        c.set_requires_grad(true);
        auto ai = a.share(), ci = c.share();
        tape->record(ci, [ai, ci, cfac]() {
            ensure_grad(ai.get());
            for (size_t i = 0; i < ci->grad.size(); ++i) ai->grad[i] += ci->grad[i] * cfac;
        });
    }
    return c;
}

Tensor gelu(const Tensor& a, Tape* tape) {
    if (!a.defined()) throw std::invalid_argument("gelu: undefined tensor");
    constexpr double c0 = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double c1 = 0.044715;
    Tensor c = Tensor::zeros(a.shape());
    const double* pa = a.data();
    double* pc = c.data();
    for (size_t i = 0; i < c.numel(); ++i) {
        double x = pa[i];
        double u = c0 * (x + c1 * x * x * x);
        pc[i] = 0.5 * x * (1.0 + std::tanh(u));
    }
    check_finite(c, "gelu");
    if (tape && wants_grad(a)) {
        c.set_requires_grad(true);
        auto ai = a.share(), ci = c.share();
        tape->record(ci, [ai, ci]() {
            ensure_grad(ai.get());
            for (size_t i = 0; i < ci->grad.size(); ++i) {
                double x = ai->data[i];
                double u = c0 * (x + c1 * x * x * x);
                double t = std::tanh(u);
                double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c0 * (1.0 + 3.0 * c1 * x * x);
                ai->grad[i] += ci->grad[i] * d;
            }
        });
    }
    return c;
}

Tensor softmax_rows(const Tensor& a, Tape* tape) {
    require_2d(a, "softmax_rows");
    int m = a.shape()[0], n = a.shape()[1];
    Tensor c = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const double* row = a.data() + static_cast<size_t>(i) * n;
        double* out = c.data() + static_cast<size_t>(i) * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            out[j] = std::exp(row[j] - mx);
            sum += out[j];
        }
        for (int j = 0; j < n; ++j) out[j] /= sum;
    }
    check_finite(c, "softmax_rows");
    if (tape && wants_grad(a)) {
        c.set_requires_grad(true);
        auto ai = a.share(), ci = c.share();
        tape->record(ci, [ai, ci, m, n]() {
            ensure_grad(ai.get());
            for (int i = 0; i < m; ++i) {
                const double* p = ci->data.data() + static_cast<size_t>(i) * n;
                const double* gy = ci->grad.data() + static_cast<size_t>(i) * n;
                double* gx = ai->grad.data() + static_cast<size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += gy[j] * p[j];
                for (int j = 0; j < n; ++j) gx[j] += p[j] * (gy[j] - dot);
            }
        });
    }
    return c;
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps,
                       Tape* tape) {
    require_2d(a, "layer_norm_rows");
    int m = a.shape()[0], n = a.shape()[1];
    if (!gain.defined() || !bias.defined() || gain.numel() != static_cast<size_t>(n) ||
        bias.numel() != static_cast<size_t>(n))
        throw std::invalid_argument("layer_norm_rows: gain/bias must have row width");
    Tensor c = Tensor::zeros({m, n});
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * n);
    auto inv_std = std::make_shared<std::vector<double>>(m);
    const double* g = gain.data();
    const double* b = bias.data();
    for (int i = 0; i < m; ++i) {
        const double* row = a.data() + static_cast<size_t>(i) * n;
        double* out = c.data() + static_cast<size_t>(i) * n;
        double* xh = xhat->data() + static_cast<size_t>(i) * n;
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += row[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = row[j] - mean;
            var += d * d;
        }
        var /= n;
        double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = inv;
        for (int j = 0; j < n; ++j) {
            xh[j] = (row[j] - mean) * inv;
            out[j] = g[j] * xh[j] + b[j];
        }
    }
    check_finite(c, "layer_norm_rows");
    if (tape && (wants_grad(a) || wants_grad(gain) || wants_grad(bias))) {
        c.set_requires_grad(true);
        auto ai = a.share(), gi = gain.share(), bi = bias.share(), ci = c.share();
        tape->record(ci, [ai, gi, bi, ci, xhat, inv_std, m, n]() {
            if (gi->requires_grad) ensure_grad(gi.get());
            if (bi->requires_grad) ensure_grad(bi.get());
            if (ai->requires_grad) ensure_grad(ai.get());
            for (int i = 0; i < m; ++i) {
                const double* gy = ci->grad.data() + static_cast<size_t>(i) * n;
                const double* xh = xhat->data() + static_cast<size_t>(i) * n;
                if (gi->requires_grad)
                    for (int j = 0; j < n; ++j) gi->grad[j] += gy[j] * xh[j];
                if (bi->requires_grad)
                    for (int j = 0; j < n; ++j) bi->grad[j] += gy[j];
                if (ai->requires_grad) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < n; ++j) {
                        double dxh = gy[j] * gi->data[j];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= n;
                    m2 /= n;
                    double inv = (*inv_std)[i];
                    double* gx = ai->grad.data() + static_cast<size_t>(i) * n;
                    for (int j = 0; j < n; ++j) {
                        double dxh = gy[j] * gi->data[j];
                        gx[j] += inv * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        });
    }
    return c;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids, Tape* tape) {
    require_2d(table, "embedding_lookup");
    if (ids.empty()) throw std::invalid_argument("embedding_lookup: empty id list");
    int v = table.shape()[0], d = table.shape()[1];
    for (int id : ids)
        if (id < 0 || id >= v) throw std::invalid_argument("embedding_lookup: id out of range");
    int n = static_cast<int>(ids.size());
    Tensor c = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i) {
        const double* src = table.data() + static_cast<size_t>(ids[i]) * d;
        std::copy(src, src + d, c.data() + static_cast<size_t>(i) * d);
    }
    check_finite(c, "embedding_lookup");
    if (tape && wants_grad(table)) {
        c.set_requires_grad(true);
        auto ti = table.share(), ci = c.share();
        std::vector<int> id_copy(ids.begin(), ids.end());
        tape->record(ci, [ti, ci, id_copy, d]() {
            ensure_grad(ti.get());
            for (size_t i = 0; i < id_copy.size(); ++i) {
                const double* gy = ci->grad.data() + i * d;
                double* gt = ti->grad.data() + static_cast<size_t>(id_copy[i]) * d;
                for (int j = 0; j < d; ++j) gt[j] += gy[j];
            }
        });
    }
    return c;
}

Tensor slice_cols(const Tensor& a, int start, int len, Tape* tape) {
    require_2d(a, "slice_cols");
    int m = a.shape()[0], n = a.shape()[1];
    if (start < 0 || len <= 0 || start + len > n)
        throw std::invalid_argument("slice_cols: range out of bounds");
    Tensor c = Tensor::zeros({m, len});
    for (int i = 0; i < m; ++i) {
        const double* src = a.data() + static_cast<size_t>(i) * n + start;
        std::copy(src, src + len, c.data() + static_cast<size_t>(i) * len);
    }
    if (tape && wants_grad(a)) {
        c.set_requires_grad(true);
        auto ai = a.share(), ci = c.share();
        tape->record(ci, [ai, ci, start, len, m, n]() {
            ensure_grad(ai.get());
            for (int i = 0; i < m; ++i) {
                const double* gy = ci->grad.data() + static_cast<size_t>(i) * len;
                double* gx = ai->grad.data() + static_cast<size_t>(i) * n + start;
                for (int j = 0; j < len; ++j) gx[j] += gy[j];
            }
        });
    }
    return c;
}

Tensor concat_cols(const std::vector<Tensor>& parts, Tape* tape) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    int m = parts[0].shape()[0];
    int total = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p.shape()[0] != m) throw std::invalid_argument("concat_cols: row mismatch");
        total += p.shape()[1];
        any_grad = any_grad || wants_grad(p);
    }
    Tensor c = Tensor::zeros({m, total});
    int off = 0;
    for (const auto& p : parts) {
        int w = p.shape()[1];
        for (int i = 0; i < m; ++i) {
            const double* src = p.data() + static_cast<size_t>(i) * w;
            std::copy(src, src + w, c.data() + static_cast<size_t>(i) * total + off);
        }
        off += w;
    }
    if (tape && any_grad) {
        c.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorImpl>> part_impls;
        for (const auto& p : parts) part_impls.push_back(p.share());
        auto ci = c.share();
        tape->record(ci, [part_impls, ci, m, total]() {
            int off2 = 0;
            for (auto& pi : part_impls) {
                int w = pi->shape[1];
                if (pi->requires_grad) {
                    ensure_grad(pi.get());
                    for (int i = 0; i < m; ++i) {
                        const double* gy = ci->grad.data() + static_cast<size_t>(i) * total + off2;
                        double* gx = pi->grad.data() + static_cast<size_t>(i) * w;
                        for (int j = 0; j < w; ++j) gx[j] += gy[j];
                    }
                }
                off2 += w;
            }
        });
    }
    return c;
}

Tensor sum_all(const Tensor& a, Tape* tape) {
    if (!a.defined()) throw std::invalid_argument("sum_all: undefined tensor");
    double s = 0.0;
    const double* pa = a.data();
    for (size_t i = 0; i < a.numel(); ++i) s += pa[i];
    Tensor c = Tensor::scalar(s);
    check_finite(c, "sum_all");
    if (tape && wants_grad(a)) {
        c.set_requires_grad(true);
        auto ai = a.share(), ci = c.share();
        tape->record(ci, [ai, ci]() {
            ensure_grad(ai.get());
            double g = ci->grad[0];
            for (size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += g;
        });
    }
    return c;
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets,
                          std::span<const double> weights, Tape* tape) {
    require_2d(logits, "cross_entropy_rows");
    int m = logits.shape()[0], n = logits.shape()[1];
    if (targets.size() != static_cast<size_t>(m) || weights.size() != static_cast<size_t>(m))
        throw std::invalid_argument("cross_entropy_rows: target/weight count mismatch");
    auto lse = std::make_shared<std::vector<double>>(m, 0.0);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        if (weights[i] == 0.0) continue;
        int t = targets[i];
        if (t < 0 || t >= n) throw std::invalid_argument("cross_entropy_rows: target out of range");
        const double* row = logits.data() + static_cast<size_t>(i) * n;
        double l = log_sum_exp(std::span<const double>(row, static_cast<size_t>(n)));
        (*lse)[i] = l;
        total += weights[i] * (l - row[t]);
    }
    Tensor c = Tensor::scalar(total);
    check_finite(c, "cross_entropy_rows");
    if (tape && wants_grad(logits)) {
        c.set_requires_grad(true);
        auto li = logits.share(), ci = c.share();
        std::vector<int> tg(targets.begin(), targets.end());
        std::vector<double> w(weights.begin(), weights.end());
        tape->record(ci, [li, ci, lse, tg, w, m, n]() {
            ensure_grad(li.get());
            double gout = ci->grad[0];
            for (int i = 0; i < m; ++i) {
                if (w[i] == 0.0) continue;
                const double* row = li->data.data() + static_cast<size_t>(i) * n;
                double* gx = li->grad.data() + static_cast<size_t>(i) * n;
                double l = (*lse)[i];
                for (int j = 0; j < n; ++j) {
                    double p = std::exp(row[j] - l);
                    double ind = (j == tg[i]) ? 1.0 : 0.0;
                    gx[j] += gout * w[i] * (p - ind);
                }
            }
        });
    }
    return c;
}

Tensor dropout_mask(std::vector<int> shape, double p, uint64_t seed) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout_mask: p must be in [0, 1)");
    Tensor m = Tensor::zeros(std::move(shape));
    Rng rng(seed);
    double keep_scale = 1.0 / (1.0 - p);
    double* pm = m.data();
    for (size_t i = 0; i < m.numel(); ++i) pm[i] = (rng.uniform() >= p) ? keep_scale : 0.0;
    return m;
}

// ---- helpers ---------------------------------------------------------------

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("log_sum_exp: empty span");
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

std::vector<double> softmax_vector(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax_vector: empty span");
    std::vector<double> out(logits.size());
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double s = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        s += out[i];
    }
    for (double& x : out) x /= s;
    return out;
}

double entropy_of_distribution(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

int argmax_index(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("argmax_index: empty span");
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

}  // namespace loralab
