#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <string>
#include <vector>

#include "adaptkit/errors.hpp"
#include "adaptkit/rng.hpp"
#include "adaptkit/tensor.hpp"

// Differentiable operations. Every op computes its value eagerly and, when a
// GraphScope is active and some input requires grad, records a backward
// closure onto the tape. Without an active scope ops are plain evaluation.
//
// All ops are single-threaded and accumulate gradients in a fixed order, so
// a fixed seed gives bit-identical results across runs.

namespace adaptkit::ops {

namespace detail {

using adaptkit::detail::accumulate_grad;

inline void finalize(const char* op, std::initializer_list<Tensor> inputs, Tensor& out,
                     std::function<void()> backward) {
    bool needs = false;
    for (const Tensor& t : inputs) needs |= t.requires_grad();
    out.set_requires_grad(needs);
    Graph* g = GraphScope::active();
    if (needs && g != nullptr) {
        GraphNode node;
        node.op = op;
        for (const Tensor& t : inputs) node.inputs.push_back(t.impl());
        node.output = out.impl();
        node.backward = std::move(backward);
        g->record(std::move(node));
    }
}

inline void require_rank2(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw ContractError(std::string(op) + ": expected a 2-D tensor, got shape " +
                            shape_str(t.shape()));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw ContractError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    detail::finalize("matmul", {a, b}, out,
                     [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n] {
                         const std::vector<double>& g = oi->grad;
                         if (ai->requires_grad) {
                             ai->ensure_grad();
                             // da = g . b^T
                             for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t p = 0; p < k; ++p) {
                                     double acc = 0.0;
                                     const double* grow = g.data() + i * n;
                                     const double* brow = bi->data.data() + p * n;
                                     for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                     ai->grad[i * k + p] += acc;
                                 }
                             }
                         }
                         if (bi->requires_grad) {
                             bi->ensure_grad();
                             // db = a^T . g
                             for (std::size_t i = 0; i < m; ++i) {
                                 const double* grow = g.data() + i * n;
                                 for (std::size_t p = 0; p < k; ++p) {
                                     const double av = ai->data[i * k + p];
                                     double* brow = bi->grad.data() + p * n;
                                     for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                                 }
                             }
                         }
                     });
    return out;
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank2(a, "transpose");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
    detail::finalize("transpose", {a}, out, [ai = a.impl(), oi = out.impl(), m, n] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += oi->grad[j * m + i];
    });
    return out;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size()) {
        throw ContractError("reshape: " + shape_str(a.shape()) + " has " +
                            std::to_string(a.size()) + " elements, target " + shape_str(shape) +
                            " wants " + std::to_string(shape_numel(shape)));
    }
    Tensor out(std::move(shape), a.values());
    detail::finalize("reshape", {a}, out, [ai = a.impl(), oi = out.impl()] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ContractError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    detail::finalize("add", {a, b}, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
        detail::accumulate_grad(ai, oi->grad);
        detail::accumulate_grad(bi, oi->grad);
    });
    return out;
}

// Row-broadcast add: a is [m x n], bias is [n]; bias is added to every row.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
    detail::require_rank2(a, "add_bias");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (bias.shape() != Shape{n}) {
        throw ContractError("add_bias: bias shape " + shape_str(bias.shape()) +
                            " does not match row width of " + shape_str(a.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] = a.data()[i * n + j] + bias.data()[j];
    detail::finalize("add_bias", {a, bias}, out,
                     [ai = a.impl(), bi = bias.impl(), oi = out.impl(), m, n] {
                         detail::accumulate_grad(ai, oi->grad);
                         if (bi->requires_grad) {
                             bi->ensure_grad();
                             for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) bi->grad[j] += oi->grad[i * n + j];
                         }
                     });
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ContractError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    detail::finalize("mul", {a, b}, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i)
                ai->grad[i] += bi->data[i] * oi->grad[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i)
                bi->grad[i] += ai->data[i] * oi->grad[i];
        }
    });
    return out;
}

inline Tensor mul_scalar(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
    detail::finalize("mul_scalar", {a}, out, [ai = a.impl(), oi = out.impl(), s] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += s * oi->grad[i];
    });
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    detail::finalize("relu", {a}, out, [ai = a.impl(), oi = out.impl()] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i)
            if (ai->data[i] > 0.0) ai->grad[i] += oi->grad[i];
    });
    return out;
}

// Exact GELU, x * Phi(x) with the Gaussian CDF expressed through erf (not
// the tanh approximation). d/dx = Phi(x) + x * phi(x).
inline Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        out.data()[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    detail::finalize("gelu", {a}, out, [ai = a.impl(), oi = out.impl()] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt_2pi = 0.3989422804014326779;
        for (std::size_t i = 0; i < oi->grad.size(); ++i) {
            const double x = ai->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            ai->grad[i] += (cdf + x * pdf) * oi->grad[i];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i];
    Tensor out = Tensor::scalar(acc);
    detail::finalize("sum", {a}, out, [ai = a.impl(), oi = out.impl()] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += oi->grad[0];
    });
    return out;
}

inline Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ContractError("mean: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i];
    const double inv = 1.0 / static_cast<double>(a.size());
    Tensor out = Tensor::scalar(acc * inv);
    detail::finalize("mean", {a}, out, [ai = a.impl(), oi = out.impl(), inv] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += inv * oi->grad[0];
    });
    return out;
}

// ---------------------------------------------------------------------------
// Softmax / normalization

// Row-wise softmax with per-row max subtraction. NaN inputs propagate.
inline Tensor softmax_rows(const Tensor& a) {
    detail::require_rank2(a, "softmax_rows");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a.data() + i * n;
        double* orow = out.data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        const double inv = 1.0 / denom;
        for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
    }
    detail::finalize("softmax_rows", {a}, out, [ai = a.impl(), oi = out.impl(), m, n] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = oi->data.data() + i * n;
            const double* g = oi->grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
            double* dx = ai->grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - dot);
        }
    });
    return out;
}

// LayerNorm over the last axis with population (1/d) variance and affine
// gamma/beta. x may be [d] or [rows x d].
inline Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        double eps = 1e-6) {
    const std::size_t d = x.shape().back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
        throw ContractError("layernorm: gamma/beta must be [" + std::to_string(d) + "], got " +
                            shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    }
    const std::size_t rows = x.size() / d;
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> inv_std(rows), mu(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* v = x.data() + r * d;
        double m = 0.0;
        for (std::size_t j = 0; j < d; ++j) m += v[j];
        m /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = v[j] - m;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        mu[r] = m;
        inv_std[r] = is;
        double* o = out.data() + r * d;
        for (std::size_t j = 0; j < d; ++j)
            o[j] = (v[j] - m) * is * gamma.data()[j] + beta.data()[j];
    }
    detail::finalize(
        "layernorm", {x, gamma, beta}, out,
        [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl(), rows, d,
         mu = std::move(mu), inv_std = std::move(inv_std)] {
            if (gi->requires_grad) gi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            if (xi->requires_grad) xi->ensure_grad();
            std::vector<double> xhat(d), gg(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* v = xi->data.data() + r * d;
                const double* g = oi->grad.data() + r * d;
                const double is = inv_std[r];
                for (std::size_t j = 0; j < d; ++j) xhat[j] = (v[j] - mu[r]) * is;
                if (gi->requires_grad)
                    for (std::size_t j = 0; j < d; ++j) gi->grad[j] += g[j] * xhat[j];
                if (bi->requires_grad)
                    for (std::size_t j = 0; j < d; ++j) bi->grad[j] += g[j];
                if (xi->requires_grad) {
                    double mean_gg = 0.0, mean_ggx = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        gg[j] = g[j] * gi->data[j];
                        mean_gg += gg[j];
                        mean_ggx += gg[j] * xhat[j];
                    }
                    mean_gg /= static_cast<double>(d);
                    mean_ggx /= static_cast<double>(d);
                    double* dx = xi->grad.data() + r * d;
                    for (std::size_t j = 0; j < d; ++j)
                        dx[j] += is * (gg[j] - mean_gg - xhat[j] * mean_ggx);
                }
            }
        });
    return out;
}

// ---------------------------------------------------------------------------
// Loss

// Mean cross-entropy over a batch of logit rows. logits is [B x C] (or [C]
// for a single sample); labels has one class index per row.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    Shape shape = logits.shape();
    std::size_t batch, classes;
    if (shape.size() == 1) {
        batch = 1;
        classes = shape[0];
    } else if (shape.size() == 2) {
        batch = shape[0];
        classes = shape[1];
    } else {
        throw ContractError("cross_entropy: logits must be [C] or [B x C], got " +
                            shape_str(shape));
    }
    if (labels.size() != batch) {
        throw ContractError("cross_entropy: " + std::to_string(batch) + " logit rows but " +
                            std::to_string(labels.size()) + " labels");
    }
    for (int lbl : labels) {
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= classes) {
            throw ContractError("cross_entropy: label " + std::to_string(lbl) +
                                " out of range for " + std::to_string(classes) + " classes");
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const double* row = logits.data() + i * classes;
        double mx = row[0];
        for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - mx);
        total += mx + std::log(denom) - row[labels[i]];
    }
    const double inv_batch = 1.0 / static_cast<double>(batch);
    Tensor out = Tensor::scalar(total * inv_batch);
    detail::finalize("cross_entropy", {logits}, out,
                     [li = logits.impl(), oi = out.impl(), labels, batch, classes, inv_batch] {
                         if (!li->requires_grad) return;
                         li->ensure_grad();
                         const double gscale = oi->grad[0] * inv_batch;
                         for (std::size_t i = 0; i < batch; ++i) {
                             const double* row = li->data.data() + i * classes;
                             double mx = row[0];
                             for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
                             double denom = 0.0;
                             for (std::size_t j = 0; j < classes; ++j)
                                 denom += std::exp(row[j] - mx);
                             double* dst = li->grad.data() + i * classes;
                             for (std::size_t j = 0; j < classes; ++j) {
                                 double p = std::exp(row[j] - mx) / denom;
                                 if (j == static_cast<std::size_t>(labels[i])) p -= 1.0;
                                 dst[j] += gscale * p;
                             }
                         }
                     });
    return out;
}

// ---------------------------------------------------------------------------
// Concatenation / slicing (2-D row and column variants)

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    const std::size_t n = parts[0].shape().size() == 2 ? parts[0].shape()[1] : 0;
    std::size_t rows = 0;
    for (const Tensor& p : parts) {
        detail::require_rank2(p, "concat_rows");
        if (p.shape()[1] != n) {
            throw ContractError("concat_rows: column mismatch " + shape_str(p.shape()));
        }
        rows += p.shape()[0];
    }
    Tensor out = Tensor::zeros({rows, n});
    std::size_t r = 0;
    for (const Tensor& p : parts) {
        std::copy(p.data(), p.data() + p.size(), out.data() + r * n);
        r += p.shape()[0];
    }
    bool needs = false;
    for (const Tensor& p : parts) needs |= p.requires_grad();
    out.set_requires_grad(needs);
    Graph* g = GraphScope::active();
    if (needs && g != nullptr) {
        GraphNode node;
        node.op = "concat_rows";
        for (const Tensor& p : parts) node.inputs.push_back(p.impl());
        node.output = out.impl();
        node.backward = [inputs = node.inputs, oi = out.impl(), n] {
            std::size_t r = 0;
            for (const auto& in : inputs) {
                const std::size_t cnt = in->shape[0] * n;
                if (in->requires_grad) {
                    in->ensure_grad();
                    for (std::size_t i = 0; i < cnt; ++i) in->grad[i] += oi->grad[r * n + i];
                }
                r += in->shape[0];
            }
        };
        g->record(std::move(node));
    }
    return out;
}

inline Tensor slice_rows(const Tensor& a, std::size_t row0, std::size_t count) {
    detail::require_rank2(a, "slice_rows");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (row0 + count > m) {
        throw ContractError("slice_rows: rows [" + std::to_string(row0) + ", " +
                            std::to_string(row0 + count) + ") out of " + std::to_string(m));
    }
    Tensor out = Tensor::zeros({count, n});
    std::copy(a.data() + row0 * n, a.data() + (row0 + count) * n, out.data());
    detail::finalize("slice_rows", {a}, out, [ai = a.impl(), oi = out.impl(), row0, n] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[row0 * n + i] += oi->grad[i];
    });
    return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const std::size_t m = parts[0].shape().size() == 2 ? parts[0].shape()[0] : 0;
    std::size_t cols = 0;
    for (const Tensor& p : parts) {
        detail::require_rank2(p, "concat_cols");
        if (p.shape()[0] != m) {
            throw ContractError("concat_cols: row mismatch " + shape_str(p.shape()));
        }
        cols += p.shape()[1];
    }
    Tensor out = Tensor::zeros({m, cols});
    std::size_t c = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = p.shape()[1];
        for (std::size_t i = 0; i < m; ++i)
            std::copy(p.data() + i * w, p.data() + (i + 1) * w, out.data() + i * cols + c);
        c += w;
    }
    bool needs = false;
    for (const Tensor& p : parts) needs |= p.requires_grad();
    out.set_requires_grad(needs);
    Graph* g = GraphScope::active();
    if (needs && g != nullptr) {
        GraphNode node;
        node.op = "concat_cols";
        for (const Tensor& p : parts) node.inputs.push_back(p.impl());
        node.output = out.impl();
        node.backward = [inputs = node.inputs, oi = out.impl(), m, cols] {
            std::size_t c = 0;
            for (const auto& in : inputs) {
                const std::size_t w = in->shape[1];
                if (in->requires_grad) {
                    in->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                            in->grad[i * w + j] += oi->grad[i * cols + c + j];
                }
                c += w;
            }
        };
        g->record(std::move(node));
    }
    return out;
}

// Row gather: out[i] = a[rows[i]]. Rows may repeat; backward scatter-adds.
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
    detail::require_rank2(a, "gather_rows");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    for (std::size_t r : rows) {
        if (r >= m) {
            throw ContractError("gather_rows: row " + std::to_string(r) + " out of " +
                                std::to_string(m));
        }
    }
    Tensor out = Tensor::zeros({rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(a.data() + rows[i] * n, a.data() + (rows[i] + 1) * n, out.data() + i * n);
    detail::finalize("gather_rows", {a}, out, [ai = a.impl(), oi = out.impl(), rows, n] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) ai->grad[rows[i] * n + j] += oi->grad[i * n + j];
    });
    return out;
}

inline Tensor slice_cols(const Tensor& a, std::size_t col0, std::size_t count) {
    detail::require_rank2(a, "slice_cols");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (col0 + count > n) {
        throw ContractError("slice_cols: cols [" + std::to_string(col0) + ", " +
                            std::to_string(col0 + count) + ") out of " + std::to_string(n));
    }
    Tensor out = Tensor::zeros({m, count});
    for (std::size_t i = 0; i < m; ++i)
        std::copy(a.data() + i * n + col0, a.data() + i * n + col0 + count,
                  out.data() + i * count);
    detail::finalize("slice_cols", {a}, out, [ai = a.impl(), oi = out.impl(), col0, m, n] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        const std::size_t count = oi->shape[1];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j)
                ai->grad[i * n + col0 + j] += oi->grad[i * count + j];
    });
    return out;
}

// ---------------------------------------------------------------------------
// Dropout / BatchNorm

// Inverted dropout: in train mode surviving entries are scaled by 1/(1-p).
// p == 0 or eval mode is an exact passthrough that consumes no randomness.
inline Tensor dropout(const Tensor& x, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) {
        throw ContractError("dropout: p must be in [0, 1), got " + std::to_string(p));
    }
    if (!train || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        mask[i] = rng.next_uniform() >= p ? keep_scale : 0.0;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * mask[i];
    detail::finalize("dropout", {x}, out,
                     [xi = x.impl(), oi = out.impl(), mask = std::move(mask)] {
                         if (!xi->requires_grad) return;
                         xi->ensure_grad();
                         for (std::size_t i = 0; i < oi->grad.size(); ++i)
                             xi->grad[i] += mask[i] * oi->grad[i];
                     });
    return out;
}

// BatchNorm without learnable affine over a [B x d] batch. Train mode
// normalizes by batch statistics (population variance) and updates the
// running buffers in place:
//   running = (1 - momentum) * running + momentum * batch_stat.
// Eval mode normalizes by the running buffers. The buffers are plain
// tensors with requires_grad == false; they never receive gradients.
inline Tensor batchnorm(const Tensor& x, Tensor& running_mean, Tensor& running_var, bool train,
                        double eps = 1e-5, double momentum = 0.1) {
    detail::require_rank2(x, "batchnorm");
    const std::size_t b = x.shape()[0], d = x.shape()[1];
    if (running_mean.shape() != Shape{d} || running_var.shape() != Shape{d}) {
        throw ContractError("batchnorm: running stats must be [" + std::to_string(d) + "]");
    }
    Tensor out = Tensor::zeros(x.shape());
    if (!train) {
        std::vector<double> inv_std(d);
        for (std::size_t j = 0; j < d; ++j)
            inv_std[j] = 1.0 / std::sqrt(running_var.data()[j] + eps);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j)
                out.data()[i * d + j] = (x.data()[i * d + j] - running_mean.data()[j]) * inv_std[j];
        detail::finalize("batchnorm_eval", {x}, out,
                         [xi = x.impl(), oi = out.impl(), inv_std = std::move(inv_std), b, d] {
                             if (!xi->requires_grad) return;
                             xi->ensure_grad();
                             for (std::size_t i = 0; i < b; ++i)
                                 for (std::size_t j = 0; j < d; ++j)
                                     xi->grad[i * d + j] += inv_std[j] * oi->grad[i * d + j];
                         });
        return out;
    }
    std::vector<double> mu(d, 0.0), var(d, 0.0), inv_std(d);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += x.data()[i * d + j];
    for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x.data()[i * d + j] - mu[j];
            var[j] += c * c;
        }
    for (std::size_t j = 0; j < d; ++j) {
        var[j] /= static_cast<double>(b);
        inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    }
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.data()[i * d + j] = (x.data()[i * d + j] - mu[j]) * inv_std[j];
    for (std::size_t j = 0; j < d; ++j) {
        running_mean.data()[j] = (1.0 - momentum) * running_mean.data()[j] + momentum * mu[j];
        running_var.data()[j] = (1.0 - momentum) * running_var.data()[j] + momentum * var[j];
    }
    detail::finalize("batchnorm_train", {x}, out,
                     [xi = x.impl(), oi = out.impl(), inv_std = std::move(inv_std), b, d] {
                         if (!xi->requires_grad) return;
                         xi->ensure_grad();
                         const double invb = 1.0 / static_cast<double>(b);
                         for (std::size_t j = 0; j < d; ++j) {
                             double mean_g = 0.0, mean_gx = 0.0;
                             for (std::size_t i = 0; i < b; ++i) {
                                 mean_g += oi->grad[i * d + j];
                                 mean_gx += oi->grad[i * d + j] * oi->data[i * d + j];
                             }
                             mean_g *= invb;
                             mean_gx *= invb;
                             for (std::size_t i = 0; i < b; ++i) {
                                 const double xhat = oi->data[i * d + j];
                                 xi->grad[i * d + j] +=
                                     inv_std[j] * (oi->grad[i * d + j] - mean_g - xhat * mean_gx);
                             }
                         }
                     });
    return out;
}

// Index of the row maximum; ties resolve to the lowest index.
inline std::size_t argmax_row(const double* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

}  // namespace adaptkit::ops
