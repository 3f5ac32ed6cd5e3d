// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/autodiff.hpp"

#include <cmath>
#include <memory>

#include "emaglab/errors.hpp"

namespace emaglab {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kLayerNormEps = 1e-5;

// acc += a * b
void matmul_acc_nn(const Tensor& a, const Tensor& b, Tensor& acc) {
    const int64_t m = a.rows(), k = a.cols(), n = b.cols();
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        double* orow = acc.data.data() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + kk * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// acc += a * b^T
void matmul_acc_nt(const Tensor& a, const Tensor& b, Tensor& acc) {
    const int64_t m = a.rows(), k = a.cols(), n = b.rows();
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        double* orow = acc.data.data() + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b.data.data() + j * k;
            double s = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            orow[j] += s;
        }
    }
}

// acc += a^T * b
void matmul_acc_tn(const Tensor& a, const Tensor& b, Tensor& acc) {
    const int64_t k = a.rows(), m = a.cols(), n = b.cols();
    for (int64_t kk = 0; kk < k; ++kk) {
        const double* arow = a.data.data() + kk * m;
        const double* brow = b.data.data() + kk * n;
        for (int64_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = acc.data.data() + i * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}
}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad_scalar(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

GradTape::Id GradTape::push(Tensor value, bool requires_grad,
                            std::function<void(GradTape&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = track_ && requires_grad;
    if (n.requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

GradTape::Id GradTape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

const Tensor& GradTape::grad(Id id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_ready) throw DimensionError("gradient not computed for node " + std::to_string(id));
    return n.grad;
}

Tensor& GradTape::grad_buf(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_ready) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_ready = true;
    }
    return n.grad;
}

void GradTape::accumulate(Id id, const Tensor& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    Tensor& buf = grad_buf(id);
    for (size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += g.data[i];
}

bool GradTape::any_requires(const std::vector<Id>& ids) const {
    for (Id id : ids) {
        if (nodes_[static_cast<size_t>(id)].requires_grad) return true;
    }
    return false;
}

void GradTape::backward(Id root) {
    if (!track_) throw DimensionError("backward() on a non-tracking tape");
    Node& r = nodes_[static_cast<size_t>(root)];
    if (r.value.numel() != 1) throw DimensionError("backward() root must be scalar");
    grad_buf(root).data[0] = 1.0;
    for (Id id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.requires_grad && n.grad_ready && n.backprop) n.backprop(*this);
    }
}

GradTape::Id GradTape::matmul(Id a, Id b) {
    Tensor out = emaglab::matmul(value(a), value(b));
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a, b}), [a, b, self](GradTape& t) {
        const Tensor& g = t.grad(self);
        if (t.nodes_[static_cast<size_t>(a)].requires_grad)
            matmul_acc_nt(g, t.value(b), t.grad_buf(a));
        if (t.nodes_[static_cast<size_t>(b)].requires_grad)
            matmul_acc_tn(t.value(a), g, t.grad_buf(b));
    });
}

GradTape::Id GradTape::transpose(Id a) {
    Tensor out = transpose2d(value(a));
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a}), [a, self](GradTape& t) {
        t.accumulate(a, transpose2d(t.grad(self)));
    });
}

GradTape::Id GradTape::add(Id a, Id b) {
    Tensor out = emaglab::add(value(a), value(b));
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a, b}), [a, b, self](GradTape& t) {
        const Tensor& g = t.grad(self);
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

GradTape::Id GradTape::sub(Id a, Id b) {
    Tensor out = emaglab::sub(value(a), value(b));
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a, b}), [a, b, self](GradTape& t) {
        const Tensor& g = t.grad(self);
        t.accumulate(a, g);
        if (t.nodes_[static_cast<size_t>(b)].requires_grad) {
            Tensor& buf = t.grad_buf(b);
            for (size_t i = 0; i < buf.data.size(); ++i) buf.data[i] -= g.data[i];
        }
    });
}

GradTape::Id GradTape::add_rowvec(Id a, Id v) {
    const Tensor& av = value(a);
    const Tensor& vv = value(v);
    if (av.shape.size() != 2 || vv.numel() != av.cols()) {
        throw DimensionError("add_rowvec: mat " + shape_str(av.shape) + ", vec " +
                             shape_str(vv.shape));
    }
    Tensor out = av;
    const int64_t r = av.rows(), c = av.cols();
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j)
            out.data[static_cast<size_t>(i * c + j)] += vv.data[static_cast<size_t>(j)];
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a, v}), [a, v, r, c, self](GradTape& t) {
        const Tensor& g = t.grad(self);
        t.accumulate(a, g);
        if (t.nodes_[static_cast<size_t>(v)].requires_grad) {
            Tensor& buf = t.grad_buf(v);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j)
                    buf.data[static_cast<size_t>(j)] += g.data[static_cast<size_t>(i * c + j)];
        }
    });
}

GradTape::Id GradTape::scale(Id a, double s) {
    Tensor out = emaglab::scale(value(a), s);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a}), [a, s, self](GradTape& t) {
        if (!t.nodes_[static_cast<size_t>(a)].requires_grad) return;
        const Tensor& g = t.grad(self);
        Tensor& buf = t.grad_buf(a);
        for (size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += s * g.data[i];
    });
}

GradTape::Id GradTape::gelu(Id a) {
    Tensor out = value(a);
    for (double& x : out.data) x = gelu_scalar(x);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a}), [a, self](GradTape& t) {
        if (!t.nodes_[static_cast<size_t>(a)].requires_grad) return;
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(a);
        Tensor& buf = t.grad_buf(a);
        for (size_t i = 0; i < buf.data.size(); ++i)
            buf.data[i] += gelu_grad_scalar(x.data[i]) * g.data[i];
    });
}

GradTape::Id GradTape::softmax_lastdim(Id a) {
    Tensor out = softmax_rows(value(a));
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a}), [a, self](GradTape& t) {
        if (!t.nodes_[static_cast<size_t>(a)].requires_grad) return;
        const Tensor& g = t.grad(self);
        const Tensor& p = t.value(self);
        Tensor& buf = t.grad_buf(a);
        const int64_t k = p.shape.back();
        const int64_t rows = p.numel() / k;
        for (int64_t r = 0; r < rows; ++r) {
            const double* pr = p.data.data() + r * k;
            const double* gr = g.data.data() + r * k;
            double dotgp = 0.0;
            for (int64_t j = 0; j < k; ++j) dotgp += gr[j] * pr[j];
            double* br = buf.data.data() + r * k;
            for (int64_t j = 0; j < k; ++j) br[j] += pr[j] * (gr[j] - dotgp);
        }
    });
}

GradTape::Id GradTape::layer_norm(Id x, Id gain, Id bias) {
    const Tensor& xv = value(x);
    const Tensor& gv = value(gain);
    const Tensor& bv = value(bias);
    const int64_t d = xv.shape.back();
    if (gv.numel() != d || bv.numel() != d)
        throw DimensionError("layer_norm parameter size mismatch");
    Tensor out = xv;
    const int64_t rows = xv.numel() / d;
    // Saved statistics for the backward pass: inv std and normalized x per row.
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    auto xhat = std::make_shared<std::vector<double>>(xv.data.size());
    for (int64_t r = 0; r < rows; ++r) {
        double* o = out.data.data() + r * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += o[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) var += (o[j] - mu) * (o[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[static_cast<size_t>(r)] = inv;
        for (int64_t j = 0; j < d; ++j) {
            const double xh = (o[j] - mu) * inv;
            (*xhat)[static_cast<size_t>(r * d + j)] = xh;
            o[j] = xh * gv.data[static_cast<size_t>(j)] + bv.data[static_cast<size_t>(j)];
        }
    }
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({x, gain, bias}),
                [x, gain, bias, d, rows, inv_std, xhat, self](GradTape& t) {
                    const Tensor& g = t.grad(self);
                    const Tensor& gv2 = t.value(gain);
                    const bool need_x = t.nodes_[static_cast<size_t>(x)].requires_grad;
                    const bool need_g = t.nodes_[static_cast<size_t>(gain)].requires_grad;
                    const bool need_b = t.nodes_[static_cast<size_t>(bias)].requires_grad;
                    for (int64_t r = 0; r < rows; ++r) {
                        const double* gr = g.data.data() + r * d;
                        const double* xh = xhat->data() + r * d;
                        if (need_g) {
                            double* gg = t.grad_buf(gain).data.data();
                            for (int64_t j = 0; j < d; ++j) gg[j] += gr[j] * xh[j];
                        }
                        if (need_b) {
                            double* gb = t.grad_buf(bias).data.data();
                            for (int64_t j = 0; j < d; ++j) gb[j] += gr[j];
                        }
                        if (need_x) {
                            // dxhat = g * gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv
                            double m1 = 0.0, m2 = 0.0;
                            for (int64_t j = 0; j < d; ++j) {
                                const double dxh = gr[j] * gv2.data[static_cast<size_t>(j)];
                                m1 += dxh;
                                m2 += dxh * xh[j];
                            }
                            m1 /= static_cast<double>(d);
                            m2 /= static_cast<double>(d);
                            const double inv = (*inv_std)[static_cast<size_t>(r)];
                            double* gx = t.grad_buf(x).data.data() + r * d;
                            for (int64_t j = 0; j < d; ++j) {
                                const double dxh = gr[j] * gv2.data[static_cast<size_t>(j)];
                                gx[j] += (dxh - m1 - xh[j] * m2) * inv;
                            }
                        }
                    }
                });
}

GradTape::Id GradTape::slice_rows(Id a, int64_t r0, int64_t r1) {
    const Tensor& av = value(a);
    const int64_t c = av.cols();
    if (r0 < 0 || r1 > av.rows() || r0 >= r1) throw DimensionError("slice_rows out of range");
    Tensor out = Tensor::zeros({r1 - r0, c});
    std::copy(av.data.begin() + r0 * c, av.data.begin() + r1 * c, out.data.begin());
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a}), [a, r0, c, self](GradTape& t) {
        if (!t.nodes_[static_cast<size_t>(a)].requires_grad) return;
        const Tensor& g = t.grad(self);
        Tensor& buf = t.grad_buf(a);
        for (size_t i = 0; i < g.data.size(); ++i)
            buf.data[static_cast<size_t>(r0 * c) + i] += g.data[i];
    });
}

GradTape::Id GradTape::slice_cols(Id a, int64_t c0, int64_t c1) {
    const Tensor& av = value(a);
    const int64_t r = av.rows(), c = av.cols();
    if (c0 < 0 || c1 > c || c0 >= c1) throw DimensionError("slice_cols out of range");
    const int64_t w = c1 - c0;
    Tensor out = Tensor::zeros({r, w});
    for (int64_t i = 0; i < r; ++i)
        std::copy(av.data.begin() + i * c + c0, av.data.begin() + i * c + c1,
                  out.data.begin() + i * w);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a}), [a, r, c, c0, w, self](GradTape& t) {
        if (!t.nodes_[static_cast<size_t>(a)].requires_grad) return;
        const Tensor& g = t.grad(self);
        Tensor& buf = t.grad_buf(a);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < w; ++j)
                buf.data[static_cast<size_t>(i * c + c0 + j)] += g.data[static_cast<size_t>(i * w + j)];
    });
}

GradTape::Id GradTape::concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows of nothing");
    const int64_t c = value(parts[0]).cols();
    int64_t total = 0;
    for (Id p : parts) {
        if (value(p).cols() != c) throw DimensionError("concat_rows column mismatch");
        total += value(p).rows();
    }
    Tensor out = Tensor::zeros({total, c});
    int64_t r = 0;
    for (Id p : parts) {
        const Tensor& pv = value(p);
        std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + r * c);
        r += pv.rows();
    }
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires(parts), [parts, c, self](GradTape& t) {
        const Tensor& g = t.grad(self);
        int64_t row = 0;
        for (Id p : parts) {
            const int64_t pr = t.value(p).rows();
            if (t.nodes_[static_cast<size_t>(p)].requires_grad) {
                Tensor& buf = t.grad_buf(p);
                for (int64_t i = 0; i < pr * c; ++i)
                    buf.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(row * c + i)];
            }
            row += pr;
        }
    });
}

GradTape::Id GradTape::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    const int64_t r = value(parts[0]).rows();
    int64_t total = 0;
    for (Id p : parts) {
        if (value(p).rows() != r) throw DimensionError("concat_cols row mismatch");
        total += value(p).cols();
    }
    Tensor out = Tensor::zeros({r, total});
    int64_t off = 0;
    for (Id p : parts) {
        const Tensor& pv = value(p);
        const int64_t pc = pv.cols();
        for (int64_t i = 0; i < r; ++i)
            std::copy(pv.data.begin() + i * pc, pv.data.begin() + (i + 1) * pc,
                      out.data.begin() + i * total + off);
        off += pc;
    }
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires(parts), [parts, r, total, self](GradTape& t) {
        const Tensor& g = t.grad(self);
        int64_t off2 = 0;
        for (Id p : parts) {
            const int64_t pc = t.value(p).cols();
            if (t.nodes_[static_cast<size_t>(p)].requires_grad) {
                Tensor& buf = t.grad_buf(p);
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < pc; ++j)
                        buf.data[static_cast<size_t>(i * pc + j)] +=
                            g.data[static_cast<size_t>(i * total + off2 + j)];
            }
            off2 += pc;
        }
    });
}

GradTape::Id GradTape::stack_mats(const std::vector<Id>& mats) {
    if (mats.empty()) throw DimensionError("stack_mats of nothing");
    const int64_t q = value(mats[0]).rows(), k = value(mats[0]).cols();
    Tensor out = Tensor::zeros({static_cast<int64_t>(mats.size()), q, k});
    for (size_t h = 0; h < mats.size(); ++h) {
        const Tensor& mv = value(mats[h]);
        if (mv.rows() != q || mv.cols() != k) throw DimensionError("stack_mats shape mismatch");
        std::copy(mv.data.begin(), mv.data.end(),
                  out.data.begin() + static_cast<int64_t>(h) * q * k);
    }
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires(mats), [mats, q, k, self](GradTape& t) {
        const Tensor& g = t.grad(self);
        for (size_t h = 0; h < mats.size(); ++h) {
            const Id p = mats[h];
            if (!t.nodes_[static_cast<size_t>(p)].requires_grad) continue;
            Tensor& buf = t.grad_buf(p);
            const int64_t base = static_cast<int64_t>(h) * q * k;
            for (int64_t i = 0; i < q * k; ++i)
                buf.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(base + i)];
        }
    });
}

GradTape::Id GradTape::unstack_mat(Id a, int64_t index) {
    const Tensor& av = value(a);
    if (av.shape.size() != 3) throw DimensionError("unstack_mat expects rank-3");
    const int64_t h = av.shape[0], q = av.shape[1], k = av.shape[2];
    if (index < 0 || index >= h) throw DimensionError("unstack_mat index out of range");
    Tensor out = Tensor::zeros({q, k});
    std::copy(av.data.begin() + index * q * k, av.data.begin() + (index + 1) * q * k,
              out.data.begin());
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a}), [a, index, q, k, self](GradTape& t) {
        if (!t.nodes_[static_cast<size_t>(a)].requires_grad) return;
        const Tensor& g = t.grad(self);
        Tensor& buf = t.grad_buf(a);
        const int64_t base = index * q * k;
        for (int64_t i = 0; i < q * k; ++i)
            buf.data[static_cast<size_t>(base + i)] += g.data[static_cast<size_t>(i)];
    });
}

GradTape::Id GradTape::reshape(Id a, std::vector<int64_t> new_shape) {
    Tensor out = value(a).reshaped(std::move(new_shape));
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), any_requires({a}), [a, self](GradTape& t) {
        if (!t.nodes_[static_cast<size_t>(a)].requires_grad) return;
        const Tensor& g = t.grad(self);
        Tensor& buf = t.grad_buf(a);
        for (size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += g.data[i];
    });
}

GradTape::Id GradTape::mse(Id pred, Id target) {
    const Tensor& pv = value(pred);
    const Tensor& tv = value(target);
    if (!pv.same_shape(tv)) throw DimensionError("mse shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < pv.data.size(); ++i) {
        const double d = pv.data[i] - tv.data[i];
        s += d * d;
    }
    const double n = static_cast<double>(pv.data.size());
    s /= n;
    const Id self = static_cast<Id>(nodes_.size());
    return push(Tensor::scalar(s), any_requires({pred, target}),
                [pred, target, n, self](GradTape& t) {
                    const double g = t.grad(self).data[0];
                    const Tensor& p = t.value(pred);
                    const Tensor& tg = t.value(target);
                    const double k2 = 2.0 * g / n;
                    if (t.nodes_[static_cast<size_t>(pred)].requires_grad) {
                        Tensor& buf = t.grad_buf(pred);
                        for (size_t i = 0; i < buf.data.size(); ++i)
                            buf.data[i] += k2 * (p.data[i] - tg.data[i]);
                    }
                    if (t.nodes_[static_cast<size_t>(target)].requires_grad) {
                        Tensor& buf = t.grad_buf(target);
                        for (size_t i = 0; i < buf.data.size(); ++i)
                            buf.data[i] -= k2 * (p.data[i] - tg.data[i]);
                    }
                });
}

GradTape::Id GradTape::mean_of(const std::vector<Id>& scalars) {
    if (scalars.empty()) throw DimensionError("mean_of nothing");
    double s = 0.0;
    for (Id id : scalars) {
        if (value(id).numel() != 1) throw DimensionError("mean_of expects scalar nodes");
        s += value(id).data[0];
    }
    const double n = static_cast<double>(scalars.size());
    s /= n;
    const Id self = static_cast<Id>(nodes_.size());
    return push(Tensor::scalar(s), any_requires(scalars), [scalars, n, self](GradTape& t) {
        const double g = t.grad(self).data[0] / n;
        for (Id id : scalars) {
            if (t.nodes_[static_cast<size_t>(id)].requires_grad) t.grad_buf(id).data[0] += g;
        }
    });
}

}  // namespace emaglab
