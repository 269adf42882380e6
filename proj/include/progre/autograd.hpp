// Copyright 2026 The progre Authors
// Tape-based reverse-mode automatic differentiation over Tensor.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "progre/tensor.hpp"

namespace progre {

// A named parameter with its accumulated gradient. Parameter storage lives
// outside the Graph so gradients can be accumulated across several graphs
// (one per utterance) before an optimizer step.
struct ParamSlot {
    std::string name;
    Tensor value;
    Tensor grad;

    explicit ParamSlot(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

    void zero_grad() { grad.fill(0.0); }
};

// Handle into a Graph's tape.
struct Var {
    std::size_t id = SIZE_MAX;
    bool valid() const { return id != SIZE_MAX; }
};

// Dynamic computation graph. Ops evaluate eagerly and record a backward
// closure; backward() runs the tape in reverse. Creation order is a valid
// topological order because ops only consume existing nodes.
class Graph {
public:
    // When grads are disabled the tape records values only; backward() is
    // then unavailable but forwards are cheaper (used for inference and for
    // finite-difference probes).
    explicit Graph(bool enable_grad = true) : enable_grad_(enable_grad) {}

    Var constant(Tensor v) { return push(std::move(v), false, nullptr); }

    Var scalar(double v) { return constant(Tensor::scalar(v)); }

    Var param(ParamSlot& slot) { return push(slot.value, enable_grad_, &slot); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise binary ----

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        Tensor y = val(a);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += val(b)[i];
        return unary_or_binary(std::move(y), a, b, [this](Node& n, Var a, Var b) {
            accumulate(a, n.grad);
            accumulate(b, n.grad);
        });
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        Tensor y = val(a);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] -= val(b)[i];
        return unary_or_binary(std::move(y), a, b, [this](Node& n, Var a, Var b) {
            accumulate(a, n.grad);
            Tensor gb = n.grad;
            for (double& x : gb.data()) x = -x;
            accumulate(b, gb);
        });
    }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        Tensor y = val(a);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= val(b)[i];
        return unary_or_binary(std::move(y), a, b, [this](Node& n, Var a, Var b) {
            Tensor ga = n.grad, gb = n.grad;
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] *= val(b)[i];
                gb[i] *= val(a)[i];
            }
            accumulate(a, ga);
            accumulate(b, gb);
        });
    }

    Var div(Var a, Var b) {
        check_same(a, b, "div");
        Tensor y = val(a);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] /= val(b)[i];
        return unary_or_binary(std::move(y), a, b, [this](Node& n, Var a, Var b) {
            Tensor ga = n.grad, gb = n.grad;
            for (std::size_t i = 0; i < ga.size(); ++i) {
                const double bi = val(b)[i];
                ga[i] /= bi;
                gb[i] *= -val(a)[i] / (bi * bi);
            }
            accumulate(a, ga);
            accumulate(b, gb);
        });
    }

    // ---- scalar constants ----

    Var add_scalar(Var a, double c) {
        Tensor y = val(a);
        for (double& x : y.data()) x += c;
        return unary(std::move(y), a, [this](Node& n, Var a) { accumulate(a, n.grad); });
    }

    Var mul_scalar(Var a, double c) {
        Tensor y = val(a);
        for (double& x : y.data()) x *= c;
        return unary(std::move(y), a, [this, c](Node& n, Var a) {
            Tensor g = n.grad;
            for (double& x : g.data()) x *= c;
            accumulate(a, g);
        });
    }

    Var neg(Var a) { return mul_scalar(a, -1.0); }

    // Multiply a tensor by a graph scalar (1-element Var).
    Var scale_by(Var m, Var s) {
        if (val(s).size() != 1) throw std::invalid_argument("scale_by: s must be scalar");
        const double sv = val(s)[0];
        Tensor y = val(m);
        for (double& x : y.data()) x *= sv;
        return unary_or_binary(std::move(y), m, s, [this, sv](Node& n, Var m, Var s) {
            Tensor gm = n.grad;
            for (double& x : gm.data()) x *= sv;
            accumulate(m, gm);
            double gs = 0.0;
            for (std::size_t i = 0; i < n.grad.size(); ++i) gs += n.grad[i] * val(m)[i];
            Tensor g({1}, {gs});
            accumulate(s, g);
        });
    }

    // ---- broadcasts ----

    // m: TxD, v: D. y[t,:] = m[t,:] + v
    Var add_rowvec(Var m, Var v) {
        const Tensor& mv = val(m);
        const Tensor& vv = val(v);
        check_rowvec(mv, vv, "add_rowvec");
        Tensor y = mv;
        const std::size_t T = mv.rows(), D = mv.cols();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) += vv[j];
        return unary_or_binary(std::move(y), m, v, [this](Node& n, Var m, Var v) {
            accumulate(m, n.grad);
            const std::size_t T = n.grad.rows(), D = n.grad.cols();
            Tensor gv = Tensor::zeros(val(v).shape());
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < D; ++j) gv[j] += n.grad.at(t, j);
            accumulate(v, gv);
        });
    }

    // y[t,j] = m[t,j] * v[j]
    Var mul_rowvec(Var m, Var v) {
        const Tensor& mv = val(m);
        const Tensor& vv = val(v);
        check_rowvec(mv, vv, "mul_rowvec");
        Tensor y = mv;
        const std::size_t T = mv.rows(), D = mv.cols();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) *= vv[j];
        return unary_or_binary(std::move(y), m, v, [this](Node& n, Var m, Var v) {
            const std::size_t T = n.grad.rows(), D = n.grad.cols();
            Tensor gm = n.grad;
            Tensor gv = Tensor::zeros(val(v).shape());
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < D; ++j) {
                    gm.at(t, j) *= val(v)[j];
                    gv[j] += n.grad.at(t, j) * val(m).at(t, j);
                }
            accumulate(m, gm);
            accumulate(v, gv);
        });
    }

    // y[t,j] = m[t,j] / v[j]
    Var div_rowvec(Var m, Var v) {
        const Tensor& mv = val(m);
        const Tensor& vv = val(v);
        check_rowvec(mv, vv, "div_rowvec");
        Tensor y = mv;
        const std::size_t T = mv.rows(), D = mv.cols();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) /= vv[j];
        return unary_or_binary(std::move(y), m, v, [this](Node& n, Var m, Var v) {
            const std::size_t T = n.grad.rows(), D = n.grad.cols();
            Tensor gm = n.grad;
            Tensor gv = Tensor::zeros(val(v).shape());
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < D; ++j) {
                    const double vj = val(v)[j];
                    gm.at(t, j) /= vj;
                    gv[j] -= n.grad.at(t, j) * val(m).at(t, j) / (vj * vj);
                }
            accumulate(m, gm);
            accumulate(v, gv);
        });
    }

    // m: TxD, c: T. y[t,:] = m[t,:] + c[t]
    Var add_colvec(Var m, Var c) {
        const Tensor& mv = val(m);
        const Tensor& cv = val(c);
        check_colvec(mv, cv, "add_colvec");
        Tensor y = mv;
        const std::size_t T = mv.rows(), D = mv.cols();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) += cv[t];
        return unary_or_binary(std::move(y), m, c, [this](Node& n, Var m, Var c) {
            accumulate(m, n.grad);
            const std::size_t T = n.grad.rows(), D = n.grad.cols();
            Tensor gc = Tensor::zeros(val(c).shape());
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < D; ++j) gc[t] += n.grad.at(t, j);
            accumulate(c, gc);
        });
    }

    // y[t,j] = m[t,j] * c[t]
    Var mul_colvec(Var m, Var c) {
        const Tensor& mv = val(m);
        const Tensor& cv = val(c);
        check_colvec(mv, cv, "mul_colvec");
        Tensor y = mv;
        const std::size_t T = mv.rows(), D = mv.cols();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) *= cv[t];
        return unary_or_binary(std::move(y), m, c, [this](Node& n, Var m, Var c) {
            const std::size_t T = n.grad.rows(), D = n.grad.cols();
            Tensor gm = n.grad;
            Tensor gc = Tensor::zeros(val(c).shape());
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < D; ++j) {
                    gm.at(t, j) *= val(c)[t];
                    gc[t] += n.grad.at(t, j) * val(m).at(t, j);
                }
            accumulate(m, gm);
            accumulate(c, gc);
        });
    }

    // y[t,j] = m[t,j] / c[t]
    Var div_colvec(Var m, Var c) {
        const Tensor& mv = val(m);
        const Tensor& cv = val(c);
        check_colvec(mv, cv, "div_colvec");
        Tensor y = mv;
        const std::size_t T = mv.rows(), D = mv.cols();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) /= cv[t];
        return unary_or_binary(std::move(y), m, c, [this](Node& n, Var m, Var c) {
            const std::size_t T = n.grad.rows(), D = n.grad.cols();
            Tensor gm = n.grad;
            Tensor gc = Tensor::zeros(val(c).shape());
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < D; ++j) {
                    const double ct = val(c)[t];
                    gm.at(t, j) /= ct;
                    gc[t] -= n.grad.at(t, j) * val(m).at(t, j) / (ct * ct);
                }
            accumulate(m, gm);
            accumulate(c, gc);
        });
    }

    // v: D -> y: TxD with every row equal to v.
    Var tile_rows(Var v, std::size_t T) {
        const Tensor& vv = val(v);
        const std::size_t D = vv.size();
        Tensor y({T, D});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) = vv[j];
        return unary(std::move(y), v, [this](Node& n, Var v) {
            const std::size_t T = n.grad.rows(), D = n.grad.cols();
            Tensor gv = Tensor::zeros(val(v).shape());
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < D; ++j) gv[j] += n.grad.at(t, j);
            accumulate(v, gv);
        });
    }

    Var reshape(Var a, std::vector<std::size_t> shape) {
        Tensor y(std::move(shape), val(a).data());
        return unary(std::move(y), a, [this](Node& n, Var a) {
            Tensor g(val(a).shape(), n.grad.data());
            accumulate(a, g);
        });
    }

    // ---- matrix products ----

    Var matmul(Var a, Var b) {
        const Tensor& av = val(a);
        const Tensor& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
            throw std::invalid_argument("matmul: bad shapes " + av.shape_str() + " x " + bv.shape_str());
        Tensor y = mm(av, bv);
        return unary_or_binary(std::move(y), a, b, [this](Node& n, Var a, Var b) {
            accumulate(a, mm_nt(n.grad, val(b)));   // g . b^T
            accumulate(b, mm_tn(val(a), n.grad));   // a^T . g
        });
    }

    // y = a . b^T,  a: MxK, b: NxK -> y: MxN
    Var matmul_nt(Var a, Var b) {
        const Tensor& av = val(a);
        const Tensor& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols())
            throw std::invalid_argument("matmul_nt: bad shapes");
        Tensor y = mm_nt(av, bv);
        return unary_or_binary(std::move(y), a, b, [this](Node& n, Var a, Var b) {
            accumulate(a, mm(n.grad, val(b)));      // g . b
            accumulate(b, mm_tn(n.grad, val(a)));   // g^T . a
        });
    }

    // ---- elementwise nonlinearities ----

    Var relu(Var a) {
        Tensor y = val(a);
        for (double& x : y.data()) x = x > 0.0 ? x : 0.0;
        return unary(std::move(y), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (val(a)[i] <= 0.0) g[i] = 0.0;
            accumulate(a, g);
        });
    }

    // Exact (erf-based) GELU.
    Var gelu(Var a) {
        Tensor y = val(a);
        for (double& x : y.data()) x = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
        return unary(std::move(y), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = val(a)[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
                g[i] *= cdf + x * pdf;
            }
            accumulate(a, g);
        });
    }

    Var sigmoid(Var a) {
        Tensor y = val(a);
        for (double& x : y.data()) x = 1.0 / (1.0 + std::exp(-x));
        Var out = unary(std::move(y), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = n.value[i];
                g[i] *= s * (1.0 - s);
            }
            accumulate(a, g);
        });
        return out;
    }

    Var tanh_(Var a) {
        Tensor y = val(a);
        for (double& x : y.data()) x = std::tanh(x);
        return unary(std::move(y), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - n.value[i] * n.value[i];
            accumulate(a, g);
        });
    }

    Var exp_(Var a) {
        Tensor y = val(a);
        for (double& x : y.data()) x = std::exp(x);
        return unary(std::move(y), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= n.value[i];
            accumulate(a, g);
        });
    }

    Var log_(Var a) {
        Tensor y = val(a);
        for (double& x : y.data()) x = std::log(x);
        return unary(std::move(y), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] /= val(a)[i];
            accumulate(a, g);
        });
    }

    Var sqrt_(Var a) {
        Tensor y = val(a);
        for (double& x : y.data()) x = std::sqrt(x);
        return unary(std::move(y), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 0.5 / n.value[i];
            accumulate(a, g);
        });
    }

    Var clamp_min(Var a, double c) {
        Tensor y = val(a);
        for (double& x : y.data()) x = x > c ? x : c;
        return unary(std::move(y), a, [this, c](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (val(a)[i] <= c) g[i] = 0.0;
            accumulate(a, g);
        });
    }

    // ---- reductions ----

    Var sum_all(Var a) {
        double s = 0.0;
        for (double x : val(a).data()) s += x;
        return unary(Tensor::scalar(s), a, [this](Node& n, Var a) {
            Tensor g = Tensor::full(val(a).shape(), n.grad[0]);
            accumulate(a, g);
        });
    }

    Var mean_all(Var a) {
        const double inv = 1.0 / static_cast<double>(val(a).size());
        double s = 0.0;
        for (double x : val(a).data()) s += x;
        return unary(Tensor::scalar(s * inv), a, [this, inv](Node& n, Var a) {
            Tensor g = Tensor::full(val(a).shape(), n.grad[0] * inv);
            accumulate(a, g);
        });
    }

    // TxD -> T: sum over each row.
    Var row_sums(Var m) { return row_reduce(m, false); }
    // TxD -> T: mean over each row.
    Var row_means(Var m) { return row_reduce(m, true); }
    // TxD -> D: sum over each column.
    Var col_sums(Var m) { return col_reduce(m, false); }
    // TxD -> D: mean over each column.
    Var col_means(Var m) { return col_reduce(m, true); }

    // ---- softmax family ----

    Var softmax_rows(Var m) {
        const Tensor& mv = val(m);
        Tensor y = mv;
        const std::size_t T = mv.rows(), D = mv.cols();
        for (std::size_t t = 0; t < T; ++t) {
            double mx = -HUGE_VAL;
            for (std::size_t j = 0; j < D; ++j) mx = std::max(mx, y.at(t, j));
            double s = 0.0;
            for (std::size_t j = 0; j < D; ++j) {
                y.at(t, j) = std::exp(y.at(t, j) - mx);
                s += y.at(t, j);
            }
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) /= s;
        }
        return unary(std::move(y), m, [this](Node& n, Var m) {
            const std::size_t T = n.grad.rows(), D = n.grad.cols();
            Tensor g = n.grad;
            for (std::size_t t = 0; t < T; ++t) {
                double dot = 0.0;
                for (std::size_t j = 0; j < D; ++j) dot += n.grad.at(t, j) * n.value.at(t, j);
                for (std::size_t j = 0; j < D; ++j)
                    g.at(t, j) = n.value.at(t, j) * (n.grad.at(t, j) - dot);
            }
            accumulate(m, g);
        });
    }

    // TxU -> T: log(sum_j exp(m[t,j])), numerically stable.
    Var logsumexp_rows(Var m) {
        const Tensor& mv = val(m);
        const std::size_t T = mv.rows(), U = mv.cols();
        Tensor y({T});
        for (std::size_t t = 0; t < T; ++t) {
            double mx = -HUGE_VAL;
            for (std::size_t j = 0; j < U; ++j) mx = std::max(mx, mv.at(t, j));
            double s = 0.0;
            for (std::size_t j = 0; j < U; ++j) s += std::exp(mv.at(t, j) - mx);
            y[t] = mx + std::log(s);
        }
        return unary(std::move(y), m, [this](Node& n, Var m) {
            const Tensor& mv = val(m);
            const std::size_t T = mv.rows(), U = mv.cols();
            Tensor g({T, U});
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < U; ++j)
                    g.at(t, j) = n.grad[t] * std::exp(mv.at(t, j) - n.value[t]);
            accumulate(m, g);
        });
    }

    // TxU, idx: T -> T with y[t] = m[t, idx[t]].
    Var gather_rows(Var m, std::vector<std::size_t> idx) {
        const Tensor& mv = val(m);
        if (idx.size() != mv.rows()) throw std::invalid_argument("gather_rows: index count");
        Tensor y({idx.size()});
        for (std::size_t t = 0; t < idx.size(); ++t) {
            if (idx[t] >= mv.cols()) throw std::invalid_argument("gather_rows: index out of range");
            y[t] = mv.at(t, idx[t]);
        }
        auto ix = std::make_shared<std::vector<std::size_t>>(std::move(idx));
        return unary(std::move(y), m, [this, ix](Node& n, Var m) {
            Tensor g = Tensor::zeros(val(m).shape());
            for (std::size_t t = 0; t < ix->size(); ++t) g.at(t, (*ix)[t]) = n.grad[t];
            accumulate(m, g);
        });
    }

    // ---- slicing / concatenation ----

    // y[r, :] = m[idx[r], :]. Indices may repeat; backward scatter-adds.
    Var select_rows(Var m, std::vector<std::size_t> idx) {
        const Tensor& mv = val(m);
        const std::size_t D = mv.cols();
        Tensor y({idx.size(), D});
        for (std::size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] >= mv.rows()) throw std::invalid_argument("select_rows: index out of range");
            for (std::size_t j = 0; j < D; ++j) y.at(r, j) = mv.at(idx[r], j);
        }
        auto ix = std::make_shared<std::vector<std::size_t>>(std::move(idx));
        return unary(std::move(y), m, [this, ix](Node& n, Var m) {
            Tensor g = Tensor::zeros(val(m).shape());
            const std::size_t D = g.cols();
            for (std::size_t r = 0; r < ix->size(); ++r)
                for (std::size_t j = 0; j < D; ++j) g.at((*ix)[r], j) += n.grad.at(r, j);
            accumulate(m, g);
        });
    }

    Var slice_rows(Var m, std::size_t start, std::size_t len) {
        const Tensor& mv = val(m);
        const std::size_t D = mv.cols();
        if (start + len > mv.rows()) throw std::invalid_argument("slice_rows: out of range");
        Tensor y({len, D});
        for (std::size_t t = 0; t < len; ++t)
            for (std::size_t j = 0; j < D; ++j) y.at(t, j) = mv.at(start + t, j);
        return unary(std::move(y), m, [this, start, len](Node& n, Var m) {
            Tensor g = Tensor::zeros(val(m).shape());
            const std::size_t D = g.cols();
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t j = 0; j < D; ++j) g.at(start + t, j) = n.grad.at(t, j);
            accumulate(m, g);
        });
    }

    Var slice_cols(Var m, std::size_t start, std::size_t len) {
        const Tensor& mv = val(m);
        if (start + len > mv.cols()) throw std::invalid_argument("slice_cols: out of range");
        const std::size_t T = mv.rows();
        Tensor y({T, len});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < len; ++j) y.at(t, j) = mv.at(t, start + j);
        return unary(std::move(y), m, [this, start, len](Node& n, Var m) {
            Tensor g = Tensor::zeros(val(m).shape());
            const std::size_t T = g.rows();
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < len; ++j) g.at(t, start + j) = n.grad.at(t, j);
            accumulate(m, g);
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
        const std::size_t D = val(parts[0]).cols();
        std::size_t T = 0;
        for (Var p : parts) {
            if (val(p).cols() != D) throw std::invalid_argument("concat_rows: column mismatch");
            T += val(p).rows();
        }
        Tensor y({T, D});
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor& pv = val(p);
            for (std::size_t t = 0; t < pv.rows(); ++t)
                for (std::size_t j = 0; j < D; ++j) y.at(off + t, j) = pv.at(t, j);
            off += pv.rows();
        }
        auto ps = std::make_shared<std::vector<Var>>(parts);
        return nary(std::move(y), parts, [this, ps](Node& n) {
            std::size_t off = 0;
            const std::size_t D = n.grad.cols();
            for (Var p : *ps) {
                const std::size_t rows = val(p).rows();
                Tensor g({rows, D});
                for (std::size_t t = 0; t < rows; ++t)
                    for (std::size_t j = 0; j < D; ++j) g.at(t, j) = n.grad.at(off + t, j);
                accumulate(p, g);
                off += rows;
            }
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
        const std::size_t T = val(parts[0]).rows();
        std::size_t D = 0;
        for (Var p : parts) {
            if (val(p).rows() != T) throw std::invalid_argument("concat_cols: row mismatch");
            D += val(p).cols();
        }
        Tensor y({T, D});
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor& pv = val(p);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < pv.cols(); ++j) y.at(t, off + j) = pv.at(t, j);
            off += pv.cols();
        }
        auto ps = std::make_shared<std::vector<Var>>(parts);
        return nary(std::move(y), parts, [this, ps](Node& n) {
            std::size_t off = 0;
            for (Var p : *ps) {
                const std::size_t T = n.grad.rows(), cols = val(p).cols();
                Tensor g({T, cols});
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t j = 0; j < cols; ++j) g.at(t, j) = n.grad.at(t, off + j);
                accumulate(p, g);
                off += cols;
            }
        });
    }

    // ---- 1-D convolution ----
    // x: T_in x C_in, w: {C_out, C_in, K}, b: C_out.
    // y[t, co] = b[co] + sum_{ci,k} x[t*stride + k - pad_left, ci] * w[co,ci,k]
    // (out-of-range taps read as zero).
    Var conv1d(Var x, Var w, Var b, std::size_t stride, std::size_t pad_left = 0,
               std::size_t pad_right = 0) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        const Tensor& bv = val(b);
        if (wv.rank() != 3) throw std::invalid_argument("conv1d: weight must be rank 3");
        const std::size_t c_out = wv.shape()[0], c_in = wv.shape()[1], K = wv.shape()[2];
        if (xv.cols() != c_in) throw std::invalid_argument("conv1d: channel mismatch");
        if (bv.size() != c_out) throw std::invalid_argument("conv1d: bias size");
        const std::size_t t_in = xv.rows();
        const std::size_t padded = t_in + pad_left + pad_right;
        if (padded < K) throw std::invalid_argument("conv1d: input shorter than kernel");
        const std::size_t t_out = (padded - K) / stride + 1;
        Tensor y({t_out, c_out});
        for (std::size_t t = 0; t < t_out; ++t) {
            for (std::size_t co = 0; co < c_out; ++co) {
                double acc = bv[co];
                for (std::size_t k = 0; k < K; ++k) {
                    const std::ptrdiff_t m =
                        static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad_left);
                    if (m < 0 || m >= static_cast<std::ptrdiff_t>(t_in)) continue;
                    for (std::size_t ci = 0; ci < c_in; ++ci)
                        acc += xv.at(static_cast<std::size_t>(m), ci) * wv.at3(co, ci, k);
                }
                y.at(t, co) = acc;
            }
        }
        std::vector<Var> parents = {x, w, b};
        return nary(std::move(y), parents,
                    [this, x, w, b, stride, pad_left](Node& n) {
            const Tensor& xv = val(x);
            const Tensor& wv = val(w);
            const std::size_t c_out = wv.shape()[0], c_in = wv.shape()[1], K = wv.shape()[2];
            const std::size_t t_in = xv.rows(), t_out = n.grad.rows();
            Tensor gx = Tensor::zeros(xv.shape());
            Tensor gw = Tensor::zeros(wv.shape());
            Tensor gb = Tensor::zeros(val(b).shape());
            for (std::size_t t = 0; t < t_out; ++t) {
                for (std::size_t co = 0; co < c_out; ++co) {
                    const double g = n.grad.at(t, co);
                    if (g == 0.0) continue;
                    gb[co] += g;
                    for (std::size_t k = 0; k < K; ++k) {
                        const std::ptrdiff_t m =
                            static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad_left);
                        if (m < 0 || m >= static_cast<std::ptrdiff_t>(t_in)) continue;
                        for (std::size_t ci = 0; ci < c_in; ++ci) {
                            gx.at(static_cast<std::size_t>(m), ci) += g * wv.at3(co, ci, k);
                            gw.at3(co, ci, k) += g * xv.at(static_cast<std::size_t>(m), ci);
                        }
                    }
                }
            }
            accumulate(x, gx);
            accumulate(w, gw);
            accumulate(b, gb);
        });
    }

    // Run the tape backwards from a scalar root. Parameter slots referenced
    // by param() receive accumulated gradients (+=, so callers batching over
    // several graphs must zero slot grads at step boundaries).
    void backward(Var root) {
        if (!enable_grad_) throw std::logic_error("backward: grads disabled on this graph");
        if (val(root).size() != 1) throw std::invalid_argument("backward: root must be scalar");
        for (Node& nd : nodes_)
            if (nd.needs_grad && nd.grad.empty()) nd.grad = Tensor::zeros(nd.value.shape());
        Node& r = nodes_[root.id];
        if (!r.needs_grad) return;  // loss does not depend on any parameter
        r.grad[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& nd = nodes_[i];
            if (nd.needs_grad && nd.back) nd.back(nd);
        }
        for (Node& nd : nodes_)
            if (nd.slot && nd.needs_grad)
                for (std::size_t i = 0; i < nd.grad.size(); ++i) nd.slot->grad[i] += nd.grad[i];
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Node&)> back;
        bool needs_grad = false;
        ParamSlot* slot = nullptr;
    };

    std::vector<Node> nodes_;
    bool enable_grad_;

    const Tensor& val(Var v) const { return nodes_[v.id].value; }

    Var push(Tensor v, bool needs_grad, ParamSlot* slot) {
        Node nd;
        nd.value = std::move(v);
        nd.needs_grad = needs_grad && enable_grad_;
        nd.slot = slot;
        nodes_.push_back(std::move(nd));
        return Var{nodes_.size() - 1};
    }

    void accumulate(Var v, const Tensor& g) {
        Node& nd = nodes_[v.id];
        if (!nd.needs_grad) return;
        for (std::size_t i = 0; i < g.size(); ++i) nd.grad[i] += g[i];
    }

    bool tracked(Var v) const { return nodes_[v.id].needs_grad; }

    template <typename F>
    Var unary(Tensor y, Var a, F&& back) {
        const bool ng = enable_grad_ && tracked(a);
        Var out = push(std::move(y), ng, nullptr);
        if (ng) nodes_[out.id].back = [f = std::forward<F>(back), a](Node& n) { f(n, a); };
        return out;
    }

    template <typename F>
    Var unary_or_binary(Tensor y, Var a, Var b, F&& back) {
        const bool ng = enable_grad_ && (tracked(a) || tracked(b));
        Var out = push(std::move(y), ng, nullptr);
        if (ng) nodes_[out.id].back = [f = std::forward<F>(back), a, b](Node& n) { f(n, a, b); };
        return out;
    }

    template <typename F>
    Var nary(Tensor y, const std::vector<Var>& parents, F&& back) {
        bool ng = false;
        for (Var p : parents) ng = ng || tracked(p);
        ng = ng && enable_grad_;
        Var out = push(std::move(y), ng, nullptr);
        if (ng) nodes_[out.id].back = std::forward<F>(back);
        return out;
    }

    Var row_reduce(Var m, bool mean) {
        const Tensor& mv = val(m);
        const std::size_t T = mv.rows(), D = mv.cols();
        const double inv = mean ? 1.0 / static_cast<double>(D) : 1.0;
        Tensor y({T});
        for (std::size_t t = 0; t < T; ++t) {
            double s = 0.0;
            for (std::size_t j = 0; j < D; ++j) s += mv.at(t, j);
            y[t] = s * inv;
        }
        return unary(std::move(y), m, [this, inv](Node& n, Var m) {
            const Tensor& mv = val(m);
            Tensor g({mv.rows(), mv.cols()});
            for (std::size_t t = 0; t < mv.rows(); ++t)
                for (std::size_t j = 0; j < mv.cols(); ++j) g.at(t, j) = n.grad[t] * inv;
            accumulate(m, g);
        });
    }

    Var col_reduce(Var m, bool mean) {
        const Tensor& mv = val(m);
        const std::size_t T = mv.rows(), D = mv.cols();
        const double inv = mean ? 1.0 / static_cast<double>(T) : 1.0;
        Tensor y({D});
        for (std::size_t j = 0; j < D; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < T; ++t) s += mv.at(t, j);
            y[j] = s * inv;
        }
        return unary(std::move(y), m, [this, inv](Node& n, Var m) {
            const Tensor& mv = val(m);
            Tensor g({mv.rows(), mv.cols()});
            for (std::size_t t = 0; t < mv.rows(); ++t)
                for (std::size_t j = 0; j < mv.cols(); ++j) g.at(t, j) = n.grad[j] * inv;
            accumulate(m, g);
        });
    }

    void check_same(Var a, Var b, const char* op) const {
        if (!val(a).same_shape(val(b)))
            throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                        val(a).shape_str() + " vs " + val(b).shape_str());
    }

    static void check_rowvec(const Tensor& m, const Tensor& v, const char* op) {
        if (m.rank() != 2 || v.size() != m.cols())
            throw std::invalid_argument(std::string(op) + ": shapes " + m.shape_str() + ", " +
                                        v.shape_str());
    }

    static void check_colvec(const Tensor& m, const Tensor& c, const char* op) {
        if (m.rank() != 2 || c.size() != m.rows())
            throw std::invalid_argument(std::string(op) + ": shapes " + m.shape_str() + ", " +
                                        c.shape_str());
    }

    // Plain matrix kernels (ikj order).
    static Tensor mm(const Tensor& a, const Tensor& b) {
        const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
        Tensor y({M, N});
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) {
                const double av = a.at(i, k);
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < N; ++j) y.at(i, j) += av * b.at(k, j);
            }
        return y;
    }

    static Tensor mm_nt(const Tensor& a, const Tensor& b) {
        const std::size_t M = a.rows(), K = a.cols(), N = b.rows();
        Tensor y({M, N});
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < K; ++k) acc += a.at(i, k) * b.at(j, k);
                y.at(i, j) = acc;
            }
        return y;
    }

    static Tensor mm_tn(const Tensor& a, const Tensor& b) {
        const std::size_t K = a.rows(), M = a.cols(), N = b.cols();
        Tensor y({M, N});
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t i = 0; i < M; ++i) {
                const double av = a.at(k, i);
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < N; ++j) y.at(i, j) += av * b.at(k, j);
            }
        return y;
    }
};

}  // namespace progre
