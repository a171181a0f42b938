#include "core/nn.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <unordered_set>

#include "core/resize.hpp"

namespace casr::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var leaf(TensorF value, bool requires_grad) {
    auto n = std::make_shared<Node>(std::move(value));
    n->requires_grad = requires_grad;
    return n;
}

Var constant(TensorF value) { return leaf(std::move(value), false); }

TensorF& ensure_grad(Node& n) {
    if (n.grad.v.empty())
        n.grad = TensorF(n.value.shape);
    return n.grad;
}

void zero_grad(const Var& v) {
    if (!v->grad.v.empty())
        std::fill(v->grad.v.begin(), v->grad.v.end(), 0.0f);
}

namespace {

// Result node wiring: parents/backprop recorded only when the tape is live.
Var make_result(TensorF value, std::vector<Var> parents, std::function<void()> (*make_bp)(Node*, const std::vector<Var>&),
                void* = nullptr) {
    auto n = std::make_shared<Node>(std::move(value));
    bool rg = false;
    if (g_grad_enabled)
        for (const auto& p : parents)
            rg = rg || p->requires_grad;
    if (rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = make_bp(n.get(), n->parents);
    }
    return n;
}

// convenience wrapper taking a lambda-built closure
Var wrap(TensorF value, std::vector<Var> parents, const std::function<std::function<void()>(Node*)>& build) {
    auto n = std::make_shared<Node>(std::move(value));
    bool rg = false;
    if (g_grad_enabled)
        for (const auto& p : parents)
            rg = rg || p->requires_grad;
    if (rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = build(n.get());
    }
    return n;
}

void sgemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void im2col(const float* x, int c, int h, int w, int kh, int kw, int pad, float* col) {
    // col is [c*kh*kw, h*w]
    const int hw = h * w;
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                float* dst = col + (static_cast<size_t>(ch) * kh * kw + i * kw + j) * hw;
                const int dy = i - pad, dx = j - pad;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) {
                        std::memset(dst + static_cast<size_t>(y) * w, 0, sizeof(float) * w);
                        continue;
                    }
                    const float* src = x + (static_cast<size_t>(ch) * h + sy) * w;
                    float* drow = dst + static_cast<size_t>(y) * w;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    if (x0 > 0)
                        std::memset(drow, 0, sizeof(float) * x0);
                    if (x1 > x0)
                        std::memcpy(drow + x0, src + x0 + dx, sizeof(float) * (x1 - x0));
                    if (x1 < w)
                        std::memset(drow + x1, 0, sizeof(float) * (w - x1));
                }
            }
        }
    }
}

void col2im_acc(const float* col, int c, int h, int w, int kh, int kw, int pad, float* x) {
    const int hw = h * w;
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const float* src = col + (static_cast<size_t>(ch) * kh * kw + i * kw + j) * hw;
                const int dy = i - pad, dx = j - pad;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h)
                        continue;
                    float* drow = x + (static_cast<size_t>(ch) * h + sy) * w;
                    const float* srow = src + static_cast<size_t>(y) * w;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int xx = x0; xx < x1; ++xx)
                        drow[xx + dx] += srow[xx];
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int pad) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    require(xs.size() == 4 && ws.size() == 4, ErrorCode::invalid_argument, "conv2d: expected 4-D tensors");
    require(xs[1] == ws[1], ErrorCode::invalid_argument, "conv2d: channel mismatch");
    require(b->value.shape == std::vector<int>{ws[0]}, ErrorCode::invalid_argument, "conv2d: bad bias shape");
    const int n = xs[0], c = xs[1], h = xs[2], wd = xs[3];
    const int f = ws[0], kh = ws[2], kw = ws[3];
    const int ck = c * kh * kw, hw = h * wd;

    TensorF out({n, f, h, wd});
    std::vector<float> col(static_cast<size_t>(ck) * hw);
    for (int i = 0; i < n; ++i) {
        im2col(&x->value.v[static_cast<size_t>(i) * c * hw], c, h, wd, kh, kw, pad, col.data());
        float* o = &out.v[static_cast<size_t>(i) * f * hw];
        sgemm(false, false, f, hw, ck, 1.0f, w->value.v.data(), ck, col.data(), hw, 0.0f, o, hw);
        for (int ff = 0; ff < f; ++ff) {
            const float bias = b->value.v[static_cast<size_t>(ff)];
            float* row = o + static_cast<size_t>(ff) * hw;
            for (int p = 0; p < hw; ++p)
                row[p] += bias;
        }
    }

    return wrap(std::move(out), {x, w, b}, [=](Node* self) {
        return [self, x, w, b, n, c, h, wd, f, kh, kw, pad, ck, hw]() {
            const TensorF& g = self->grad;
            std::vector<float> col(static_cast<size_t>(ck) * hw);
            std::vector<float> dcol(static_cast<size_t>(ck) * hw);
            TensorF* dw = w->requires_grad ? &ensure_grad(*w) : nullptr;
            TensorF* dx = x->requires_grad ? &ensure_grad(*x) : nullptr;
            TensorF* db = b->requires_grad ? &ensure_grad(*b) : nullptr;
            for (int i = 0; i < n; ++i) {
                const float* gn = &g.v[static_cast<size_t>(i) * f * hw];
                if (dw || dx)
                    im2col(&x->value.v[static_cast<size_t>(i) * c * hw], c, h, wd, kh, kw, pad, col.data());
                if (dw)
                    sgemm(false, true, f, ck, hw, 1.0f, gn, hw, col.data(), hw, 1.0f, dw->v.data(), ck);
                if (db)
                    for (int ff = 0; ff < f; ++ff) {
                        double acc = 0.0;
                        const float* row = gn + static_cast<size_t>(ff) * hw;
                        for (int p = 0; p < hw; ++p)
                            acc += row[p];
                        db->v[static_cast<size_t>(ff)] += static_cast<float>(acc);
                    }
                if (dx) {
                    sgemm(true, false, ck, hw, f, 1.0f, w->value.v.data(), ck, gn, hw, 0.0f, dcol.data(), hw);
                    col2im_acc(dcol.data(), c, h, wd, kh, kw, pad,
                               &dx->v[static_cast<size_t>(i) * c * hw]);
                }
            }
        };
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1], ErrorCode::invalid_argument,
            "linear: bad shapes");
    const int n = xs[0], fin = xs[1], fout = ws[0];
    TensorF out({n, fout});
    sgemm(false, true, n, fout, fin, 1.0f, x->value.v.data(), fin, w->value.v.data(), fin, 0.0f,
          out.v.data(), fout);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < fout; ++j)
            out.v[static_cast<size_t>(i) * fout + j] += b->value.v[static_cast<size_t>(j)];

    return wrap(std::move(out), {x, w, b}, [=](Node* self) {
        return [self, x, w, b, n, fin, fout]() {
            const TensorF& g = self->grad;
            if (w->requires_grad) {
                TensorF& dw = ensure_grad(*w);
                sgemm(true, false, fout, fin, n, 1.0f, g.v.data(), fout, x->value.v.data(), fin, 1.0f,
                      dw.v.data(), fin);
            }
            if (b->requires_grad) {
                TensorF& db = ensure_grad(*b);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < fout; ++j)
                        db.v[static_cast<size_t>(j)] += g.v[static_cast<size_t>(i) * fout + j];
            }
            if (x->requires_grad) {
                TensorF& dx = ensure_grad(*x);
                sgemm(false, false, n, fin, fout, 1.0f, g.v.data(), fout, w->value.v.data(), fin, 1.0f,
                      dx.v.data(), fin);
            }
        };
    });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, float eps) {
    const auto& xs = x->value.shape;
    require(xs.size() == 4, ErrorCode::invalid_argument, "group_norm: expected 4-D tensor");
    const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    require(groups >= 1 && c % groups == 0, ErrorCode::invalid_argument, "group_norm: bad group count");
    require(gamma->value.shape == std::vector<int>{c} && beta->value.shape == std::vector<int>{c},
            ErrorCode::invalid_argument, "group_norm: bad affine shapes");
    const int cg = c / groups;
    const size_t gsz = static_cast<size_t>(cg) * h * w;

    auto mu = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * groups);
    auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * groups);
    TensorF out(xs);
    for (int i = 0; i < n; ++i) {
        for (int g = 0; g < groups; ++g) {
            const float* src = &x->value.v[(static_cast<size_t>(i) * c + static_cast<size_t>(g) * cg) * h * w];
            double s = 0.0, ss = 0.0;
            for (size_t p = 0; p < gsz; ++p) {
                s += src[p];
                ss += static_cast<double>(src[p]) * src[p];
            }
            const double m = s / static_cast<double>(gsz);
            const double var = std::max(0.0, ss / static_cast<double>(gsz) - m * m);
            const double r = 1.0 / std::sqrt(var + eps);
            (*mu)[static_cast<size_t>(i) * groups + g] = m;
            (*rstd)[static_cast<size_t>(i) * groups + g] = r;
            float* dst = &out.v[(static_cast<size_t>(i) * c + static_cast<size_t>(g) * cg) * h * w];
            for (int cc = 0; cc < cg; ++cc) {
                const float ga = gamma->value.v[static_cast<size_t>(g) * cg + cc];
                const float be = beta->value.v[static_cast<size_t>(g) * cg + cc];
                const float* sp = src + static_cast<size_t>(cc) * h * w;
                float* dp = dst + static_cast<size_t>(cc) * h * w;
                for (int p = 0; p < h * w; ++p)
                    dp[p] = static_cast<float>((sp[p] - m) * r) * ga + be;
            }
        }
    }

    return wrap(std::move(out), {x, gamma, beta}, [=](Node* self) {
        return [self, x, gamma, beta, mu, rstd, n, c, h, w, groups, cg]() {
            const TensorF& g = self->grad;
            const int hw = h * w;
            const size_t gsz = static_cast<size_t>(cg) * hw;
            TensorF* dx = x->requires_grad ? &ensure_grad(*x) : nullptr;
            TensorF* dga = gamma->requires_grad ? &ensure_grad(*gamma) : nullptr;
            TensorF* dbe = beta->requires_grad ? &ensure_grad(*beta) : nullptr;
            for (int i = 0; i < n; ++i) {
                for (int gr = 0; gr < groups; ++gr) {
                    const double m = (*mu)[static_cast<size_t>(i) * groups + gr];
                    const double r = (*rstd)[static_cast<size_t>(i) * groups + gr];
                    const size_t base = (static_cast<size_t>(i) * c + static_cast<size_t>(gr) * cg) *
                                        static_cast<size_t>(hw);
                    const float* xv = &x->value.v[base];
                    const float* gv = &g.v[base];
                    // per-group reductions of dxhat and dxhat*xhat
                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (int cc = 0; cc < cg; ++cc) {
                        const double ga = gamma->value.v[static_cast<size_t>(gr) * cg + cc];
                        double dg_acc = 0.0, db_acc = 0.0;
                        const float* xp = xv + static_cast<size_t>(cc) * hw;
                        const float* gp = gv + static_cast<size_t>(cc) * hw;
                        for (int p = 0; p < hw; ++p) {
                            const double xh = (xp[p] - m) * r;
                            const double dxh = gp[p] * ga;
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh;
                            dg_acc += gp[p] * xh;
                            db_acc += gp[p];
                        }
                        if (dga)
                            dga->v[static_cast<size_t>(gr) * cg + cc] += static_cast<float>(dg_acc);
                        if (dbe)
                            dbe->v[static_cast<size_t>(gr) * cg + cc] += static_cast<float>(db_acc);
                    }
                    if (dx) {
                        const double inv = 1.0 / static_cast<double>(gsz);
                        float* dp = &dx->v[base];
                        for (int cc = 0; cc < cg; ++cc) {
                            const double ga = gamma->value.v[static_cast<size_t>(gr) * cg + cc];
                            const float* xp = xv + static_cast<size_t>(cc) * hw;
                            const float* gp = gv + static_cast<size_t>(cc) * hw;
                            float* dd = dp + static_cast<size_t>(cc) * hw;
                            for (int p = 0; p < hw; ++p) {
                                const double xh = (xp[p] - m) * r;
                                const double dxh = gp[p] * ga;
                                dd[p] += static_cast<float>(r * (dxh - inv * sum_dxh - xh * inv * sum_dxh_xh));
                            }
                        }
                    }
                }
            }
        };
    });
}

Var silu(const Var& x) {
    TensorF out(x->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i) {
        const float v = x->value.v[i];
        out.v[i] = v / (1.0f + std::exp(-v));
    }
    return wrap(std::move(out), {x}, [=](Node* self) {
        return [self, x]() {
            if (!x->requires_grad)
                return;
            TensorF& dx = ensure_grad(*x);
            for (size_t i = 0; i < dx.v.size(); ++i) {
                const float v = x->value.v[i];
                const float s = 1.0f / (1.0f + std::exp(-v));
                dx.v[i] += self->grad.v[i] * s * (1.0f + v * (1.0f - s));
            }
        };
    });
}

Var add(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), ErrorCode::invalid_argument, "add: shape mismatch");
    TensorF out(a->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = a->value.v[i] + b->value.v[i];
    return wrap(std::move(out), {a, b}, [=](Node* self) {
        return [self, a, b]() {
            for (const Var& p : {a, b}) {
                if (!p->requires_grad)
                    continue;
                TensorF& d = ensure_grad(*p);
                for (size_t i = 0; i < d.v.size(); ++i)
                    d.v[i] += self->grad.v[i];
            }
        };
    });
}

Var sub(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), ErrorCode::invalid_argument, "sub: shape mismatch");
    TensorF out(a->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = a->value.v[i] - b->value.v[i];
    return wrap(std::move(out), {a, b}, [=](Node* self) {
        return [self, a, b]() {
            if (a->requires_grad) {
                TensorF& d = ensure_grad(*a);
                for (size_t i = 0; i < d.v.size(); ++i)
                    d.v[i] += self->grad.v[i];
            }
            if (b->requires_grad) {
                TensorF& d = ensure_grad(*b);
                for (size_t i = 0; i < d.v.size(); ++i)
                    d.v[i] -= self->grad.v[i];
            }
        };
    });
}

Var scale(const Var& x, float c) {
    TensorF out(x->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = c * x->value.v[i];
    return wrap(std::move(out), {x}, [=](Node* self) {
        return [self, x, c]() {
            if (!x->requires_grad)
                return;
            TensorF& d = ensure_grad(*x);
            for (size_t i = 0; i < d.v.size(); ++i)
                d.v[i] += c * self->grad.v[i];
        };
    });
}

Var film(const Var& h, const Var& gamma, const Var& beta) {
    require(h->value.same_shape(gamma->value) && h->value.same_shape(beta->value),
            ErrorCode::invalid_argument, "film: shape mismatch");
    TensorF out(h->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = h->value.v[i] * (1.0f + gamma->value.v[i]) + beta->value.v[i];
    return wrap(std::move(out), {h, gamma, beta}, [=](Node* self) {
        return [self, h, gamma, beta]() {
            const TensorF& g = self->grad;
            if (h->requires_grad) {
                TensorF& d = ensure_grad(*h);
                for (size_t i = 0; i < d.v.size(); ++i)
                    d.v[i] += g.v[i] * (1.0f + gamma->value.v[i]);
            }
            if (gamma->requires_grad) {
                TensorF& d = ensure_grad(*gamma);
                for (size_t i = 0; i < d.v.size(); ++i)
                    d.v[i] += g.v[i] * h->value.v[i];
            }
            if (beta->requires_grad) {
                TensorF& d = ensure_grad(*beta);
                for (size_t i = 0; i < d.v.size(); ++i)
                    d.v[i] += g.v[i];
            }
        };
    });
}

Var add_rowvec(const Var& x, const Var& v) {
    const auto& xs = x->value.shape;
    require(xs.size() == 4 && v->value.shape == std::vector<int>{xs[0], xs[1]},
            ErrorCode::invalid_argument, "add_rowvec: bad shapes");
    const int n = xs[0], c = xs[1], hw = xs[2] * xs[3];
    TensorF out(xs);
    for (int i = 0; i < n; ++i)
        for (int cc = 0; cc < c; ++cc) {
            const float a = v->value.v[static_cast<size_t>(i) * c + cc];
            const size_t base = (static_cast<size_t>(i) * c + cc) * hw;
            for (int p = 0; p < hw; ++p)
                out.v[base + p] = x->value.v[base + p] + a;
        }
    return wrap(std::move(out), {x, v}, [=](Node* self) {
        return [self, x, v, n, c, hw]() {
            const TensorF& g = self->grad;
            if (x->requires_grad) {
                TensorF& d = ensure_grad(*x);
                for (size_t i = 0; i < d.v.size(); ++i)
                    d.v[i] += g.v[i];
            }
            if (v->requires_grad) {
                TensorF& d = ensure_grad(*v);
                for (int i = 0; i < n; ++i)
                    for (int cc = 0; cc < c; ++cc) {
                        double acc = 0.0;
                        const size_t base = (static_cast<size_t>(i) * c + cc) * static_cast<size_t>(hw);
                        for (int p = 0; p < hw; ++p)
                            acc += g.v[base + p];
                        d.v[static_cast<size_t>(i) * c + cc] += static_cast<float>(acc);
                    }
            }
        };
    });
}

Var concat_ch(const std::vector<Var>& xs) {
    require(!xs.empty(), ErrorCode::invalid_argument, "concat_ch: empty input");
    const auto& s0 = xs[0]->value.shape;
    require(s0.size() == 4, ErrorCode::invalid_argument, "concat_ch: expected 4-D tensors");
    int ctot = 0;
    for (const auto& x : xs) {
        const auto& s = x->value.shape;
        require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
                ErrorCode::invalid_argument, "concat_ch: shape mismatch");
        ctot += s[1];
    }
    const int n = s0[0], hw = s0[2] * s0[3];
    TensorF out({n, ctot, s0[2], s0[3]});
    for (int i = 0; i < n; ++i) {
        size_t off = 0;
        for (const auto& x : xs) {
            const int c = x->value.shape[1];
            std::memcpy(&out.v[(static_cast<size_t>(i) * ctot) * hw + off * hw],
                        &x->value.v[static_cast<size_t>(i) * c * hw], sizeof(float) * c * hw);
            off += static_cast<size_t>(c);
        }
    }
    return wrap(std::move(out), xs, [xs, n, ctot, hw](Node* self) {
        return [self, xs, n, ctot, hw]() {
            const TensorF& g = self->grad;
            size_t off = 0;
            for (const auto& x : xs) {
                const int c = x->value.shape[1];
                if (x->requires_grad) {
                    TensorF& d = ensure_grad(*x);
                    for (int i = 0; i < n; ++i) {
                        const float* src = &g.v[(static_cast<size_t>(i) * ctot + off) * hw];
                        float* dst = &d.v[static_cast<size_t>(i) * c * hw];
                        for (int p = 0; p < c * hw; ++p)
                            dst[p] += src[p];
                    }
                }
                off += static_cast<size_t>(c);
            }
        };
    });
}

Var slice_ch(const Var& x, int c0, int c1) {
    const auto& s = x->value.shape;
    require(s.size() == 4 && c0 >= 0 && c1 > c0 && c1 <= s[1], ErrorCode::invalid_argument,
            "slice_ch: bad channel range");
    const int n = s[0], c = s[1], hw = s[2] * s[3], cs = c1 - c0;
    TensorF out({n, cs, s[2], s[3]});
    for (int i = 0; i < n; ++i)
        std::memcpy(&out.v[static_cast<size_t>(i) * cs * hw],
                    &x->value.v[(static_cast<size_t>(i) * c + c0) * hw], sizeof(float) * cs * hw);
    return wrap(std::move(out), {x}, [=](Node* self) {
        return [self, x, n, c, hw, c0, cs]() {
            if (!x->requires_grad)
                return;
            TensorF& d = ensure_grad(*x);
            for (int i = 0; i < n; ++i) {
                const float* src = &self->grad.v[static_cast<size_t>(i) * cs * hw];
                float* dst = &d.v[(static_cast<size_t>(i) * c + c0) * hw];
                for (int p = 0; p < cs * hw; ++p)
                    dst[p] += src[p];
            }
        };
    });
}

Var avgpool2(const Var& x) {
    const auto& s = x->value.shape;
    require(s.size() == 4, ErrorCode::invalid_argument, "avgpool2: expected 4-D tensor");
    const int n = s[0], c = s[1], h = s[2], w = s[3];
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    TensorF out({n, c, oh, ow});
    for (int i = 0; i < n; ++i)
        for (int cc = 0; cc < c; ++cc)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    const int y1 = std::min(h, 2 * y + 2), x1 = std::min(w, 2 * xx + 2);
                    double acc = 0.0;
                    for (int yy = 2 * y; yy < y1; ++yy)
                        for (int px = 2 * xx; px < x1; ++px)
                            acc += x->value.at4(i, cc, yy, px);
                    out.at4(i, cc, y, xx) =
                        static_cast<float>(acc / ((y1 - 2 * y) * (x1 - 2 * xx)));
                }
    return wrap(std::move(out), {x}, [=](Node* self) {
        return [self, x, n, c, h, w, oh, ow]() {
            if (!x->requires_grad)
                return;
            TensorF& d = ensure_grad(*x);
            for (int i = 0; i < n; ++i)
                for (int cc = 0; cc < c; ++cc)
                    for (int y = 0; y < oh; ++y)
                        for (int xx = 0; xx < ow; ++xx) {
                            const int y1 = std::min(h, 2 * y + 2), x1 = std::min(w, 2 * xx + 2);
                            const float g = self->grad.at4(i, cc, y, xx) /
                                            static_cast<float>((y1 - 2 * y) * (x1 - 2 * xx));
                            for (int yy = 2 * y; yy < y1; ++yy)
                                for (int px = 2 * xx; px < x1; ++px)
                                    d.at4(i, cc, yy, px) += g;
                        }
        };
    });
}

Var upsample_to(const Var& x, int out_h, int out_w) {
    const auto& s = x->value.shape;
    require(s.size() == 4, ErrorCode::invalid_argument, "upsample_to: expected 4-D tensor");
    require(out_h >= s[2] && out_w >= s[3], ErrorCode::invalid_argument, "upsample_to: target smaller than input");
    const int n = s[0], c = s[1], h = s[2], w = s[3];
    TensorF out({n, c, out_h, out_w});
    for (int i = 0; i < n; ++i)
        for (int cc = 0; cc < c; ++cc)
            for (int y = 0; y < out_h; ++y) {
                const int sy = std::min(h - 1, y * h / out_h);
                for (int xx = 0; xx < out_w; ++xx)
                    out.at4(i, cc, y, xx) = x->value.at4(i, cc, sy, std::min(w - 1, xx * w / out_w));
            }
    return wrap(std::move(out), {x}, [=](Node* self) {
        return [self, x, n, c, h, w, out_h, out_w]() {
            if (!x->requires_grad)
                return;
            TensorF& d = ensure_grad(*x);
            for (int i = 0; i < n; ++i)
                for (int cc = 0; cc < c; ++cc)
                    for (int y = 0; y < out_h; ++y) {
                        const int sy = std::min(h - 1, y * h / out_h);
                        for (int xx = 0; xx < out_w; ++xx)
                            d.at4(i, cc, sy, std::min(w - 1, xx * w / out_w)) += self->grad.at4(i, cc, y, xx);
                    }
        };
    });
}

Var resize_bicubic_op(const Var& x, int out_h, int out_w) {
    const auto& s = x->value.shape;
    require(s.size() == 4, ErrorCode::invalid_argument, "resize_bicubic_op: expected 4-D tensor");
    const int n = s[0], c = s[1], h = s[2], w = s[3];
    TensorF out({n, c, out_h, out_w});
    for (int i = 0; i < n; ++i) {
        TensorF plane({c, h, w});
        std::memcpy(plane.v.data(), &x->value.v[static_cast<size_t>(i) * c * h * w],
                    sizeof(float) * plane.v.size());
        TensorF r = resize_bicubic(plane, out_h, out_w);
        std::memcpy(&out.v[static_cast<size_t>(i) * c * out_h * out_w], r.v.data(),
                    sizeof(float) * r.v.size());
    }
    return wrap(std::move(out), {x}, [=](Node* self) {
        return [self, x, n, c, h, w, out_h, out_w]() {
            if (!x->requires_grad)
                return;
            TensorF& d = ensure_grad(*x);
            for (int i = 0; i < n; ++i) {
                TensorF plane({c, out_h, out_w});
                std::memcpy(plane.v.data(), &self->grad.v[static_cast<size_t>(i) * c * out_h * out_w],
                            sizeof(float) * plane.v.size());
                TensorF r = resize_bicubic_adjoint(plane, h, w);
                float* dst = &d.v[static_cast<size_t>(i) * c * h * w];
                for (size_t p = 0; p < r.v.size(); ++p)
                    dst[p] += r.v[p];
            }
        };
    });
}

Var mean_abs(const Var& x) {
    double acc = 0.0;
    for (float v : x->value.v)
        acc += std::fabs(v);
    TensorF out({1});
    out.v[0] = static_cast<float>(acc / static_cast<double>(x->value.numel()));
    return wrap(std::move(out), {x}, [=](Node* self) {
        return [self, x]() {
            if (!x->requires_grad)
                return;
            TensorF& d = ensure_grad(*x);
            const float g = self->grad.v[0] / static_cast<float>(x->value.numel());
            for (size_t i = 0; i < d.v.size(); ++i) {
                const float v = x->value.v[i];
                d.v[i] += v > 0.0f ? g : (v < 0.0f ? -g : 0.0f);
            }
        };
    });
}

void backward(const Var& root) {
    require(root->value.numel() == 1, ErrorCode::invalid_argument, "backward: root must be scalar");
    require(root->requires_grad, ErrorCode::invalid_argument, "backward: root does not require grad");

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    ensure_grad(*root).v[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop && !node->grad.v.empty())
            node->backprop();
    }
}

}  // namespace casr::nn
