#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "polyper/tensor.hpp"

namespace polyper {

/// Reverse-mode tape over Tensor<T>. A forward pass records one node per
/// operation; backward() replays the tape in reverse and accumulates
/// gradients into every node that was created with needs_grad set.
///
/// The tape is rebuilt per forward pass. Parameters enter as `param` leaves;
/// their gradients are read back after backward() and applied by the
/// optimizer outside the tape.
template <typename T>
class Tape {
public:
    using Id = int;

    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        std::function<void(Tape&)> back;
        bool needs_grad = false;
    };

    Id value(Tensor<T> v) { return push(std::move(v), false, nullptr); }

    Id param(Tensor<T> v) { return push(std::move(v), true, nullptr); }

    const Tensor<T>& val(Id id) const { return nodes_[id].val; }
    Tensor<T>& grad(Id id) { return nodes_[id].grad; }
    std::size_t num_nodes() const { return nodes_.size(); }

    // ---- convolution ----------------------------------------------------

    /// x {Cin,H,W}, w {Cout,Cin,kh,kw}, b {Cout} -> {Cout,Ho,Wo}, zero padding.
    Id conv2d(Id x, Id w, Id b, int stride, int pad) {
        const Tensor<T>& X = nodes_[x].val;
        const Tensor<T>& W = nodes_[w].val;
        const int Cin = X.shape[0], H = X.shape[1], Wd = X.shape[2];
        const int Cout = W.shape[0], kh = W.shape[2], kw = W.shape[3];
        if (W.shape[1] != Cin)
            throw SizingError("conv2d: weight expects " + std::to_string(W.shape[1]) +
                              " input channels, got " + std::to_string(Cin));
        const int Ho = (H + 2 * pad - kh) / stride + 1;
        const int Wo = (Wd + 2 * pad - kw) / stride + 1;
        Tensor<T> out({Cout, Ho, Wo});
        const T* xp = X.data();
        const T* wp = W.data();
        const T* bp = nodes_[b].val.data();
        T* op = out.data();
        for (int o = 0; o < Cout; ++o) {
            for (int y = 0; y < Ho; ++y) {
                for (int xo = 0; xo < Wo; ++xo) {
                    T acc = bp[o];
                    const int iy0 = y * stride - pad;
                    const int ix0 = xo * stride - pad;
                    for (int i = 0; i < Cin; ++i) {
                        const T* xrow = xp + (static_cast<std::int64_t>(i) * H) * Wd;
                        const T* wrow = wp + ((static_cast<std::int64_t>(o) * Cin + i) * kh) * kw;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= Wd) continue;
                                acc += wrow[ky * kw + kx] * xrow[iy * Wd + ix];
                            }
                        }
                    }
                    op[(static_cast<std::int64_t>(o) * Ho + y) * Wo + xo] = acc;
                }
            }
        }
        return push2(std::move(out), any_grad({x, w, b}), [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            const Tensor<T>& Xv = t.nodes_[x].val;
            const Tensor<T>& Wv = t.nodes_[w].val;
            Tensor<T>* gx = t.nodes_[x].needs_grad ? &t.nodes_[x].grad : nullptr;
            Tensor<T>* gw = t.nodes_[w].needs_grad ? &t.nodes_[w].grad : nullptr;
            Tensor<T>* gb = t.nodes_[b].needs_grad ? &t.nodes_[b].grad : nullptr;
            const int Ho2 = G.shape[1], Wo2 = G.shape[2];
            for (int o = 0; o < Cout; ++o) {
                for (int y = 0; y < Ho2; ++y) {
                    for (int xo = 0; xo < Wo2; ++xo) {
                        const T g = G.at(o, y, xo);
                        if (gb) gb->v[o] += g;
                        const int iy0 = y * stride - pad;
                        const int ix0 = xo * stride - pad;
                        for (int i = 0; i < Cin; ++i) {
                            for (int ky = 0; ky < kh; ++ky) {
                                const int iy = iy0 + ky;
                                if (iy < 0 || iy >= H) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ix = ix0 + kx;
                                    if (ix < 0 || ix >= Wd) continue;
                                    const std::int64_t wi = ((static_cast<std::int64_t>(o) * Cin + i) * kh + ky) * kw + kx;
                                    if (gw) gw->v[wi] += g * Xv.at(i, iy, ix);
                                    if (gx) gx->at(i, iy, ix) += g * Wv.v[wi];
                                }
                            }
                        }
                    }
                }
            }
        });
    }

    /// Pointwise convolution on a map: x {Cin,H,W}, w {Cout,Cin}, b {Cout}.
    Id conv1x1(Id x, Id w, Id b) {
        const Tensor<T>& X = nodes_[x].val;
        const Tensor<T>& W = nodes_[w].val;
        const int Cin = X.shape[0];
        const std::int64_t P = static_cast<std::int64_t>(X.shape[1]) * X.shape[2];
        const int Cout = W.shape[0];
        if (W.shape[1] != Cin)
            throw SizingError("conv1x1: weight expects " + std::to_string(W.shape[1]) +
                              " input channels, got " + std::to_string(Cin));
        Tensor<T> out({Cout, X.shape[1], X.shape[2]});
        const T* xp = X.data();
        const T* wp = W.data();
        const T* bp = nodes_[b].val.data();
        for (int o = 0; o < Cout; ++o) {
            T* orow = out.data() + o * P;
            for (std::int64_t p = 0; p < P; ++p) orow[p] = bp[o];
            for (int i = 0; i < Cin; ++i) {
                const T wv = wp[o * Cin + i];
                const T* xrow = xp + i * P;
                for (std::int64_t p = 0; p < P; ++p) orow[p] += wv * xrow[p];
            }
        }
        return push2(std::move(out), any_grad({x, w, b}), [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            const Tensor<T>& Xv = t.nodes_[x].val;
            const Tensor<T>& Wv = t.nodes_[w].val;
            Tensor<T>* gx = t.nodes_[x].needs_grad ? &t.nodes_[x].grad : nullptr;
            Tensor<T>* gw = t.nodes_[w].needs_grad ? &t.nodes_[w].grad : nullptr;
            Tensor<T>* gb = t.nodes_[b].needs_grad ? &t.nodes_[b].grad : nullptr;
            for (int o = 0; o < Cout; ++o) {
                const T* grow = G.data() + o * P;
                if (gb) {
                    T acc = 0;
                    for (std::int64_t p = 0; p < P; ++p) acc += grow[p];
                    gb->v[o] += acc;
                }
                for (int i = 0; i < Cin; ++i) {
                    const T* xrow = Xv.data() + i * P;
                    if (gw) {
                        T acc = 0;
                        for (std::int64_t p = 0; p < P; ++p) acc += grow[p] * xrow[p];
                        gw->v[o * Cin + i] += acc;
                    }
                    if (gx) {
                        const T wv = Wv.v[o * Cin + i];
                        T* gxrow = gx->data() + i * P;
                        for (std::int64_t p = 0; p < P; ++p) gxrow[p] += wv * grow[p];
                    }
                }
            }
        });
    }

    /// Row-wise linear layer: x {N,Cin}, w {Cout,Cin}, b {Cout} -> {N,Cout}.
    Id linear(Id x, Id w, Id b) {
        const Tensor<T>& X = nodes_[x].val;
        const Tensor<T>& W = nodes_[w].val;
        const int N = X.shape[0], Cin = X.shape[1], Cout = W.shape[0];
        if (W.shape[1] != Cin)
            throw SizingError("linear: weight expects " + std::to_string(W.shape[1]) +
                              " input features, got " + std::to_string(Cin));
        Tensor<T> out({N, Cout});
        const T* bp = nodes_[b].val.data();
        for (int n = 0; n < N; ++n) {
            const T* xrow = X.data() + static_cast<std::int64_t>(n) * Cin;
            T* orow = out.data() + static_cast<std::int64_t>(n) * Cout;
            for (int o = 0; o < Cout; ++o) {
                const T* wrow = W.data() + static_cast<std::int64_t>(o) * Cin;
                T acc = bp[o];
                for (int i = 0; i < Cin; ++i) acc += xrow[i] * wrow[i];
                orow[o] = acc;
            }
        }
        return push2(std::move(out), any_grad({x, w, b}), [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            const Tensor<T>& Xv = t.nodes_[x].val;
            const Tensor<T>& Wv = t.nodes_[w].val;
            Tensor<T>* gx = t.nodes_[x].needs_grad ? &t.nodes_[x].grad : nullptr;
            Tensor<T>* gw = t.nodes_[w].needs_grad ? &t.nodes_[w].grad : nullptr;
            Tensor<T>* gb = t.nodes_[b].needs_grad ? &t.nodes_[b].grad : nullptr;
            for (int n = 0; n < N; ++n) {
                const T* grow = G.data() + static_cast<std::int64_t>(n) * Cout;
                const T* xrow = Xv.data() + static_cast<std::int64_t>(n) * Cin;
                for (int o = 0; o < Cout; ++o) {
                    const T g = grow[o];
                    if (gb) gb->v[o] += g;
                    const T* wrow = Wv.data() + static_cast<std::int64_t>(o) * Cin;
                    if (gw) {
                        T* gwrow = gw->data() + static_cast<std::int64_t>(o) * Cin;
                        for (int i = 0; i < Cin; ++i) gwrow[i] += g * xrow[i];
                    }
                    if (gx) {
                        T* gxrow = gx->data() + static_cast<std::int64_t>(n) * Cin;
                        for (int i = 0; i < Cin; ++i) gxrow[i] += g * wrow[i];
                    }
                }
            }
        });
    }

    // ---- elementwise -----------------------------------------------------

    Id silu(Id x) {
        const Tensor<T>& X = nodes_[x].val;
        Tensor<T> out(X.shape);
        for (std::int64_t i = 0; i < X.size(); ++i) {
            const T s = sigmoid_scalar(X.v[i]);
            out.v[i] = X.v[i] * s;
        }
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            const Tensor<T>& Xv = t.nodes_[x].val;
            Tensor<T>& gx = t.nodes_[x].grad;
            for (std::int64_t i = 0; i < Xv.size(); ++i) {
                const T s = sigmoid_scalar(Xv.v[i]);
                gx.v[i] += G.v[i] * (s + Xv.v[i] * s * (T(1) - s));
            }
        });
    }

    Id sigmoid(Id x) {
        const Tensor<T>& X = nodes_[x].val;
        Tensor<T> out(X.shape);
        for (std::int64_t i = 0; i < X.size(); ++i) out.v[i] = sigmoid_scalar(X.v[i]);
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            const Tensor<T>& Y = t.nodes_[self].val;
            Tensor<T>& gx = t.nodes_[x].grad;
            for (std::int64_t i = 0; i < Y.size(); ++i) gx.v[i] += G.v[i] * Y.v[i] * (T(1) - Y.v[i]);
        });
    }

    Id add(Id a, Id b) {
        const Tensor<T>& A = nodes_[a].val;
        const Tensor<T>& B = nodes_[b].val;
        if (!A.same_shape(B)) throw SizingError("add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
        Tensor<T> out(A.shape);
        for (std::int64_t i = 0; i < A.size(); ++i) out.v[i] = A.v[i] + B.v[i];
        return push2(std::move(out), any_grad({a, b}), [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            if (t.nodes_[a].needs_grad)
                for (std::int64_t i = 0; i < G.size(); ++i) t.nodes_[a].grad.v[i] += G.v[i];
            if (t.nodes_[b].needs_grad)
                for (std::int64_t i = 0; i < G.size(); ++i) t.nodes_[b].grad.v[i] += G.v[i];
        });
    }

    Id scale(Id a, T k) {
        const Tensor<T>& A = nodes_[a].val;
        Tensor<T> out(A.shape);
        for (std::int64_t i = 0; i < A.size(); ++i) out.v[i] = A.v[i] * k;
        return push2(std::move(out), nodes_[a].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            Tensor<T>& ga = t.nodes_[a].grad;
            for (std::int64_t i = 0; i < G.size(); ++i) ga.v[i] += G.v[i] * k;
        });
    }

    /// Multiply a map {C,H,W} by a per-pixel constant mask {H,W}, broadcast
    /// over channels. The mask carries no gradient.
    Id mul_mask(Id x, Tensor<T> mask) {
        const Tensor<T>& X = nodes_[x].val;
        const std::int64_t P = static_cast<std::int64_t>(X.shape[1]) * X.shape[2];
        if (mask.size() != P) throw SizingError("mul_mask: mask size mismatch");
        Tensor<T> out(X.shape);
        for (int c = 0; c < X.shape[0]; ++c)
            for (std::int64_t p = 0; p < P; ++p) out.v[c * P + p] = X.v[c * P + p] * mask.v[p];
        auto m = std::make_shared<Tensor<T>>(std::move(mask));
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            Tensor<T>& gx = t.nodes_[x].grad;
            for (int c = 0; c < G.shape[0]; ++c)
                for (std::int64_t p = 0; p < P; ++p) gx.v[c * P + p] += G.v[c * P + p] * m->v[p];
        });
    }

    // ---- shape ops --------------------------------------------------------

    Id concat_channels(const std::vector<Id>& xs) {
        int C = 0;
        const Tensor<T>& first = nodes_[xs[0]].val;
        for (Id id : xs) {
            const Tensor<T>& Xi = nodes_[id].val;
            if (Xi.shape[1] != first.shape[1] || Xi.shape[2] != first.shape[2])
                throw SizingError("concat_channels: spatial mismatch");
            C += Xi.shape[0];
        }
        Tensor<T> out({C, first.shape[1], first.shape[2]});
        const std::int64_t P = static_cast<std::int64_t>(first.shape[1]) * first.shape[2];
        std::int64_t off = 0;
        bool ng = false;
        for (Id id : xs) {
            const Tensor<T>& Xi = nodes_[id].val;
            std::copy(Xi.v.begin(), Xi.v.end(), out.v.begin() + off);
            off += Xi.size();
            ng = ng || nodes_[id].needs_grad;
        }
        std::vector<Id> ins = xs;
        return push2(std::move(out), ng, [this, ins, P](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            std::int64_t o = 0;
            for (Id id : ins) {
                Tensor<T>& gi = t.nodes_[id].grad;
                const std::int64_t n = t.nodes_[id].val.size();
                if (t.nodes_[id].needs_grad)
                    for (std::int64_t i = 0; i < n; ++i) gi.v[i] += G.v[o + i];
                o += n;
            }
        });
    }

    Id reshape(Id x, std::vector<int> shape) {
        const Tensor<T>& X = nodes_[x].val;
        if (Tensor<T>::count(shape) != X.size()) throw SizingError("reshape: element count mismatch");
        Tensor<T> out(shape, X.v);
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            Tensor<T>& gx = t.nodes_[x].grad;
            for (std::int64_t i = 0; i < G.size(); ++i) gx.v[i] += G.v[i];
        });
    }

    Id slice_cols(Id x, int c0, int c1) {
        const Tensor<T>& X = nodes_[x].val;
        const int N = X.shape[0], C = X.shape[1], W = c1 - c0;
        Tensor<T> out({N, W});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < W; ++c) out.at(n, c) = X.at(n, c0 + c);
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            Tensor<T>& gx = t.nodes_[x].grad;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < W; ++c) gx.v[static_cast<std::int64_t>(n) * C + c0 + c] += G.at(n, c);
        });
    }

    Id concat_cols(const std::vector<Id>& xs) {
        const int N = nodes_[xs[0]].val.shape[0];
        int C = 0;
        bool ng = false;
        for (Id id : xs) {
            if (nodes_[id].val.shape[0] != N) throw SizingError("concat_cols: row mismatch");
            C += nodes_[id].val.shape[1];
            ng = ng || nodes_[id].needs_grad;
        }
        Tensor<T> out({N, C});
        int off = 0;
        for (Id id : xs) {
            const Tensor<T>& Xi = nodes_[id].val;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < Xi.shape[1]; ++c) out.at(n, off + c) = Xi.at(n, c);
            off += Xi.shape[1];
        }
        std::vector<Id> ins = xs;
        return push2(std::move(out), ng, [this, ins, N, C](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            int o = 0;
            for (Id id : ins) {
                const int w = t.nodes_[id].val.shape[1];
                if (t.nodes_[id].needs_grad) {
                    Tensor<T>& gi = t.nodes_[id].grad;
                    for (int n = 0; n < N; ++n)
                        for (int c = 0; c < w; ++c) gi.at(n, c) += G.v[static_cast<std::int64_t>(n) * C + o + c];
                }
                o += w;
            }
        });
    }

    Id slice_rows(Id x, int r0, int r1) {
        const Tensor<T>& X = nodes_[x].val;
        const int C = X.shape[1], N = r1 - r0;
        Tensor<T> out({N, C});
        std::copy(X.v.begin() + static_cast<std::int64_t>(r0) * C,
                  X.v.begin() + static_cast<std::int64_t>(r1) * C, out.v.begin());
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            Tensor<T>& gx = t.nodes_[x].grad;
            for (std::int64_t i = 0; i < G.size(); ++i) gx.v[static_cast<std::int64_t>(r0) * C + i] += G.v[i];
        });
    }

    Id concat_rows(const std::vector<Id>& xs) {
        const int C = nodes_[xs[0]].val.shape[1];
        int N = 0;
        bool ng = false;
        for (Id id : xs) {
            if (nodes_[id].val.shape[1] != C) throw SizingError("concat_rows: col mismatch");
            N += nodes_[id].val.shape[0];
            ng = ng || nodes_[id].needs_grad;
        }
        Tensor<T> out({N, C});
        std::int64_t off = 0;
        for (Id id : xs) {
            const Tensor<T>& Xi = nodes_[id].val;
            std::copy(Xi.v.begin(), Xi.v.end(), out.v.begin() + off);
            off += Xi.size();
        }
        std::vector<Id> ins = xs;
        return push2(std::move(out), ng, [this, ins](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            std::int64_t o = 0;
            for (Id id : ins) {
                const std::int64_t n = t.nodes_[id].val.size();
                if (t.nodes_[id].needs_grad) {
                    Tensor<T>& gi = t.nodes_[id].grad;
                    for (std::int64_t i = 0; i < n; ++i) gi.v[i] += G.v[o + i];
                }
                o += n;
            }
        });
    }

    // ---- resampling -------------------------------------------------------

    /// Bilinear resize of {C,H,W} to {C,Ho,Wo}, align-corners convention:
    /// source coordinate = out * (in-1)/(out-1), endpoints map to endpoints.
    Id upsample_bilinear(Id x, int Ho, int Wo) {
        const Tensor<T>& X = nodes_[x].val;
        const int C = X.shape[0], H = X.shape[1], W = X.shape[2];
        Tensor<T> out({C, Ho, Wo});
        const double sy = Ho > 1 ? static_cast<double>(H - 1) / (Ho - 1) : 0.0;
        const double sx = Wo > 1 ? static_cast<double>(W - 1) / (Wo - 1) : 0.0;
        for (int y = 0; y < Ho; ++y) {
            const double fy = y * sy;
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, H - 1);
            const T wy = static_cast<T>(fy - y0);
            for (int xo = 0; xo < Wo; ++xo) {
                const double fx = xo * sx;
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, W - 1);
                const T wx = static_cast<T>(fx - x0);
                for (int c = 0; c < C; ++c) {
                    const T v00 = X.at(c, y0, x0), v01 = X.at(c, y0, x1);
                    const T v10 = X.at(c, y1, x0), v11 = X.at(c, y1, x1);
                    out.at(c, y, xo) = (T(1) - wy) * ((T(1) - wx) * v00 + wx * v01) +
                                       wy * ((T(1) - wx) * v10 + wx * v11);
                }
            }
        }
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            Tensor<T>& gx = t.nodes_[x].grad;
            for (int y = 0; y < Ho; ++y) {
                const double fy = y * sy;
                const int y0 = static_cast<int>(fy);
                const int y1 = std::min(y0 + 1, H - 1);
                const T wy = static_cast<T>(fy - y0);
                for (int xo = 0; xo < Wo; ++xo) {
                    const double fx = xo * sx;
                    const int x0 = static_cast<int>(fx);
                    const int x1 = std::min(x0 + 1, W - 1);
                    const T wx = static_cast<T>(fx - x0);
                    for (int c = 0; c < C; ++c) {
                        const T g = G.at(c, y, xo);
                        gx.at(c, y0, x0) += g * (T(1) - wy) * (T(1) - wx);
                        gx.at(c, y0, x1) += g * (T(1) - wy) * wx;
                        gx.at(c, y1, x0) += g * wy * (T(1) - wx);
                        gx.at(c, y1, x1) += g * wy * wx;
                    }
                }
            }
        });
    }

    // ---- gather / scatter --------------------------------------------------

    /// Pull the channel vectors of a map at the given (row, col) positions
    /// into a {N,C} matrix, one row per position in the given order.
    Id gather_rows(Id map, std::vector<std::pair<int, int>> pos) {
        const Tensor<T>& X = nodes_[map].val;
        const int C = X.shape[0], H = X.shape[1], W = X.shape[2];
        const int N = static_cast<int>(pos.size());
        Tensor<T> out({N, C});
        for (int n = 0; n < N; ++n) {
            const auto [y, x] = pos[n];
            if (y < 0 || y >= H || x < 0 || x >= W) throw SizingError("gather_rows: position out of bounds");
            for (int c = 0; c < C; ++c) out.at(n, c) = X.at(c, y, x);
        }
        auto p = std::make_shared<std::vector<std::pair<int, int>>>(std::move(pos));
        return push2(std::move(out), nodes_[map].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            Tensor<T>& gm = t.nodes_[map].grad;
            for (int n = 0; n < N; ++n) {
                const auto [y, x] = (*p)[n];
                for (int c = 0; c < C; ++c) gm.at(c, y, x) += G.at(n, c);
            }
        });
    }

    /// Write {N,C} rows into a zero map of size {C,H,W} at the given positions.
    Id scatter_rows(Id rows, std::vector<std::pair<int, int>> pos, int H, int W) {
        const Tensor<T>& R = nodes_[rows].val;
        const int N = R.shape[0], C = R.shape[1];
        if (N != static_cast<int>(pos.size())) throw SizingError("scatter_rows: row/position count mismatch");
        Tensor<T> out({C, H, W});
        for (int n = 0; n < N; ++n) {
            const auto [y, x] = pos[n];
            if (y < 0 || y >= H || x < 0 || x >= W) throw SizingError("scatter_rows: position out of bounds");
            for (int c = 0; c < C; ++c) out.at(c, y, x) = R.at(n, c);
        }
        auto p = std::make_shared<std::vector<std::pair<int, int>>>(std::move(pos));
        return push2(std::move(out), nodes_[rows].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            Tensor<T>& gr = t.nodes_[rows].grad;
            for (int n = 0; n < N; ++n) {
                const auto [y, x] = (*p)[n];
                for (int c = 0; c < C; ++c) gr.at(n, c) += G.at(c, y, x);
            }
        });
    }

    // ---- matrix algebra ----------------------------------------------------

    Id matmul(Id a, Id b, bool ta = false, bool tb = false) {
        const Tensor<T>& A = nodes_[a].val;
        const Tensor<T>& B = nodes_[b].val;
        const int M = ta ? A.shape[1] : A.shape[0];
        const int K = ta ? A.shape[0] : A.shape[1];
        const int Kb = tb ? B.shape[1] : B.shape[0];
        const int N = tb ? B.shape[0] : B.shape[1];
        if (K != Kb) throw SizingError("matmul: inner dimension mismatch");
        Tensor<T> out({M, N});
        gemm(A, B, out, ta, tb, false);
        return push2(std::move(out), any_grad({a, b}), [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            const Tensor<T>& Av = t.nodes_[a].val;
            const Tensor<T>& Bv = t.nodes_[b].val;
            if (t.nodes_[a].needs_grad) {
                // dA for each transpose case
                if (!ta)
                    gemm(G, Bv, t.nodes_[a].grad, false, !tb, true);  // dA = G * op(B)^T
                else if (!tb)
                    gemm(Bv, G, t.nodes_[a].grad, false, true, true);  // A^T case: dA = B * G^T
                else
                    gemm(Bv, G, t.nodes_[a].grad, true, true, true);  // both transposed: dA = B^T * G^T
            }
            if (t.nodes_[b].needs_grad) {
                if (!tb)
                    gemm(Av, G, t.nodes_[b].grad, !ta, false, true);  // dB = op(A)^T * G
                else if (!ta)
                    gemm(G, Av, t.nodes_[b].grad, true, false, true);  // B^T case: dB = G^T * A
                else
                    gemm(G, Av, t.nodes_[b].grad, true, true, true);  // both: dB = G^T * A^T
            }
        });
    }

    /// Row-wise softmax over the last dimension of a {N,M} matrix.
    /// When `intercept` is non-null the probability matrix is copied out,
    /// which tests use to inspect attention weights.
    Id softmax_rows(Id x, Tensor<T>* intercept = nullptr) {
        const Tensor<T>& X = nodes_[x].val;
        const int N = X.shape[0], M = X.shape[1];
        Tensor<T> out({N, M});
        for (int n = 0; n < N; ++n) {
            const T* xr = X.data() + static_cast<std::int64_t>(n) * M;
            T* orow = out.data() + static_cast<std::int64_t>(n) * M;
            T mx = xr[0];
            for (int j = 1; j < M; ++j) mx = std::max(mx, xr[j]);
            T sum = 0;
            for (int j = 0; j < M; ++j) {
                orow[j] = std::exp(xr[j] - mx);
                sum += orow[j];
            }
            for (int j = 0; j < M; ++j) orow[j] /= sum;
        }
        if (intercept) *intercept = out;
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            const Tensor<T>& Y = t.nodes_[self].val;
            Tensor<T>& gx = t.nodes_[x].grad;
            for (int n = 0; n < N; ++n) {
                const T* yr = Y.data() + static_cast<std::int64_t>(n) * M;
                const T* gr = G.data() + static_cast<std::int64_t>(n) * M;
                T dot = 0;
                for (int j = 0; j < M; ++j) dot += gr[j] * yr[j];
                T* gxr = gx.data() + static_cast<std::int64_t>(n) * M;
                for (int j = 0; j < M; ++j) gxr[j] += yr[j] * (gr[j] - dot);
            }
        });
    }

    // ---- scalar plumbing ----------------------------------------------------

    Id index_scalar(Id vec, int i) {
        Tensor<T> out = Tensor<T>::scalar(nodes_[vec].val.v[i]);
        return push2(std::move(out), nodes_[vec].needs_grad, [=](Tape& t, Id self) {
            t.nodes_[vec].grad.v[i] += t.nodes_[self].grad.v[0];
        });
    }

    Id exp_scalar(Id s) {
        Tensor<T> out = Tensor<T>::scalar(std::exp(nodes_[s].val.v[0]));
        return push2(std::move(out), nodes_[s].needs_grad, [=](Tape& t, Id self) {
            t.nodes_[s].grad.v[0] += t.nodes_[self].grad.v[0] * t.nodes_[self].val.v[0];
        });
    }

    /// Multiply every element of a tensor by a scalar node.
    Id mul_scalar_node(Id x, Id s) {
        const Tensor<T>& X = nodes_[x].val;
        const T sv = nodes_[s].val.v[0];
        Tensor<T> out(X.shape);
        for (std::int64_t i = 0; i < X.size(); ++i) out.v[i] = X.v[i] * sv;
        return push2(std::move(out), any_grad({x, s}), [=](Tape& t, Id self) {
            const Tensor<T>& G = t.nodes_[self].grad;
            const Tensor<T>& Xv = t.nodes_[x].val;
            if (t.nodes_[x].needs_grad) {
                Tensor<T>& gx = t.nodes_[x].grad;
                for (std::int64_t i = 0; i < G.size(); ++i) gx.v[i] += G.v[i] * sv;
            }
            if (t.nodes_[s].needs_grad) {
                T acc = 0;
                for (std::int64_t i = 0; i < G.size(); ++i) acc += G.v[i] * Xv.v[i];
                t.nodes_[s].grad.v[0] += acc;
            }
        });
    }

    Id add_scalars(Id a, Id b) { return add(a, b); }

    /// Scalar projection sum_i w_i * x_i against a constant weight tensor.
    Id weighted_sum(Id x, Tensor<T> w) {
        const Tensor<T>& X = nodes_[x].val;
        if (X.size() != w.size()) throw SizingError("weighted_sum: weight size mismatch");
        double acc = 0.0;
        for (std::int64_t i = 0; i < X.size(); ++i) acc += static_cast<double>(X.v[i]) * w.v[i];
        Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
        auto wp = std::make_shared<Tensor<T>>(std::move(w));
        return push2(std::move(out), nodes_[x].needs_grad, [=](Tape& t, Id self) {
            const T g = t.nodes_[self].grad.v[0];
            Tensor<T>& gx = t.nodes_[x].grad;
            for (std::int64_t i = 0; i < gx.size(); ++i) gx.v[i] += g * wp->v[i];
        });
    }

    // ---- losses ---------------------------------------------------------------

    /// Mean binary cross-entropy with logits against a constant 0/1 target.
    Id bce_with_logits_mean(Id logits, Tensor<T> target) {
        const Tensor<T>& Z = nodes_[logits].val;
        if (Z.size() != target.size()) throw SizingError("bce: target size mismatch");
        const std::int64_t N = Z.size();
        double acc = 0.0;
        for (std::int64_t i = 0; i < N; ++i) {
            const double z = Z.v[i], t = target.v[i];
            acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
        }
        Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(N)));
        auto tgt = std::make_shared<Tensor<T>>(std::move(target));
        return push2(std::move(out), nodes_[logits].needs_grad, [=](Tape& t, Id self) {
            const T g = t.nodes_[self].grad.v[0];
            const Tensor<T>& Zv = t.nodes_[logits].val;
            Tensor<T>& gz = t.nodes_[logits].grad;
            const T invN = T(1) / static_cast<T>(N);
            for (std::int64_t i = 0; i < N; ++i)
                gz.v[i] += g * invN * (sigmoid_scalar(Zv.v[i]) - tgt->v[i]);
        });
    }

    /// Soft dice loss on sigmoid probabilities: 1 - (2*sum(p*t)+eps)/(sum(p)+sum(t)+eps).
    Id soft_dice_loss(Id logits, Tensor<T> target, T eps = T(1)) {
        const Tensor<T>& Z = nodes_[logits].val;
        if (Z.size() != target.size()) throw SizingError("dice: target size mismatch");
        const std::int64_t N = Z.size();
        double spt = 0.0, sp = 0.0, st = 0.0;
        for (std::int64_t i = 0; i < N; ++i) {
            const double p = sigmoid_scalar(static_cast<double>(Z.v[i]));
            spt += p * target.v[i];
            sp += p;
            st += target.v[i];
        }
        const double denom = sp + st + static_cast<double>(eps);
        const double num = 2.0 * spt + static_cast<double>(eps);
        Tensor<T> out = Tensor<T>::scalar(static_cast<T>(1.0 - num / denom));
        auto tgt = std::make_shared<Tensor<T>>(std::move(target));
        return push2(std::move(out), nodes_[logits].needs_grad, [=](Tape& t, Id self) {
            const T g = t.nodes_[self].grad.v[0];
            const Tensor<T>& Zv = t.nodes_[logits].val;
            Tensor<T>& gz = t.nodes_[logits].grad;
            const T dn = static_cast<T>(denom);
            const T nm = static_cast<T>(num);
            for (std::int64_t i = 0; i < N; ++i) {
                const T p = sigmoid_scalar(Zv.v[i]);
                // d(1 - num/denom)/dp = -(2*t*denom - num) / denom^2
                const T dldp = -(T(2) * tgt->v[i] * dn - nm) / (dn * dn);
                gz.v[i] += g * dldp * p * (T(1) - p);
            }
        });
    }

    // ---- backward ----------------------------------------------------------------

    void backward(Id root) {
        if (nodes_[root].val.size() != 1) throw SizingError("backward: root must be a scalar");
        for (auto& n : nodes_) n.grad = Tensor<T>(n.val.shape);
        nodes_[root].grad.v[0] = T(1);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back(*this);
        }
    }

    static T sigmoid_scalar(T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
    }

private:
    std::deque<Node> nodes_;

    bool any_grad(std::initializer_list<Id> ids) const {
        for (Id id : ids)
            if (nodes_[id].needs_grad) return true;
        return false;
    }

    Id push(Tensor<T> val, bool needs_grad, std::function<void(Tape&)> back) {
        Node n;
        n.val = std::move(val);
        n.needs_grad = needs_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    template <typename F>
    Id push2(Tensor<T> val, bool needs_grad, F&& back_with_self) {
        Id id = push(std::move(val), needs_grad, nullptr);
        if (needs_grad) {
            auto f = std::forward<F>(back_with_self);
            nodes_[id].back = [f, id](Tape& t) { f(t, id); };
        }
        return id;
    }

    /// C (+)= op(A) * op(B)
    static void gemm(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C, bool ta, bool tb, bool accumulate) {
        const int M = ta ? A.shape[1] : A.shape[0];
        const int K = ta ? A.shape[0] : A.shape[1];
        const int N = tb ? B.shape[0] : B.shape[1];
        if (!accumulate) std::fill(C.v.begin(), C.v.end(), T(0));
        auto a_at = [&](int i, int k) { return ta ? A.at(k, i) : A.at(i, k); };
        auto b_at = [&](int k, int j) { return tb ? B.at(j, k) : B.at(k, j); };
        if (!ta && !tb) {
            for (int i = 0; i < M; ++i) {
                T* crow = C.data() + static_cast<std::int64_t>(i) * N;
                for (int k = 0; k < K; ++k) {
                    const T av = A.at(i, k);
                    const T* brow = B.data() + static_cast<std::int64_t>(k) * N;
                    for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
                }
            }
        } else {
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < N; ++j) {
                    T acc = 0;
                    for (int k = 0; k < K; ++k) acc += a_at(i, k) * b_at(k, j);
                    C.at(i, j) += acc;
                }
        }
    }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace polyper
