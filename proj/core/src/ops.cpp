#include "depthfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "depthfuse/errors.hpp"

namespace depthfuse {

namespace {

using Node = Tensor::Node;
using NodePtr = std::shared_ptr<Node>;

void require(bool cond, const std::string& msg) {
    if (!cond) throw ArgumentError(msg);
}

struct Nchw {
    int n, c, h, w;
};

Nchw as_nchw(const Tensor& t, const char* what) {
    require(t.defined(), std::string(what) + ": empty tensor");
    const Shape& s = t.shape();
    require(s.size() == 4, std::string(what) + ": expected NCHW tensor, got shape " + shape_str(s));
    return Nchw{s[0], s[1], s[2], s[3]};
}

bool is_scalar(const Tensor& t) { return t.size() == 1 && t.shape().size() <= 1; }

// Inclusive output-coordinate range [lo, hi] such that lo*stride + k - pad
// stays inside [0, limit).
void out_range(int k, int pad, int stride, int limit, int out_limit, int& lo, int& hi) {
    const int a = pad - k;
    lo = a <= 0 ? 0 : (a + stride - 1) / stride;
    const int b = limit - 1 - k + pad;
    hi = b < 0 ? -1 : std::min(out_limit - 1, b / stride);
}

}  // namespace

void ConvSpec::validate() const {
    require(in_channels >= 1 && out_channels >= 1, "conv channels must be >= 1");
    require(kernel >= 1 && kernel % 2 == 1,
            "conv kernel must be odd and >= 1, got " + std::to_string(kernel));
    require(stride == 1 || stride == 2, "conv stride must be 1 or 2");
    require(padding >= 0, "conv padding must be >= 0");
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
    spec.validate();
    const Nchw xs = as_nchw(x, "conv2d input");
    require(xs.c == spec.in_channels, "conv2d: input has " + std::to_string(xs.c) +
                                          " channels, spec expects " +
                                          std::to_string(spec.in_channels));
    require(w.defined() && w.shape() ==
                Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
            "conv2d: weight shape mismatch");
    require(b.defined() && b.shape() == Shape{spec.out_channels}, "conv2d: bias shape mismatch");

    const int N = xs.n, C = xs.c, H = xs.h, W = xs.w;
    const int K = spec.kernel, S = spec.stride, P = spec.padding;
    const int OC = spec.out_channels;
    require(H + 2 * P >= K && W + 2 * P >= K, "conv2d: kernel larger than padded input");
    const int OH = (H + 2 * P - K) / S + 1;
    const int OW = (W + 2 * P - K) / S + 1;

    const double* xd = x.data().data();
    const double* wd = w.data().data();
    const double* bd = b.data().data();

    std::vector<double> out(static_cast<std::size_t>(N) * OC * OH * OW);
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            double* out_plane = out.data() + (static_cast<std::size_t>(n) * OC + oc) * OH * OW;
            std::fill(out_plane, out_plane + static_cast<std::size_t>(OH) * OW, bd[oc]);
            for (int ic = 0; ic < C; ++ic) {
                const double* x_plane =
                    xd + (static_cast<std::size_t>(n) * C + ic) * H * W;
                const double* w_kernel =
                    wd + (static_cast<std::size_t>(oc) * C + ic) * K * K;
                for (int kh = 0; kh < K; ++kh) {
                    int oh_lo, oh_hi;
                    out_range(kh, P, S, H, OH, oh_lo, oh_hi);
                    for (int kw = 0; kw < K; ++kw) {
                        const double wv = w_kernel[kh * K + kw];
                        int ow_lo, ow_hi;
                        out_range(kw, P, S, W, OW, ow_lo, ow_hi);
                        if (ow_hi < ow_lo) continue;
                        const int count = ow_hi - ow_lo + 1;
                        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                            const int ih = oh * S + kh - P;
                            const double* xrow = x_plane + static_cast<std::size_t>(ih) * W +
                                                 (ow_lo * S + kw - P);
                            double* orow = out_plane + static_cast<std::size_t>(oh) * OW + ow_lo;
                            if (S == 1) {
                                for (int i = 0; i < count; ++i) orow[i] += wv * xrow[i];
                            } else {
                                for (int i = 0; i < count; ++i) orow[i] += wv * xrow[i * S];
                            }
                        }
                    }
                }
            }
        }
    }

    ConvSpec cap = spec;
    auto backprop = [cap, N, C, H, W, OH, OW](Node& self) {
        const int K = cap.kernel, S = cap.stride, P = cap.padding;
        const int OC = cap.out_channels;
        Node* xn = self.parents[0].get();
        Node* wn = self.parents[1].get();
        Node* bn = self.parents[2].get();
        const double* g = self.grad.data();
        const double* xd = xn->value.data();
        const double* wd = wn->value.data();

        if (bn->requires_grad) {
            for (int n = 0; n < N; ++n) {
                for (int oc = 0; oc < OC; ++oc) {
                    const double* g_plane =
                        g + (static_cast<std::size_t>(n) * OC + oc) * OH * OW;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i) {
                        acc += g_plane[i];
                    }
                    bn->grad[oc] += acc;
                }
            }
        }

        for (int n = 0; n < N; ++n) {
            for (int oc = 0; oc < OC; ++oc) {
                const double* g_plane = g + (static_cast<std::size_t>(n) * OC + oc) * OH * OW;
                for (int ic = 0; ic < C; ++ic) {
                    const double* x_plane = xd + (static_cast<std::size_t>(n) * C + ic) * H * W;
                    const double* w_kernel = wd + (static_cast<std::size_t>(oc) * C + ic) * K * K;
                    double* dw_kernel = wn->requires_grad
                                            ? wn->grad.data() +
                                                  (static_cast<std::size_t>(oc) * C + ic) * K * K
                                            : nullptr;
                    double* dx_plane = xn->requires_grad
                                           ? xn->grad.data() +
                                                 (static_cast<std::size_t>(n) * C + ic) * H * W
                                           : nullptr;
                    for (int kh = 0; kh < K; ++kh) {
                        int oh_lo, oh_hi;
                        out_range(kh, P, S, H, OH, oh_lo, oh_hi);
                        for (int kw = 0; kw < K; ++kw) {
                            int ow_lo, ow_hi;
                            out_range(kw, P, S, W, OW, ow_lo, ow_hi);
                            if (ow_hi < ow_lo) continue;
                            const int count = ow_hi - ow_lo + 1;
                            const double wv = w_kernel[kh * K + kw];
                            double dw_acc = 0.0;
                            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                                const int ih = oh * S + kh - P;
                                const std::size_t x_off =
                                    static_cast<std::size_t>(ih) * W + (ow_lo * S + kw - P);
                                const double* grow =
                                    g_plane + static_cast<std::size_t>(oh) * OW + ow_lo;
                                if (dw_kernel) {
                                    const double* xrow = x_plane + x_off;
                                    if (S == 1) {
                                        for (int i = 0; i < count; ++i) dw_acc += grow[i] * xrow[i];
                                    } else {
                                        for (int i = 0; i < count; ++i)
                                            dw_acc += grow[i] * xrow[i * S];
                                    }
                                }
                                if (dx_plane) {
                                    double* dxrow = dx_plane + x_off;
                                    if (S == 1) {
                                        for (int i = 0; i < count; ++i) dxrow[i] += wv * grow[i];
                                    } else {
                                        for (int i = 0; i < count; ++i)
                                            dxrow[i * S] += wv * grow[i];
                                    }
                                }
                            }
                            if (dw_kernel) dw_kernel[kh * K + kw] += dw_acc;
                        }
                    }
                }
            }
        }
    };

    return Tensor::wrap(Tensor::make_node(Shape{N, OC, OH, OW}, std::move(out),
                                          {x.node(), w.node(), b.node()}, std::move(backprop)));
}

Tensor relu(const Tensor& x) {
    require(x.defined(), "relu: empty tensor");
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    auto backprop = [](Node& self) {
        Node* xn = self.parents[0].get();
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (xn->value[i] > 0.0) xn->grad[i] += self.grad[i];
        }
    };
    return Tensor::wrap(
        Tensor::make_node(x.shape(), std::move(out), {x.node()}, std::move(backprop)));
}

Tensor sigmoid(const Tensor& x) {
    require(x.defined(), "sigmoid: empty tensor");
    std::vector<double> out(x.size());
    auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xd[i]));
    auto backprop = [](Node& self) {
        Node* xn = self.parents[0].get();
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.value[i];
            xn->grad[i] += self.grad[i] * y * (1.0 - y);
        }
    };
    return Tensor::wrap(
        Tensor::make_node(x.shape(), std::move(out), {x.node()}, std::move(backprop)));
}

namespace {

enum class BinOp { kAdd, kSub, kMul };

Tensor binary_op(const Tensor& x, const Tensor& y, BinOp op, const char* name) {
    require(x.defined() && y.defined(), std::string(name) + ": empty tensor");
    const bool xs = is_scalar(x), ys = is_scalar(y);
    require(xs || ys || x.shape() == y.shape(),
            std::string(name) + ": shape mismatch " + shape_str(x.shape()) + " vs " +
                shape_str(y.shape()) + " (only scalar broadcast is supported)");

    const Shape& out_shape = xs && !ys ? y.shape() : x.shape();
    const std::size_t n = static_cast<std::size_t>(shape_numel(out_shape));
    auto xd = x.data();
    auto yd = y.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = xs ? xd[0] : xd[i];
        const double b = ys ? yd[0] : yd[i];
        out[i] = op == BinOp::kAdd ? a + b : op == BinOp::kSub ? a - b : a * b;
    }
    auto backprop = [op, xs, ys](Node& self) {
        Node* xn = self.parents[0].get();
        Node* yn = self.parents[1].get();
        const std::size_t n = self.grad.size();
        if (xn->requires_grad) {
            for (std::size_t i = 0; i < n; ++i) {
                const double g = self.grad[i];
                const double d = op == BinOp::kMul ? (ys ? yn->value[0] : yn->value[i]) : 1.0;
                xn->grad[xs ? 0 : i] += g * d;
            }
        }
        if (yn->requires_grad) {
            for (std::size_t i = 0; i < n; ++i) {
                const double g = self.grad[i];
                double d;
                if (op == BinOp::kMul) {
                    d = xs ? xn->value[0] : xn->value[i];
                } else {
                    d = op == BinOp::kSub ? -1.0 : 1.0;
                }
                yn->grad[ys ? 0 : i] += g * d;
            }
        }
    };
    return Tensor::wrap(
        Tensor::make_node(out_shape, std::move(out), {x.node(), y.node()}, std::move(backprop)));
}

}  // namespace

Tensor add(const Tensor& x, const Tensor& y) { return binary_op(x, y, BinOp::kAdd, "add"); }
Tensor sub(const Tensor& x, const Tensor& y) { return binary_op(x, y, BinOp::kSub, "sub"); }
Tensor mul_pointwise(const Tensor& x, const Tensor& y) {
    return binary_op(x, y, BinOp::kMul, "mul_pointwise");
}

Tensor scale(const Tensor& x, double factor) {
    require(x.defined(), "scale: empty tensor");
    require(std::isfinite(factor), "scale: factor must be finite");
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) v *= factor;
    auto backprop = [factor](Node& self) {
        Node* xn = self.parents[0].get();
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += factor * self.grad[i];
    };
    return Tensor::wrap(
        Tensor::make_node(x.shape(), std::move(out), {x.node()}, std::move(backprop)));
}

Tensor concat_channels(std::span<const Tensor> xs) {
    require(!xs.empty(), "concat_channels: no inputs");
    const Nchw first = as_nchw(xs[0], "concat_channels");
    int total_c = 0;
    for (const Tensor& t : xs) {
        const Nchw s = as_nchw(t, "concat_channels");
        require(s.n == first.n && s.h == first.h && s.w == first.w,
                "concat_channels: mismatched N/H/W");
        total_c += s.c;
    }
    const int N = first.n, H = first.h, W = first.w;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    std::vector<double> out(static_cast<std::size_t>(N) * total_c * plane);
    std::vector<NodePtr> parents;
    std::vector<int> channels;
    parents.reserve(xs.size());
    for (const Tensor& t : xs) {
        parents.push_back(t.node());
        channels.push_back(t.shape()[1]);
    }
    for (int n = 0; n < N; ++n) {
        std::size_t dst_c = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const int c_k = channels[k];
            const double* src =
                xs[k].data().data() + static_cast<std::size_t>(n) * c_k * plane;
            double* dst = out.data() + (static_cast<std::size_t>(n) * total_c + dst_c) * plane;
            std::copy(src, src + static_cast<std::size_t>(c_k) * plane, dst);
            dst_c += c_k;
        }
    }

    auto backprop = [channels, N, plane, total_c](Node& self) {
        for (int n = 0; n < N; ++n) {
            std::size_t src_c = 0;
            for (std::size_t k = 0; k < channels.size(); ++k) {
                Node* pn = self.parents[k].get();
                const int c_k = channels[k];
                if (pn->requires_grad) {
                    const double* g =
                        self.grad.data() + (static_cast<std::size_t>(n) * total_c + src_c) * plane;
                    double* dst = pn->grad.data() + static_cast<std::size_t>(n) * c_k * plane;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(c_k) * plane; ++i) {
                        dst[i] += g[i];
                    }
                }
                src_c += c_k;
            }
        }
    };
    return Tensor::wrap(Tensor::make_node(Shape{N, total_c, H, W}, std::move(out),
                                          std::move(parents), std::move(backprop)));
}

Tensor maxpool2d(const Tensor& x, int window) {
    const Nchw s = as_nchw(x, "maxpool2d");
    require(window >= 1, "maxpool2d: window must be >= 1");
    require(s.h % window == 0 && s.w % window == 0,
            "maxpool2d: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                " not divisible by window " + std::to_string(window));
    const int N = s.n, C = s.c, H = s.h, W = s.w;
    const int OH = H / window, OW = W / window;

    auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(N) * C * OH * OW);
    std::vector<std::uint32_t> argmax(out.size());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* plane = xd.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
            const std::size_t out_base = (static_cast<std::size_t>(n) * C + c) * OH * OW;
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::uint32_t best_idx = 0;
                    for (int dr = 0; dr < window; ++dr) {
                        for (int dc = 0; dc < window; ++dc) {
                            const std::size_t idx =
                                static_cast<std::size_t>(oh * window + dr) * W + ow * window + dc;
                            if (plane[idx] > best) {
                                best = plane[idx];
                                best_idx = static_cast<std::uint32_t>(idx);
                            }
                        }
                    }
                    out[out_base + static_cast<std::size_t>(oh) * OW + ow] = best;
                    argmax[out_base + static_cast<std::size_t>(oh) * OW + ow] = best_idx;
                }
            }
        }
    }

    const std::size_t plane_in = static_cast<std::size_t>(H) * W;
    const std::size_t plane_out = static_cast<std::size_t>(OH) * OW;
    auto backprop = [argmax = std::move(argmax), N, C, plane_in, plane_out](Node& self) {
        Node* xn = self.parents[0].get();
        if (!xn->requires_grad) return;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const std::size_t ob = (static_cast<std::size_t>(n) * C + c) * plane_out;
                double* dx = xn->grad.data() + (static_cast<std::size_t>(n) * C + c) * plane_in;
                for (std::size_t i = 0; i < plane_out; ++i) {
                    dx[argmax[ob + i]] += self.grad[ob + i];
                }
            }
        }
    };
    return Tensor::wrap(
        Tensor::make_node(Shape{N, C, OH, OW}, std::move(out), {x.node()}, std::move(backprop)));
}

Tensor upsample_nearest(const Tensor& x, int factor) {
    const Nchw s = as_nchw(x, "upsample_nearest");
    require(factor >= 1, "upsample_nearest: factor must be >= 1");
    const int N = s.n, C = s.c, H = s.h, W = s.w;
    const int OH = H * factor, OW = W * factor;

    auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(N) * C * OH * OW);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* src = xd.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
            double* dst = out.data() + (static_cast<std::size_t>(n) * C + c) * OH * OW;
            for (int oh = 0; oh < OH; ++oh) {
                const double* srow = src + static_cast<std::size_t>(oh / factor) * W;
                double* drow = dst + static_cast<std::size_t>(oh) * OW;
                for (int ow = 0; ow < OW; ++ow) drow[ow] = srow[ow / factor];
            }
        }
    }

    auto backprop = [factor, N, C, H, W, OH, OW](Node& self) {
        Node* xn = self.parents[0].get();
        if (!xn->requires_grad) return;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const double* g =
                    self.grad.data() + (static_cast<std::size_t>(n) * C + c) * OH * OW;
                double* dx = xn->grad.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
                for (int oh = 0; oh < OH; ++oh) {
                    const double* grow = g + static_cast<std::size_t>(oh) * OW;
                    double* dxrow = dx + static_cast<std::size_t>(oh / factor) * W;
                    for (int ow = 0; ow < OW; ++ow) dxrow[ow / factor] += grow[ow];
                }
            }
        }
    };
    return Tensor::wrap(
        Tensor::make_node(Shape{N, C, OH, OW}, std::move(out), {x.node()}, std::move(backprop)));
}

Tensor mse_masked(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> mask) {
    require(pred.defined() && target.defined(), "mse_masked: empty tensor");
    require(pred.shape() == target.shape(), "mse_masked: shape mismatch " +
                                                shape_str(pred.shape()) + " vs " +
                                                shape_str(target.shape()));
    require(mask.size() == static_cast<std::size_t>(pred.size()),
            "mse_masked: mask length does not match tensor size");

    std::int64_t count = 0;
    for (std::uint8_t m : mask) count += m != 0;
    require(count > 0, "mse_masked: mask selects no pixels");

    auto pd = pred.data();
    auto td = target.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < pd.size(); ++i) {
        if (mask[i]) {
            const double d = pd[i] - td[i];
            acc += d * d;
        }
    }
    const double inv = 1.0 / static_cast<double>(count);

    std::vector<std::uint8_t> mask_copy(mask.begin(), mask.end());
    auto backprop = [mask = std::move(mask_copy), inv](Node& self) {
        Node* pn = self.parents[0].get();
        Node* tn = self.parents[1].get();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) continue;
            const double d = 2.0 * inv * (pn->value[i] - tn->value[i]) * g;
            if (pn->requires_grad) pn->grad[i] += d;
            if (tn->requires_grad) tn->grad[i] -= d;
        }
    };
    return Tensor::wrap(Tensor::make_node(Shape{}, {acc * inv}, {pred.node(), target.node()},
                                          std::move(backprop)));
}

Tensor mul_channel_map(const Tensor& x, std::shared_ptr<const std::vector<double>> map) {
    const Nchw s = as_nchw(x, "mul_channel_map");
    require(map != nullptr, "mul_channel_map: null map");
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    require(map->size() == plane, "mul_channel_map: map size does not match spatial dims");

    auto xd = x.data();
    std::vector<double> out(xd.size());
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) out[base + i] = xd[base + i] * (*map)[i];
        }
    }

    auto backprop = [map, plane](Node& self) {
        Node* xn = self.parents[0].get();
        if (!xn->requires_grad) return;
        const std::size_t planes = self.grad.size() / plane;
        for (std::size_t p = 0; p < planes; ++p) {
            const std::size_t base = p * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                xn->grad[base + i] += self.grad[base + i] * (*map)[i];
            }
        }
    };
    return Tensor::wrap(
        Tensor::make_node(x.shape(), std::move(out), {x.node()}, std::move(backprop)));
}

BatchNormState BatchNormState::create(int channels) {
    BatchNormState s;
    s.running_mean = std::make_shared<std::vector<double>>(channels, 0.0);
    s.running_var = std::make_shared<std::vector<double>>(channels, 1.0);
    return s;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   Mode mode) {
    const Nchw s = as_nchw(x, "batchnorm2d");
    const int N = s.n, C = s.c, H = s.h, W = s.w;
    require(gamma.defined() && gamma.shape() == Shape{C}, "batchnorm2d: gamma must be [C]");
    require(beta.defined() && beta.shape() == Shape{C}, "batchnorm2d: beta must be [C]");
    require(state.running_mean && state.running_var &&
                state.running_mean->size() == static_cast<std::size_t>(C) &&
                state.running_var->size() == static_cast<std::size_t>(C),
            "batchnorm2d: state does not match channel count");
    const std::int64_t m = static_cast<std::int64_t>(N) * H * W;
    require(m > 0, "batchnorm2d: empty batch");

    const std::size_t plane = static_cast<std::size_t>(H) * W;
    auto xd = x.data();
    auto gd = gamma.data();
    auto bd = beta.data();

    std::vector<double> mean(C), invstd(C);
    if (mode == Mode::kTrain) {
        std::vector<double> var(C);
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = xd.data() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            }
            mean[c] = acc / static_cast<double>(m);
            double vacc = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = xd.data() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean[c];
                    vacc += d * d;
                }
            }
            var[c] = vacc / static_cast<double>(m);
            invstd[c] = 1.0 / std::sqrt(var[c] + state.eps);
        }
        for (int c = 0; c < C; ++c) {
            (*state.running_mean)[c] =
                (1.0 - state.momentum) * (*state.running_mean)[c] + state.momentum * mean[c];
            (*state.running_var)[c] =
                (1.0 - state.momentum) * (*state.running_var)[c] + state.momentum * var[c];
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = (*state.running_mean)[c];
            invstd[c] = 1.0 / std::sqrt((*state.running_var)[c] + state.eps);
        }
    }

    std::vector<double> xhat(xd.size());
    std::vector<double> out(xd.size());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double h = (xd[base + i] - mean[c]) * invstd[c];
                xhat[base + i] = h;
                out[base + i] = gd[c] * h + bd[c];
            }
        }
    }

    const bool train = mode == Mode::kTrain;
    auto backprop = [xhat = std::move(xhat), invstd = std::move(invstd), N, C, plane, m,
                     train](Node& self) {
        Node* xn = self.parents[0].get();
        Node* gn = self.parents[1].get();
        Node* bn = self.parents[2].get();
        const double* g = self.grad.data();
        const double* gamma_v = gn->value.data();

        for (int c = 0; c < C; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int n = 0; n < N; ++n) {
                const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += g[base + i];
                    sum_gx += g[base + i] * xhat[base + i];
                }
            }
            if (gn->requires_grad) gn->grad[c] += sum_gx;
            if (bn->requires_grad) bn->grad[c] += sum_g;
            if (xn->requires_grad) {
                const double inv_m = 1.0 / static_cast<double>(m);
                for (int n = 0; n < N; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        double dx;
                        if (train) {
                            dx = gamma_v[c] * invstd[c] *
                                 (g[base + i] - inv_m * sum_g - xhat[base + i] * inv_m * sum_gx);
                        } else {
                            dx = gamma_v[c] * invstd[c] * g[base + i];
                        }
                        xn->grad[base + i] += dx;
                    }
                }
            }
        }
    };
    return Tensor::wrap(Tensor::make_node(x.shape(), std::move(out),
                                          {x.node(), gamma.node(), beta.node()},
                                          std::move(backprop)));
}

}  // namespace depthfuse
