#include "spectragen/numerics/ops.hpp"

#include <algorithm>
#include <cmath>

#include "spectragen/numerics/error.hpp"

namespace spectragen {

namespace {

void require_rank(const DenseArray& a, std::size_t rank, const char* op) {
    if (a.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
    }
}

void require_same_shape(const DenseArray& a, const DenseArray& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

struct ConvGeometry {
    std::size_t c_in, h, w, c_out, k, pad, out_h, out_w;
};

ConvGeometry conv_geometry(const DenseArray& input, const DenseArray& kernel, std::size_t padding) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    ConvGeometry g{input.extent(0), input.extent(1), input.extent(2), kernel.extent(0), kernel.extent(2),
                   padding, 0, 0};
    if (kernel.extent(1) != g.c_in) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.extent(1)) +
                         " input channels, input has " + std::to_string(g.c_in));
    }
    if (kernel.extent(3) != g.k || g.k % 2 == 0) throw ShapeError("conv2d: kernel must be square and odd");
    if (padding != 0 && padding != (g.k - 1) / 2) throw ShapeError("conv2d: padding must be 0 or (k-1)/2");
    if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k) throw ShapeError("conv2d: input smaller than kernel");
    g.out_h = g.h + 2 * padding - g.k + 1;
    g.out_w = g.w + 2 * padding - g.k + 1;
    return g;
}

// Visits every (output row segment, input row segment) pair for one kernel tap.
template <typename Fn>
void for_each_tap_row(const ConvGeometry& g, std::size_t ky, std::size_t kx, Fn&& fn) {
    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(g.pad);
    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
    const std::ptrdiff_t ox_begin = std::max<std::ptrdiff_t>(0, -dx);
    const std::ptrdiff_t ox_end =
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.out_w), static_cast<std::ptrdiff_t>(g.w) - dx);
    if (ox_begin >= ox_end) return;
    for (std::ptrdiff_t oy = 0; oy < static_cast<std::ptrdiff_t>(g.out_h); ++oy) {
        const std::ptrdiff_t iy = oy + dy;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        fn(static_cast<std::size_t>(oy), static_cast<std::size_t>(iy), static_cast<std::size_t>(ox_begin),
           static_cast<std::size_t>(ox_begin + dx), static_cast<std::size_t>(ox_end - ox_begin));
    }
}

void conv2d_forward_into(const ConvGeometry& g, const double* in, const double* ker, double* out) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
        double* plane = out + co * g.out_h * g.out_w;
        for (std::size_t ci = 0; ci < g.c_in; ++ci) {
            const double* src = in + ci * g.h * g.w;
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const double wv = ker[((co * g.c_in + ci) * g.k + ky) * g.k + kx];
                    if (wv == 0.0) continue;
                    for_each_tap_row(g, ky, kx, [&](std::size_t oy, std::size_t iy, std::size_t ox, std::size_t ix,
                                                    std::size_t n) {
                        double* o = plane + oy * g.out_w + ox;
                        const double* s = src + iy * g.w + ix;
                        for (std::size_t j = 0; j < n; ++j) o[j] += wv * s[j];
                    });
                }
            }
        }
    }
}

struct ResizeAxis {
    std::vector<std::size_t> i0, i1;
    std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

ResizeAxis resize_axis(std::size_t in, std::size_t out) {
    ResizeAxis a;
    a.i0.resize(out);
    a.i1.resize(out);
    a.w1.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        std::size_t lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        a.i0[o] = lo;
        a.i1[o] = std::min(lo + 1, in - 1);
        a.w1[o] = src - static_cast<double>(lo);
    }
    return a;
}

std::size_t reflect_index(std::size_t i, std::size_t n) {
    if (i < n) return i;
    return 2 * (n - 1) - i;
}

DenseArray map_values(const DenseArray& a, double (*fn)(double)) {
    DenseArray out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Array kernels
// ---------------------------------------------------------------------------

DenseArray conv2d(const DenseArray& input, const DenseArray& kernel, std::size_t padding) {
    const auto g = conv_geometry(input, kernel, padding);
    DenseArray out({g.c_out, g.out_h, g.out_w});
    conv2d_forward_into(g, input.data().data(), kernel.data().data(), out.data().data());
    return out;
}

DenseArray conv2d(const DenseArray& input, const DenseArray& kernel, const DenseArray& bias, std::size_t padding) {
    const auto g = conv_geometry(input, kernel, padding);
    if (bias.size() != g.c_out) throw ShapeError("conv2d: bias length must equal output channels");
    DenseArray out({g.c_out, g.out_h, g.out_w});
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t co = 0; co < g.c_out; ++co) {
        std::fill_n(out.data().begin() + static_cast<std::ptrdiff_t>(co * plane), plane, bias[co]);
    }
    conv2d_forward_into(g, input.data().data(), kernel.data().data(), out.data().data());
    return out;
}

DenseArray linear(const DenseArray& input, const DenseArray& weight, const DenseArray& bias) {
    require_rank(weight, 2, "linear weight");
    if (input.rank() == 0) throw ShapeError("linear: input must have at least one axis");
    const std::size_t d_in = input.shape().back();
    const std::size_t d_out = weight.extent(0);
    if (weight.extent(1) != d_in) {
        throw ShapeError("linear: input last extent " + std::to_string(d_in) + " vs weight " +
                         shape_string(weight.shape()));
    }
    if (bias.size() != d_out) throw ShapeError("linear: bias length must equal D_out");
    Shape out_shape = input.shape();
    out_shape.back() = d_out;
    DenseArray out(out_shape);
    const std::size_t rows = input.size() / std::max<std::size_t>(d_in, 1);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = input.data().data() + r * d_in;
        for (std::size_t o = 0; o < d_out; ++o) {
            const double* w = weight.data().data() + o * d_in;
            double acc = bias[o];
            for (std::size_t i = 0; i < d_in; ++i) acc += w[i] * x[i];
            out[r * d_out + o] = acc;
        }
    }
    return out;
}

DenseArray softmax(const DenseArray& input, std::size_t axis) {
    const std::size_t n = input.extent(axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= input.shape()[i];
    for (std::size_t i = axis + 1; i < input.rank(); ++i) inner *= input.shape()[i];
    DenseArray out(input.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = input[base];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, input[base + j * inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double e = std::exp(input[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
        }
    }
    return out;
}

DenseArray bilinear_resize(const DenseArray& input, std::size_t out_h, std::size_t out_w) {
    require_rank(input, 3, "bilinear_resize");
    const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    if (h == 0 || w == 0 || out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: empty extent");
    const auto ay = resize_axis(h, out_h);
    const auto ax = resize_axis(w, out_w);
    DenseArray out({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < out_h; ++y) {
            const double wy = ay.w1[y];
            for (std::size_t x = 0; x < out_w; ++x) {
                const double wx = ax.w1[x];
                const double top = (1.0 - wx) * input.at(ch, ay.i0[y], ax.i0[x]) + wx * input.at(ch, ay.i0[y], ax.i1[x]);
                const double bot = (1.0 - wx) * input.at(ch, ay.i1[y], ax.i0[x]) + wx * input.at(ch, ay.i1[y], ax.i1[x]);
                out.at(ch, y, x) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

DenseArray area_downsample(const DenseArray& input, std::size_t factor) {
    require_rank(input, 3, "area_downsample");
    const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    if (factor == 0 || h % factor != 0 || w % factor != 0) {
        throw ShapeError("area_downsample: factor " + std::to_string(factor) + " does not divide " +
                         std::to_string(h) + "x" + std::to_string(w));
    }
    const std::size_t oh = h / factor, ow = w / factor;
    const double norm = 1.0 / static_cast<double>(factor * factor);
    DenseArray out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (std::size_t dy = 0; dy < factor; ++dy) {
                    for (std::size_t dx = 0; dx < factor; ++dx) acc += input.at(ch, y * factor + dy, x * factor + dx);
                }
                out.at(ch, y, x) = acc * norm;
            }
        }
    }
    return out;
}

DenseArray reflect_pad(const DenseArray& input, std::size_t bottom, std::size_t right) {
    require_rank(input, 3, "reflect_pad");
    const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    if ((bottom > 0 && bottom >= h) || (right > 0 && right >= w)) {
        throw ShapeError("reflect_pad: padding must be smaller than the extent");
    }
    DenseArray out({c, h + bottom, w + right});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h + bottom; ++y) {
            for (std::size_t x = 0; x < w + right; ++x) {
                out.at(ch, y, x) = input.at(ch, reflect_index(y, h), reflect_index(x, w));
            }
        }
    }
    return out;
}

DenseArray crop(const DenseArray& input, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    require_rank(input, 3, "crop");
    if (y0 + h > input.extent(1) || x0 + w > input.extent(2)) throw ShapeError("crop: window outside input");
    const std::size_t c = input.extent(0);
    DenseArray out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) out.at(ch, y, x) = input.at(ch, y0 + y, x0 + x);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable ops
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (auto& in : self.inputs) {
            if (in->requires_grad) in->accumulate(self.grad);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
        if (self.inputs[1]->requires_grad) {
            Node& bn = *self.inputs[1];
            bn.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        Node& an = *self.inputs[0];
        Node& bn = *self.inputs[1];
        if (an.requires_grad) {
            an.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] * bn.value[i];
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] += self.grad[i] * an.value[i];
        }
    });
}

Var scale(const Var& a, double factor) {
    DenseArray out = a.value();
    for (double& v : out.data()) v *= factor;
    return make_result(std::move(out), {a}, [factor](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += factor * self.grad[i];
    });
}

Var sum(const Var& a) {
    double total = 0.0;
    for (double v : a.value().data()) total += v;
    return make_result(DenseArray::scalar(total), {a}, [](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        const double g = self.grad[0];
        for (double& v : an.grad.data()) v += g;
    });
}

Var mean(const Var& a) {
    if (a.value().size() == 0) throw ShapeError("mean of empty array");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mse_loss(const Var& prediction, const Var& target) {
    require_same_shape(prediction.value(), target.value(), "mse_loss");
    const std::size_t n = prediction.value().size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = prediction.value()[i] - target.value()[i];
        total += d * d;
    }
    return make_result(DenseArray::scalar(total / static_cast<double>(n)), {prediction, target}, [n](Node& self) {
        Node& p = *self.inputs[0];
        Node& t = *self.inputs[1];
        const double g = self.grad[0] * 2.0 / static_cast<double>(n);
        if (p.requires_grad) {
            p.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) p.grad[i] += g * (p.value[i] - t.value[i]);
        }
        if (t.requires_grad) {
            t.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) t.grad[i] -= g * (p.value[i] - t.value[i]);
        }
    });
}

Var l1_loss(const Var& prediction, const Var& target) {
    require_same_shape(prediction.value(), target.value(), "l1_loss");
    const std::size_t n = prediction.value().size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::abs(prediction.value()[i] - target.value()[i]);
    return make_result(DenseArray::scalar(total / static_cast<double>(n)), {prediction, target}, [n](Node& self) {
        Node& p = *self.inputs[0];
        Node& t = *self.inputs[1];
        const double g = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = p.value[i] - t.value[i];
            const double s = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
            if (p.requires_grad) {
                p.ensure_grad();
                p.grad[i] += s;
            }
            if (t.requires_grad) {
                t.ensure_grad();
                t.grad[i] -= s;
            }
        }
    });
}

Var relu(const Var& a) {
    DenseArray out = map_values(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
    return make_result(std::move(out), {a}, [](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (an.value[i] > 0.0) an.grad[i] += self.grad[i];
        }
    });
}

Var sigmoid(const Var& a) {
    DenseArray out = map_values(a.value(), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    return make_result(std::move(out), {a}, [](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = self.value[i];
            an.grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Var silu(const Var& a) {
    DenseArray out = map_values(a.value(), [](double v) { return v / (1.0 + std::exp(-v)); });
    return make_result(std::move(out), {a}, [](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double x = an.value[i];
            const double s = 1.0 / (1.0 + std::exp(-x));
            an.grad[i] += self.grad[i] * s * (1.0 + x * (1.0 - s));
        }
    });
}

Var softmax(const Var& a, std::size_t axis) {
    DenseArray out = softmax(a.value(), axis);
    return make_result(std::move(out), {a}, [axis](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        const Shape& shape = self.value.shape();
        const std::size_t n = shape[axis];
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
        for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t idx = base + j * inner;
                    an.grad[idx] += self.value[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

Var linear(const Var& input, const Var& weight, const std::optional<Var>& bias) {
    const std::size_t d_out = weight.value().rank() == 2 ? weight.extent(0) : 0;
    DenseArray out = bias ? linear(input.value(), weight.value(), bias->value())
                          : linear(input.value(), weight.value(), DenseArray({d_out}));
    std::vector<Var> inputs{input, weight};
    if (bias) inputs.push_back(*bias);
    return make_result(std::move(out), inputs, [](Node& self) {
        Node& x = *self.inputs[0];
        Node& w = *self.inputs[1];
        const std::size_t d_out = w.value.extent(0);
        const std::size_t d_in = w.value.extent(1);
        const std::size_t rows = x.value.size() / std::max<std::size_t>(d_in, 1);
        if (x.requires_grad) {
            x.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double* gx = x.grad.data().data() + r * d_in;
                for (std::size_t o = 0; o < d_out; ++o) {
                    const double g = self.grad[r * d_out + o];
                    const double* wr = w.value.data().data() + o * d_in;
                    for (std::size_t i = 0; i < d_in; ++i) gx[i] += g * wr[i];
                }
            }
        }
        if (w.requires_grad) {
            w.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xr = x.value.data().data() + r * d_in;
                for (std::size_t o = 0; o < d_out; ++o) {
                    const double g = self.grad[r * d_out + o];
                    double* gw = w.grad.data().data() + o * d_in;
                    for (std::size_t i = 0; i < d_in; ++i) gw[i] += g * xr[i];
                }
            }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
            Node& b = *self.inputs[2];
            b.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t o = 0; o < d_out; ++o) b.grad[o] += self.grad[r * d_out + o];
            }
        }
    });
}

Var layer_norm(const Var& input, const Var& gamma, const Var& beta, double eps) {
    const DenseArray& x = input.value();
    if (x.rank() == 0) throw ShapeError("layer_norm: input must have at least one axis");
    const std::size_t d = x.shape().back();
    if (gamma.value().size() != d || beta.value().size() != d) {
        throw ShapeError("layer_norm: scale/shift length must equal the normalized extent");
    }
    const std::size_t rows = x.size() / d;
    DenseArray out(x.shape());
    DenseArray xhat(x.shape());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i) {
            const double h = (xr[i] - mu) * inv_std[r];
            xhat[r * d + i] = h;
            out[r * d + i] = gamma.value()[i] * h + beta.value()[i];
        }
    }
    return make_result(std::move(out), {input, gamma, beta},
                       [xhat = std::move(xhat), inv_std = std::move(inv_std), d, rows](Node& self) {
        Node& xn = *self.inputs[0];
        Node& gn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        if (gn.requires_grad) gn.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        if (xn.requires_grad) xn.ensure_grad();
        std::vector<double> gh(d);
        for (std::size_t r = 0; r < rows; ++r) {
            double mean_gh = 0.0, mean_ghh = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double g = self.grad[r * d + i];
                const double h = xhat[r * d + i];
                if (gn.requires_grad) gn.grad[i] += g * h;
                if (bn.requires_grad) bn.grad[i] += g;
                gh[i] = g * gn.value[i];
                mean_gh += gh[i];
                mean_ghh += gh[i] * h;
            }
            if (!xn.requires_grad) continue;
            mean_gh /= static_cast<double>(d);
            mean_ghh /= static_cast<double>(d);
            for (std::size_t i = 0; i < d; ++i) {
                xn.grad[r * d + i] += inv_std[r] * (gh[i] - mean_gh - xhat[r * d + i] * mean_ghh);
            }
        }
    });
}

Var conv2d(const Var& input, const Var& kernel, const std::optional<Var>& bias, std::size_t padding) {
    DenseArray out = bias ? conv2d(input.value(), kernel.value(), bias->value(), padding)
                          : conv2d(input.value(), kernel.value(), padding);
    std::vector<Var> inputs{input, kernel};
    if (bias) inputs.push_back(*bias);
    return make_result(std::move(out), inputs, [padding](Node& self) {
        Node& xn = *self.inputs[0];
        Node& kn = *self.inputs[1];
        const auto g = conv_geometry(xn.value, kn.value, padding);
        const double* gout = self.grad.data().data();
        if (xn.requires_grad) {
            xn.ensure_grad();
            double* gin = xn.grad.data().data();
            const double* ker = kn.value.data().data();
            for (std::size_t co = 0; co < g.c_out; ++co) {
                const double* gplane = gout + co * g.out_h * g.out_w;
                for (std::size_t ci = 0; ci < g.c_in; ++ci) {
                    double* dst = gin + ci * g.h * g.w;
                    for (std::size_t ky = 0; ky < g.k; ++ky) {
                        for (std::size_t kx = 0; kx < g.k; ++kx) {
                            const double wv = ker[((co * g.c_in + ci) * g.k + ky) * g.k + kx];
                            if (wv == 0.0) continue;
                            for_each_tap_row(g, ky, kx, [&](std::size_t oy, std::size_t iy, std::size_t ox,
                                                            std::size_t ix, std::size_t n) {
                                const double* go = gplane + oy * g.out_w + ox;
                                double* d = dst + iy * g.w + ix;
                                for (std::size_t j = 0; j < n; ++j) d[j] += wv * go[j];
                            });
                        }
                    }
                }
            }
        }
        if (kn.requires_grad) {
            kn.ensure_grad();
            const double* in = xn.value.data().data();
            double* gk = kn.grad.data().data();
            for (std::size_t co = 0; co < g.c_out; ++co) {
                const double* gplane = gout + co * g.out_h * g.out_w;
                for (std::size_t ci = 0; ci < g.c_in; ++ci) {
                    const double* src = in + ci * g.h * g.w;
                    for (std::size_t ky = 0; ky < g.k; ++ky) {
                        for (std::size_t kx = 0; kx < g.k; ++kx) {
                            double acc = 0.0;
                            for_each_tap_row(g, ky, kx, [&](std::size_t oy, std::size_t iy, std::size_t ox,
                                                            std::size_t ix, std::size_t n) {
                                const double* go = gplane + oy * g.out_w + ox;
                                const double* s = src + iy * g.w + ix;
                                for (std::size_t j = 0; j < n; ++j) acc += go[j] * s[j];
                            });
                            gk[((co * g.c_in + ci) * g.k + ky) * g.k + kx] += acc;
                        }
                    }
                }
            }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
            Node& bn = *self.inputs[2];
            bn.ensure_grad();
            const std::size_t plane = g.out_h * g.out_w;
            for (std::size_t co = 0; co < g.c_out; ++co) {
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += gout[co * plane + i];
                bn.grad[co] += acc;
            }
        }
    });
}

Var bilinear_resize(const Var& input, std::size_t out_h, std::size_t out_w) {
    DenseArray out = bilinear_resize(input.value(), out_h, out_w);
    return make_result(std::move(out), {input}, [out_h, out_w](Node& self) {
        Node& xn = *self.inputs[0];
        xn.ensure_grad();
        const std::size_t c = xn.value.extent(0), h = xn.value.extent(1), w = xn.value.extent(2);
        const auto ay = resize_axis(h, out_h);
        const auto ax = resize_axis(w, out_w);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < out_h; ++y) {
                const double wy = ay.w1[y];
                for (std::size_t x = 0; x < out_w; ++x) {
                    const double wx = ax.w1[x];
                    const double g = self.grad.at(ch, y, x);
                    xn.grad.at(ch, ay.i0[y], ax.i0[x]) += (1.0 - wy) * (1.0 - wx) * g;
                    xn.grad.at(ch, ay.i0[y], ax.i1[x]) += (1.0 - wy) * wx * g;
                    xn.grad.at(ch, ay.i1[y], ax.i0[x]) += wy * (1.0 - wx) * g;
                    xn.grad.at(ch, ay.i1[y], ax.i1[x]) += wy * wx * g;
                }
            }
        }
    });
}

Var area_downsample(const Var& input, std::size_t factor) {
    DenseArray out = area_downsample(input.value(), factor);
    return make_result(std::move(out), {input}, [factor](Node& self) {
        Node& xn = *self.inputs[0];
        xn.ensure_grad();
        const double norm = 1.0 / static_cast<double>(factor * factor);
        const std::size_t c = self.value.extent(0), oh = self.value.extent(1), ow = self.value.extent(2);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    const double g = self.grad.at(ch, y, x) * norm;
                    for (std::size_t dy = 0; dy < factor; ++dy) {
                        for (std::size_t dx = 0; dx < factor; ++dx) xn.grad.at(ch, y * factor + dy, x * factor + dx) += g;
                    }
                }
            }
        }
    });
}

Var reshape(const Var& a, Shape shape) {
    DenseArray out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), {a}, [](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i];
    });
}

Var slice_channels(const Var& a, std::size_t begin, std::size_t count) {
    const DenseArray& x = a.value();
    require_rank(x, 3, "slice_channels");
    if (begin + count > x.extent(0)) throw ShapeError("slice_channels: range exceeds channel count");
    const std::size_t plane = x.extent(1) * x.extent(2);
    DenseArray out({count, x.extent(1), x.extent(2)});
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(begin * plane), count * plane, out.data().begin());
    return make_result(std::move(out), {a}, [begin, plane](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        double* dst = an.grad.data().data() + begin * plane;
        for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
    });
}

Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const std::size_t h = parts[0].extent(1), w = parts[0].extent(2);
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_rank(p.value(), 3, "concat_channels");
        if (p.extent(1) != h || p.extent(2) != w) throw ShapeError("concat_channels: spatial extents differ");
        total += p.extent(0);
    }
    DenseArray out({total, h, w});
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.value().size();
    }
    return make_result(std::move(out), parts, [](Node& self) {
        std::size_t off = 0;
        for (auto& in : self.inputs) {
            const std::size_t n = in->value.size();
            if (in->requires_grad) {
                in->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) in->grad[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

Var to_channels_last(const Var& a) {
    const DenseArray& x = a.value();
    require_rank(x, 3, "to_channels_last");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    DenseArray out({h, w, c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < h * w; ++p) out[p * c + ch] = x[ch * h * w + p];
    }
    return make_result(std::move(out), {a}, [c, h, w](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < h * w; ++p) an.grad[ch * h * w + p] += self.grad[p * c + ch];
        }
    });
}

Var to_channels_first(const Var& a) {
    const DenseArray& x = a.value();
    require_rank(x, 3, "to_channels_first");
    const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
    DenseArray out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < h * w; ++p) out[ch * h * w + p] = x[p * c + ch];
    }
    return make_result(std::move(out), {a}, [c, h, w](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < h * w; ++p) an.grad[p * c + ch] += self.grad[ch * h * w + p];
        }
    });
}

Var spatial_mean(const Var& a) {
    const DenseArray& x = a.value();
    require_rank(x, 3, "spatial_mean");
    const std::size_t c = x.extent(0), plane = x.extent(1) * x.extent(2);
    DenseArray out({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += x[ch * plane + p];
        out[ch] = acc / static_cast<double>(plane);
    }
    return make_result(std::move(out), {a}, [c, plane](Node& self) {
        Node& an = *self.inputs[0];
        an.ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double g = self.grad[ch] / static_cast<double>(plane);
            for (std::size_t p = 0; p < plane; ++p) an.grad[ch * plane + p] += g;
        }
    });
}

Var scale_channels(const Var& a, const Var& gains) {
    const DenseArray& x = a.value();
    require_rank(x, 3, "scale_channels");
    const std::size_t c = x.extent(0), plane = x.extent(1) * x.extent(2);
    if (gains.value().size() != c) throw ShapeError("scale_channels: one gain per channel required");
    DenseArray out(x.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < plane; ++p) out[ch * plane + p] = x[ch * plane + p] * gains.value()[ch];
    }
    return make_result(std::move(out), {a, gains}, [c, plane](Node& self) {
        Node& xn = *self.inputs[0];
        Node& gn = *self.inputs[1];
        if (xn.requires_grad) xn.ensure_grad();
        if (gn.requires_grad) gn.ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i = ch * plane + p;
                if (xn.requires_grad) xn.grad[i] += self.grad[i] * gn.value[ch];
                acc += self.grad[i] * xn.value[i];
            }
            if (gn.requires_grad) gn.grad[ch] += acc;
        }
    });
}

Var add_channel_bias(const Var& a, const Var& bias) {
    const DenseArray& x = a.value();
    require_rank(x, 3, "add_channel_bias");
    const std::size_t c = x.extent(0), plane = x.extent(1) * x.extent(2);
    if (bias.value().size() != c) throw ShapeError("add_channel_bias: one bias per channel required");
    DenseArray out = x;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < plane; ++p) out[ch * plane + p] += bias.value()[ch];
    }
    return make_result(std::move(out), {a, bias}, [c, plane](Node& self) {
        Node& xn = *self.inputs[0];
        Node& bn = *self.inputs[1];
        if (xn.requires_grad) xn.accumulate(self.grad);
        if (bn.requires_grad) {
            bn.ensure_grad();
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t p = 0; p < plane; ++p) acc += self.grad[ch * plane + p];
                bn.grad[ch] += acc;
            }
        }
    });
}

namespace {

// Index of source element (c, y, x) inside the space-to-depth output.
std::size_t s2d_index(std::size_t c, std::size_t y, std::size_t x, std::size_t f, std::size_t oh, std::size_t ow) {
    const std::size_t oc = (c * f + y % f) * f + x % f;
    return (oc * oh + y / f) * ow + x / f;
}

void check_s2d(const DenseArray& a, std::size_t factor) {
    require_rank(a, 3, "space_to_depth");
    if (factor == 0 || a.extent(1) % factor || a.extent(2) % factor) {
        throw ShapeError("space_to_depth: factor must divide spatial extents");
    }
}

}  // namespace

DenseArray space_to_depth(const DenseArray& a, std::size_t factor) {
    check_s2d(a, factor);
    const std::size_t c = a.extent(0), h = a.extent(1), w = a.extent(2);
    const std::size_t oh = h / factor, ow = w / factor;
    DenseArray out({c * factor * factor, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) out[s2d_index(ch, y, x, factor, oh, ow)] = a.at(ch, y, x);
        }
    }
    return out;
}

DenseArray depth_to_space(const DenseArray& a, std::size_t factor) {
    require_rank(a, 3, "depth_to_space");
    if (factor == 0 || a.extent(0) % (factor * factor)) throw ShapeError("depth_to_space: channels not divisible");
    const std::size_t c = a.extent(0) / (factor * factor), oh = a.extent(1), ow = a.extent(2);
    DenseArray out({c, oh * factor, ow * factor});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh * factor; ++y) {
            for (std::size_t x = 0; x < ow * factor; ++x) out.at(ch, y, x) = a[s2d_index(ch, y, x, factor, oh, ow)];
        }
    }
    return out;
}

Var space_to_depth(const Var& a, std::size_t factor) {
    return make_result(space_to_depth(a.value(), factor), {a}, [factor](Node& self) {
        self.inputs[0]->accumulate(depth_to_space(self.grad, factor));
    });
}

Var depth_to_space(const Var& a, std::size_t factor) {
    return make_result(depth_to_space(a.value(), factor), {a}, [factor](Node& self) {
        self.inputs[0]->accumulate(space_to_depth(self.grad, factor));
    });
}

}  // namespace spectragen
