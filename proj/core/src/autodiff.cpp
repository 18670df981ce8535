#include "hallucinet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hallucinet {

namespace {

Tape& tape_of(Var a, Var b) {
    if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape) {
        throw std::invalid_argument("operands must be recorded on the same tape");
    }
    return *a.tape;
}

Tape& tape_of(Var a) {
    if (a.tape == nullptr) throw std::invalid_argument("operand is not recorded on a tape");
    return *a.tape;
}

}  // namespace

Var Tape::leaf(Parameter& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    return {this, append(std::move(n))};
}

Var Tape::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    return {this, append(std::move(n))};
}

int Tape::append(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Tape::value(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw std::invalid_argument("variable does not belong to this tape");
    }
    return nodes_[static_cast<size_t>(v.id)].value;
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

void Tape::accumulate(int id, const std::vector<float>& contribution) {
    Tensor& g = grad_buffer(id);
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += contribution[i];
}

void Tape::clear() { nodes_.clear(); }

void Tape::backward(Var loss) {
    if (nodes_.empty()) throw std::runtime_error("backward() called without a recorded forward pass");
    if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size())) {
        throw std::runtime_error("backward() loss was not recorded on this tape");
    }
    Node& root = nodes_[static_cast<size_t>(loss.id)];
    if (root.value.numel() != 1) {
        throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                    shape_to_string(root.value.shape));
    }

    // Mark the subgraph that actually feeds the loss.
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int> stack{loss.id};
    reachable[static_cast<size_t>(loss.id)] = 1;
    while (!stack.empty()) {
        int id = stack.back();
        stack.pop_back();
        for (int p : nodes_[static_cast<size_t>(id)].parents) {
            if (p >= 0 && !reachable[static_cast<size_t>(p)]) {
                reachable[static_cast<size_t>(p)] = 1;
                stack.push_back(p);
            }
        }
    }

    grad_buffer(loss.id).data[0] = 1.0f;

    // Parents always precede children, so one reverse sweep suffices.
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!reachable[static_cast<size_t>(id)] || n.grad.data.empty()) continue;
        if (n.backprop) n.backprop(*this, n);
        if (n.param != nullptr && !n.param->frozen) {
            for (size_t i = 0; i < n.grad.data.size(); ++i) n.param->grad.data[i] += n.grad.data[i];
        }
    }
}

// ---- op implementations ----------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_to_string(av.shape) + " vs " +
                                    shape_to_string(bv.shape));
    }
    const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const float aip = av.at(i, p);
            if (aip == 0.0f) continue;
            const float* brow = bv.data.data() + static_cast<size_t>(p) * n;
            float* orow = out.data.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {a.id, b.id};
    node.backprop = [m, k, n](Tape& tp, Tape::Node& self) {
        const Tensor& av2 = tp.node(self.parents[0]).value;
        const Tensor& bv2 = tp.node(self.parents[1]).value;
        Tensor& ga = tp.grad_buffer(self.parents[0]);
        Tensor& gb = tp.grad_buffer(self.parents[1]);
        // dA = G * B^T, dB = A^T * G
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                const float g = self.grad.at(i, j);
                if (g == 0.0f) continue;
                for (int p = 0; p < k; ++p) {
                    ga.at(i, p) += g * bv2.at(p, j);
                    gb.at(p, j) += g * av2.at(i, p);
                }
            }
        }
    };
    return {&t, t.append(std::move(node))};
}

Var transpose(Var a) {
    Tape& t = tape_of(a);
    const Tensor& av = t.value(a);
    if (av.rank() != 2) throw std::invalid_argument("transpose: expected rank-2 tensor, got " + shape_to_string(av.shape));
    const int r = av.shape[0], c = av.shape[1];
    Tensor out = Tensor::zeros({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {a.id, -1};
    node.backprop = [r, c](Tape& tp, Tape::Node& self) {
        Tensor& ga = tp.grad_buffer(self.parents[0]);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) ga.at(i, j) += self.grad.at(j, i);
    };
    return {&t, t.append(std::move(node))};
}

namespace {

struct ConvDims {
    int batch, c_in, h, w, c_out, kh, kw, oh, ow;
    bool batched;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, int stride, int padding) {
    if (stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");
    if (padding < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
    if (kernels.rank() != 4) {
        throw std::invalid_argument("conv2d: kernels must be rank 4, got " + shape_to_string(kernels.shape));
    }
    ConvDims d{};
    d.batched = input.rank() == 4;
    if (!d.batched && input.rank() != 3) {
        throw std::invalid_argument("conv2d: input must be rank 3 or 4, got " + shape_to_string(input.shape));
    }
    d.batch = d.batched ? input.shape[0] : 1;
    d.c_in = input.shape[d.batched ? 1 : 0];
    d.h = input.shape[d.batched ? 2 : 1];
    d.w = input.shape[d.batched ? 3 : 2];
    d.c_out = kernels.shape[0];
    d.kh = kernels.shape[2];
    d.kw = kernels.shape[3];
    if (kernels.shape[1] != d.c_in) {
        throw std::invalid_argument("conv2d: kernel channels " + shape_to_string(kernels.shape) +
                                    " do not match input " + shape_to_string(input.shape));
    }
    if (d.kh > d.h + 2 * padding || d.kw > d.w + 2 * padding) {
        throw std::invalid_argument("conv2d: kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
                                    " larger than padded input " + std::to_string(d.h + 2 * padding) + "x" +
                                    std::to_string(d.w + 2 * padding));
    }
    d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
    d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
    return d;
}

}  // namespace

Var conv2d(Var input, Var kernels, int stride, int padding) {
    Tape& t = tape_of(input, kernels);
    const Tensor& x = t.value(input);
    const Tensor& k = t.value(kernels);
    const ConvDims d = conv_dims(x, k, stride, padding);

    std::vector<int> out_shape = d.batched ? std::vector<int>{d.batch, d.c_out, d.oh, d.ow}
                                           : std::vector<int>{d.c_out, d.oh, d.ow};
    Tensor out = Tensor::zeros(out_shape);

    const size_t in_img = static_cast<size_t>(d.c_in) * d.h * d.w;
    const size_t out_img = static_cast<size_t>(d.c_out) * d.oh * d.ow;
    for (int b = 0; b < d.batch; ++b) {
        const float* xin = x.data.data() + b * in_img;
        float* xout = out.data.data() + b * out_img;
        for (int o = 0; o < d.c_out; ++o) {
            for (int i = 0; i < d.oh; ++i) {
                for (int j = 0; j < d.ow; ++j) {
                    float acc = 0.0f;
                    for (int c = 0; c < d.c_in; ++c) {
                        for (int u = 0; u < d.kh; ++u) {
                            const int y = i * stride + u - padding;
                            if (y < 0 || y >= d.h) continue;
                            for (int v = 0; v < d.kw; ++v) {
                                const int xcol = j * stride + v - padding;
                                if (xcol < 0 || xcol >= d.w) continue;
                                acc += xin[(static_cast<size_t>(c) * d.h + y) * d.w + xcol] *
                                       k.data[((static_cast<size_t>(o) * d.c_in + c) * d.kh + u) * d.kw + v];
                            }
                        }
                    }
                    xout[(static_cast<size_t>(o) * d.oh + i) * d.ow + j] = acc;
                }
            }
        }
    }

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {input.id, kernels.id};
    node.backprop = [d, stride, padding](Tape& tp, Tape::Node& self) {
        const Tensor& x2 = tp.node(self.parents[0]).value;
        const Tensor& k2 = tp.node(self.parents[1]).value;
        Tensor& gx = tp.grad_buffer(self.parents[0]);
        Tensor& gk = tp.grad_buffer(self.parents[1]);
        const size_t in_img = static_cast<size_t>(d.c_in) * d.h * d.w;
        const size_t out_img = static_cast<size_t>(d.c_out) * d.oh * d.ow;
        for (int b = 0; b < d.batch; ++b) {
            const float* xin = x2.data.data() + b * in_img;
            float* gxin = gx.data.data() + b * in_img;
            const float* gout = self.grad.data.data() + b * out_img;
            for (int o = 0; o < d.c_out; ++o) {
                for (int i = 0; i < d.oh; ++i) {
                    for (int j = 0; j < d.ow; ++j) {
                        const float g = gout[(static_cast<size_t>(o) * d.oh + i) * d.ow + j];
                        if (g == 0.0f) continue;
                        for (int c = 0; c < d.c_in; ++c) {
                            for (int u = 0; u < d.kh; ++u) {
                                const int y = i * stride + u - padding;
                                if (y < 0 || y >= d.h) continue;
                                for (int v = 0; v < d.kw; ++v) {
                                    const int xcol = j * stride + v - padding;
                                    if (xcol < 0 || xcol >= d.w) continue;
                                    const size_t xi = (static_cast<size_t>(c) * d.h + y) * d.w + xcol;
                                    const size_t ki = ((static_cast<size_t>(o) * d.c_in + c) * d.kh + u) * d.kw + v;
                                    gxin[xi] += g * k2.data[ki];
                                    gk.data[ki] += g * xin[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    return {&t, t.append(std::move(node))};
}

Var relu(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    Tensor out = xv;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {x.id, -1};
    node.backprop = [](Tape& tp, Tape::Node& self) {
        const Tensor& xv2 = tp.node(self.parents[0]).value;
        Tensor& gx = tp.grad_buffer(self.parents[0]);
        for (size_t i = 0; i < gx.data.size(); ++i) {
            if (xv2.data[i] > 0.0f) gx.data[i] += self.grad.data[i];
        }
    };
    return {&t, t.append(std::move(node))};
}

Var tempered_softmax(Var z, float temperature) {
    Tape& t = tape_of(z);
    if (!(temperature > 0.0f)) {
        throw std::invalid_argument("tempered_softmax: temperature must be positive, got " +
                                    std::to_string(temperature));
    }
    const Tensor& zv = t.value(z);
    if (zv.rank() != 1 && zv.rank() != 2) {
        throw std::invalid_argument("tempered_softmax: expected rank 1 or 2, got " + shape_to_string(zv.shape));
    }
    const int rows = zv.rank() == 2 ? zv.shape[0] : 1;
    const int cols = zv.rank() == 2 ? zv.shape[1] : zv.shape[0];

    Tensor out = Tensor::zeros(zv.shape);
    for (int r = 0; r < rows; ++r) {
        const float* zi = zv.data.data() + static_cast<size_t>(r) * cols;
        float* oi = out.data.data() + static_cast<size_t>(r) * cols;
        float zmax = zi[0];
        for (int c = 1; c < cols; ++c) zmax = std::max(zmax, zi[c]);
        float denom = 0.0f;
        for (int c = 0; c < cols; ++c) {
            oi[c] = std::exp((zi[c] - zmax) / temperature);
            denom += oi[c];
        }
        for (int c = 0; c < cols; ++c) oi[c] /= denom;
    }

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {z.id, -1};
    node.backprop = [rows, cols, temperature](Tape& tp, Tape::Node& self) {
        Tensor& gz = tp.grad_buffer(self.parents[0]);
        // dz_i = y_i / T * (g_i - sum_j g_j y_j)
        for (int r = 0; r < rows; ++r) {
            const float* y = self.value.data.data() + static_cast<size_t>(r) * cols;
            const float* g = self.grad.data.data() + static_cast<size_t>(r) * cols;
            float dot = 0.0f;
            for (int c = 0; c < cols; ++c) dot += g[c] * y[c];
            float* gzr = gz.data.data() + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) gzr[c] += y[c] / temperature * (g[c] - dot);
        }
    };
    return {&t, t.append(std::move(node))};
}

namespace {

Var elementwise(Var a, Var b, const char* name, float (*fwd)(float, float),
                void (*bwd)(float av, float bv, float g, float& ga, float& gb)) {
    Tape& t = tape_of(a, b);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    check_same_shape(av, bv, name);
    Tensor out = Tensor::zeros(av.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = fwd(av.data[i], bv.data[i]);

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {a.id, b.id};
    node.backprop = [bwd](Tape& tp, Tape::Node& self) {
        const Tensor& av2 = tp.node(self.parents[0]).value;
        const Tensor& bv2 = tp.node(self.parents[1]).value;
        Tensor& ga = tp.grad_buffer(self.parents[0]);
        Tensor& gb = tp.grad_buffer(self.parents[1]);
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            bwd(av2.data[i], bv2.data[i], self.grad.data[i], ga.data[i], gb.data[i]);
        }
    };
    return {&t, t.append(std::move(node))};
}

}  // namespace

Var add(Var a, Var b) {
    return elementwise(
        a, b, "add", [](float x, float y) { return x + y; },
        [](float, float, float g, float& ga, float& gb) {
            ga += g;
            gb += g;
        });
}

Var sub(Var a, Var b) {
    return elementwise(
        a, b, "sub", [](float x, float y) { return x - y; },
        [](float, float, float g, float& ga, float& gb) {
            ga += g;
            gb -= g;
        });
}

Var mul(Var a, Var b) {
    return elementwise(
        a, b, "mul", [](float x, float y) { return x * y; },
        [](float x, float y, float g, float& ga, float& gb) {
            ga += g * y;
            gb += g * x;
        });
}

Var scale(Var a, float c) {
    Tape& t = tape_of(a);
    Tensor out = t.value(a);
    for (float& v : out.data) v *= c;

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {a.id, -1};
    node.backprop = [c](Tape& tp, Tape::Node& self) {
        Tensor& ga = tp.grad_buffer(self.parents[0]);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += c * self.grad.data[i];
    };
    return {&t, t.append(std::move(node))};
}

Var add_rowvec(Var m, Var v) {
    Tape& t = tape_of(m, v);
    const Tensor& mv = t.value(m);
    const Tensor& vv = t.value(v);
    if (mv.rank() != 2 || vv.rank() != 1 || vv.shape[0] != mv.shape[1]) {
        throw std::invalid_argument("add_rowvec: shape mismatch " + shape_to_string(mv.shape) + " vs " +
                                    shape_to_string(vv.shape));
    }
    const int rows = mv.shape[0], cols = mv.shape[1];
    Tensor out = mv;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) += vv.at(c);

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {m.id, v.id};
    node.backprop = [rows, cols](Tape& tp, Tape::Node& self) {
        Tensor& gm = tp.grad_buffer(self.parents[0]);
        Tensor& gv = tp.grad_buffer(self.parents[1]);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                const float g = self.grad.at(r, c);
                gm.at(r, c) += g;
                gv.at(c) += g;
            }
        }
    };
    return {&t, t.append(std::move(node))};
}

Var add_channel_bias(Var x, Var bias) {
    Tape& t = tape_of(x, bias);
    const Tensor& xv = t.value(x);
    const Tensor& bv = t.value(bias);
    const bool batched = xv.rank() == 4;
    if ((xv.rank() != 3 && xv.rank() != 4) || bv.rank() != 1) {
        throw std::invalid_argument("add_channel_bias: shape mismatch " + shape_to_string(xv.shape) + " vs " +
                                    shape_to_string(bv.shape));
    }
    const int batch = batched ? xv.shape[0] : 1;
    const int channels = xv.shape[batched ? 1 : 0];
    const int plane = xv.shape[batched ? 2 : 1] * xv.shape[batched ? 3 : 2];
    if (bv.shape[0] != channels) {
        throw std::invalid_argument("add_channel_bias: bias " + shape_to_string(bv.shape) + " vs channels " +
                                    std::to_string(channels));
    }
    Tensor out = xv;
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c) {
            float* p = out.data.data() + (static_cast<size_t>(b) * channels + c) * plane;
            for (int i = 0; i < plane; ++i) p[i] += bv.at(c);
        }

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {x.id, bias.id};
    node.backprop = [batch, channels, plane](Tape& tp, Tape::Node& self) {
        Tensor& gx = tp.grad_buffer(self.parents[0]);
        Tensor& gb = tp.grad_buffer(self.parents[1]);
        for (int b = 0; b < batch; ++b) {
            for (int c = 0; c < channels; ++c) {
                const float* g = self.grad.data.data() + (static_cast<size_t>(b) * channels + c) * plane;
                float* gxp = gx.data.data() + (static_cast<size_t>(b) * channels + c) * plane;
                float acc = 0.0f;
                for (int i = 0; i < plane; ++i) {
                    gxp[i] += g[i];
                    acc += g[i];
                }
                gb.at(c) += acc;
            }
        }
    };
    return {&t, t.append(std::move(node))};
}

Var reshape(Var x, const std::vector<int>& shape) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    if (shape_numel(shape) != xv.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_to_string(xv.shape) + " as " +
                                    shape_to_string(shape));
    }
    Tape::Node node;
    node.value = Tensor(shape, xv.data);
    node.parents = {x.id, -1};
    node.backprop = [](Tape& tp, Tape::Node& self) {
        Tensor& gx = tp.grad_buffer(self.parents[0]);
        for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += self.grad.data[i];
    };
    return {&t, t.append(std::move(node))};
}

Var concat_cols(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[0] != bv.shape[0]) {
        throw std::invalid_argument("concat_cols: shape mismatch " + shape_to_string(av.shape) + " vs " +
                                    shape_to_string(bv.shape));
    }
    const int rows = av.shape[0], p = av.shape[1], q = bv.shape[1];
    Tensor out = Tensor::zeros({rows, p + q});
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < p; ++c) out.at(r, c) = av.at(r, c);
        for (int c = 0; c < q; ++c) out.at(r, p + c) = bv.at(r, c);
    }

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {a.id, b.id};
    node.backprop = [rows, p, q](Tape& tp, Tape::Node& self) {
        Tensor& ga = tp.grad_buffer(self.parents[0]);
        Tensor& gb = tp.grad_buffer(self.parents[1]);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < p; ++c) ga.at(r, c) += self.grad.at(r, c);
            for (int c = 0; c < q; ++c) gb.at(r, c) += self.grad.at(r, p + c);
        }
    };
    return {&t, t.append(std::move(node))};
}

Var sum(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    double acc = 0.0;
    for (float v : xv.data) acc += v;

    Tape::Node node;
    node.value = Tensor::scalar(static_cast<float>(acc));
    node.parents = {x.id, -1};
    node.backprop = [](Tape& tp, Tape::Node& self) {
        Tensor& gx = tp.grad_buffer(self.parents[0]);
        const float g = self.grad.data[0];
        for (float& v : gx.data) v += g;
    };
    return {&t, t.append(std::move(node))};
}

Var log_clamped(Var x, float eps) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    Tensor out = Tensor::zeros(xv.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::log(std::max(xv.data[i], eps));

    Tape::Node node;
    node.value = std::move(out);
    node.parents = {x.id, -1};
    node.backprop = [eps](Tape& tp, Tape::Node& self) {
        const Tensor& xv2 = tp.node(self.parents[0]).value;
        Tensor& gx = tp.grad_buffer(self.parents[0]);
        for (size_t i = 0; i < gx.data.size(); ++i) {
            if (xv2.data[i] > eps) gx.data[i] += self.grad.data[i] / xv2.data[i];
        }
    };
    return {&t, t.append(std::move(node))};
}

Var detach(Var x) {
    Tape& t = tape_of(x);
    return t.constant(t.value(x));
}

}  // namespace hallucinet
