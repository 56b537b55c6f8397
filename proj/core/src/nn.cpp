#include "isoprune/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "isoprune/linalg.hpp"
#include "isoprune/rng.hpp"

namespace isoprune {

std::string to_string(ArchId arch) {
    switch (arch) {
        case ArchId::MLP7_LINEAR: return "MLP7_LINEAR";
        case ArchId::MLP7_RELU: return "MLP7_RELU";
        case ArchId::LENET5_LINEAR: return "LENET5_LINEAR";
        case ArchId::LENET5_RELU: return "LENET5_RELU";
    }
    throw std::invalid_argument("to_string: unknown arch id");
}

ArchId parse_arch(const std::string& name) {
    if (name == "MLP7_LINEAR") return ArchId::MLP7_LINEAR;
    if (name == "MLP7_RELU") return ArchId::MLP7_RELU;
    if (name == "LENET5_LINEAR") return ArchId::LENET5_LINEAR;
    if (name == "LENET5_RELU") return ArchId::LENET5_RELU;
    throw std::invalid_argument("parse_arch: unknown architecture \"" + name + "\"");
}

std::vector<std::size_t> Network::parameterized_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].parameterized()) idx.push_back(i);
    }
    return idx;
}

std::size_t Network::parameter_count() const {
    std::size_t total = 0;
    for (const Tensor& p : params) total += p.size();
    return total;
}

namespace {

constexpr std::size_t kMlpHiddenWidth = 100;

void add_dense(Network& net, std::size_t in, std::size_t out) {
    LayerSpec spec;
    spec.kind = LayerKind::dense;
    spec.in_features = in;
    spec.out_features = out;
    net.layers.push_back(spec);
    net.params.emplace_back(Shape{out, in});
}

void add_conv(Network& net, std::size_t in_ch, std::size_t out_ch) {
    LayerSpec spec;
    spec.kind = LayerKind::conv2d;
    spec.in_channels = in_ch;
    spec.out_channels = out_ch;
    net.layers.push_back(spec);
    net.params.emplace_back(Shape{out_ch, in_ch, spec.kernel_h, spec.kernel_w});
}

void add_plain(Network& net, LayerKind kind) {
    LayerSpec spec;
    spec.kind = kind;
    net.layers.push_back(spec);
    net.params.emplace_back();
}

}  // namespace

Network build_network(ArchId arch) {
    Network net;
    net.arch_id = arch;
    const bool with_relu = arch == ArchId::MLP7_RELU || arch == ArchId::LENET5_RELU;

    switch (arch) {
        case ArchId::MLP7_LINEAR:
        case ArchId::MLP7_RELU: {
            std::vector<std::size_t> widths{784};
            for (int i = 0; i < 6; ++i) widths.push_back(kMlpHiddenWidth);
            widths.push_back(10);
            for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
                add_dense(net, widths[l], widths[l + 1]);
                if (with_relu && l + 2 < widths.size()) add_plain(net, LayerKind::relu);
            }
            break;
        }
        case ArchId::LENET5_LINEAR:
        case ArchId::LENET5_RELU: {
            add_conv(net, 1, 6);
            if (with_relu) add_plain(net, LayerKind::relu);
            add_plain(net, LayerKind::avgpool2x2);
            add_conv(net, 6, 16);
            if (with_relu) add_plain(net, LayerKind::relu);
            add_plain(net, LayerKind::avgpool2x2);
            add_plain(net, LayerKind::flatten);
            add_dense(net, 16 * 4 * 4, 120);
            if (with_relu) add_plain(net, LayerKind::relu);
            add_dense(net, 120, 84);
            if (with_relu) add_plain(net, LayerKind::relu);
            add_dense(net, 84, 10);
            break;
        }
    }
    return net;
}

namespace {

// Layers feeding a relu carry the standard sqrt(2) gain; without it the
// rectifier halves the signal energy at every layer and the end-to-end
// Jacobian of a deep relu net collapses toward zero instead of sitting
// around 1.
bool feeds_relu(const Network& net, std::size_t layer) {
    for (std::size_t j = layer + 1; j < net.layers.size(); ++j) {
        if (net.layers[j].kind == LayerKind::relu) return true;
        if (net.layers[j].parameterized()) return false;
    }
    return false;
}

}  // namespace

void init_orthogonal(Network& net, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i : net.parameterized_indices()) {
        const Tensor& w = net.params[i];
        const std::size_t out = w.dim(0);
        const std::size_t in = w.size() / out;
        const double gain = feeds_relu(net, i) ? std::sqrt(2.0) : 1.0;

        // QR always runs along the smaller dimension; the sample is tall.
        const std::size_t tall = std::max(out, in);
        const std::size_t thin = std::min(out, in);
        Tensor gauss({tall, thin});
        for (std::size_t r = 0; r < tall; ++r) {
            for (std::size_t c = 0; c < thin; ++c) {
                gauss(r, c) = rng.next_gaussian();
            }
        }
        QrResult qr = qr_decompose(gauss);
        for (std::size_t c = 0; c < thin; ++c) {
            if (qr.r(c, c) < 0.0) {
                for (std::size_t r = 0; r < tall; ++r) qr.q(r, c) = -qr.q(r, c);
            }
        }

        Tensor flat = out <= in ? qr.q.transposed() : std::move(qr.q);
        if (gain != 1.0) {
            for (std::size_t k = 0; k < flat.size(); ++k) flat(k) *= gain;
        }
        net.params[i] = flat.reshaped(w.shape());
    }
}

namespace {

Tensor flatten_to_rows(const Tensor& t) {
    if (t.rank() == 2) return t;
    if (t.rank() == 4) {
        return t.reshaped({t.dim(0), t.dim(1) * t.dim(2) * t.dim(3)});
    }
    throw std::invalid_argument("forward: batch must be rank 2 or rank 4, got shape " +
                                shape_to_string(t.shape()));
}

Tensor dense_forward(const LayerSpec& spec, const Tensor& x, const Tensor& w) {
    if (x.cols() != spec.in_features) {
        throw std::invalid_argument("forward: dense layer expects " +
                                    std::to_string(spec.in_features) + " features, got " +
                                    shape_to_string(x.shape()));
    }
    Tensor y({x.rows(), spec.out_features});
    detail::gemm_nt(x.data(), w.data(), y.data(), x.rows(), spec.in_features,
                    spec.out_features);
    return y;
}

Tensor conv_forward(const LayerSpec& spec, const Tensor& x, const Tensor& w) {
    if (x.rank() != 4 || x.dim(1) != spec.in_channels) {
        throw std::invalid_argument("forward: conv layer expects " +
                                    std::to_string(spec.in_channels) + " channels, got shape " +
                                    shape_to_string(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t in_h = x.dim(2), in_w = x.dim(3);
    if (in_h < spec.kernel_h || in_w < spec.kernel_w) {
        throw std::invalid_argument("forward: conv input " + shape_to_string(x.shape()) +
                                    " smaller than the kernel");
    }
    const std::size_t out_h = in_h - spec.kernel_h + 1;
    const std::size_t out_w = in_w - spec.kernel_w + 1;
    Tensor y({batch, spec.out_channels, out_h, out_w});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
            for (std::size_t oh = 0; oh < out_h; ++oh) {
                for (std::size_t ow = 0; ow < out_w; ++ow) {
                    double acc = 0.0;
                    for (std::size_t ic = 0; ic < spec.in_channels; ++ic) {
                        for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
                            for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                                acc += x(b, ic, oh + kh, ow + kw) * w(oc, ic, kh, kw);
                            }
                        }
                    }
                    y(b, oc, oh, ow) = acc;
                }
            }
        }
    }
    return y;
}

Tensor pool_forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
        throw std::invalid_argument("forward: avgpool2x2 needs rank-4 input with even "
                                    "spatial dims, got shape " +
                                    shape_to_string(x.shape()));
    }
    Tensor y({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
    for (std::size_t b = 0; b < x.dim(0); ++b) {
        for (std::size_t c = 0; c < x.dim(1); ++c) {
            for (std::size_t h = 0; h < y.dim(2); ++h) {
                for (std::size_t w = 0; w < y.dim(3); ++w) {
                    y(b, c, h, w) = 0.25 * (x(b, c, 2 * h, 2 * w) + x(b, c, 2 * h, 2 * w + 1) +
                                            x(b, c, 2 * h + 1, 2 * w) +
                                            x(b, c, 2 * h + 1, 2 * w + 1));
                }
            }
        }
    }
    return y;
}

}  // namespace

std::pair<Tensor, ForwardTrace> forward(const Network& net, const Tensor& batch) {
    if (net.layers.empty()) throw std::invalid_argument("forward: network has no layers");

    ForwardTrace trace;
    trace.input = flatten_to_rows(batch);
    trace.layer_inputs.reserve(net.layers.size());

    Tensor current = batch;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& spec = net.layers[i];
        switch (spec.kind) {
            case LayerKind::dense: {
                if (current.rank() != 2) {
                    if (i != 0) {
                        throw std::invalid_argument(
                            "forward: dense layer " + std::to_string(i) +
                            " received rank-4 input; insert a flatten layer");
                    }
                    current = flatten_to_rows(current);
                }
                trace.layer_inputs.push_back(current);
                current = dense_forward(spec, current, net.params[i]);
                break;
            }
            case LayerKind::conv2d: {
                trace.layer_inputs.push_back(current);
                current = conv_forward(spec, current, net.params[i]);
                break;
            }
            case LayerKind::relu: {
                trace.layer_inputs.push_back(current);
                Tensor y = current;
                double* d = y.data();
                for (std::size_t k = 0; k < y.size(); ++k) d[k] = std::max(0.0, d[k]);
                current = std::move(y);
                break;
            }
            case LayerKind::avgpool2x2: {
                trace.layer_inputs.push_back(current);
                current = pool_forward(current);
                break;
            }
            case LayerKind::flatten: {
                trace.layer_inputs.push_back(current);
                current = flatten_to_rows(current);
                break;
            }
        }
    }
    return {std::move(current), std::move(trace)};
}

Gradients backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_logits) {
    if (trace.layer_inputs.size() != net.layers.size()) {
        throw std::invalid_argument("backward: trace does not match the network (got " +
                                    std::to_string(trace.layer_inputs.size()) + " layers, want " +
                                    std::to_string(net.layers.size()) + ")");
    }
    Gradients grads;
    grads.params.resize(net.layers.size());

    Tensor grad = grad_logits;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const LayerSpec& spec = net.layers[i];
        const Tensor& x = trace.layer_inputs[i];
        switch (spec.kind) {
            case LayerKind::dense: {
                if (grad.rank() != 2 || grad.rows() != x.rows() ||
                    grad.cols() != spec.out_features) {
                    throw std::invalid_argument("backward: gradient shape " +
                                                shape_to_string(grad.shape()) +
                                                " does not match dense layer " +
                                                std::to_string(i));
                }
                const std::size_t batch = x.rows();
                Tensor grad_w({spec.out_features, spec.in_features});
                detail::gemm_tn(grad.data(), x.data(), grad_w.data(), spec.out_features, batch,
                                spec.in_features);
                Tensor grad_x({batch, spec.in_features});
                detail::gemm_nn(grad.data(), net.params[i].data(), grad_x.data(), batch,
                                spec.out_features, spec.in_features);
                grads.params[i] = std::move(grad_w);
                grad = std::move(grad_x);
                break;
            }
            case LayerKind::conv2d: {
                const Tensor& w = net.params[i];
                const std::size_t batch = x.dim(0);
                const std::size_t out_h = grad.dim(2), out_w = grad.dim(3);
                if (grad.rank() != 4 || grad.dim(1) != spec.out_channels) {
                    throw std::invalid_argument("backward: gradient shape " +
                                                shape_to_string(grad.shape()) +
                                                " does not match conv layer " + std::to_string(i));
                }
                Tensor grad_w(w.shape());
                Tensor grad_x(x.shape());
                for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
                        for (std::size_t oh = 0; oh < out_h; ++oh) {
                            for (std::size_t ow = 0; ow < out_w; ++ow) {
                                const double g = grad(b, oc, oh, ow);
                                if (g == 0.0) continue;
                                for (std::size_t ic = 0; ic < spec.in_channels; ++ic) {
                                    for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
                                        for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                                            grad_w(oc, ic, kh, kw) += g * x(b, ic, oh + kh, ow + kw);
                                            grad_x(b, ic, oh + kh, ow + kw) += g * w(oc, ic, kh, kw);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                grads.params[i] = std::move(grad_w);
                grad = std::move(grad_x);
                break;
            }
            case LayerKind::relu: {
                Tensor grad_x = grad;
                const double* pre = x.data();
                double* g = grad_x.data();
                for (std::size_t k = 0; k < grad_x.size(); ++k) {
                    if (pre[k] <= 0.0) g[k] = 0.0;
                }
                grad = std::move(grad_x);
                break;
            }
            case LayerKind::avgpool2x2: {
                Tensor grad_x(x.shape());
                for (std::size_t b = 0; b < grad.dim(0); ++b) {
                    for (std::size_t c = 0; c < grad.dim(1); ++c) {
                        for (std::size_t h = 0; h < grad.dim(2); ++h) {
                            for (std::size_t w = 0; w < grad.dim(3); ++w) {
                                const double g = 0.25 * grad(b, c, h, w);
                                grad_x(b, c, 2 * h, 2 * w) = g;
                                grad_x(b, c, 2 * h, 2 * w + 1) = g;
                                grad_x(b, c, 2 * h + 1, 2 * w) = g;
                                grad_x(b, c, 2 * h + 1, 2 * w + 1) = g;
                            }
                        }
                    }
                }
                grad = std::move(grad_x);
                break;
            }
            case LayerKind::flatten: {
                grad = grad.reshaped(x.shape());
                break;
            }
        }
    }

    grads.input = flatten_to_rows(grad);
    return grads;
}

std::pair<double, Tensor> softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) {
        throw std::invalid_argument("softmax_xent: logits must be a matrix, got shape " +
                                    shape_to_string(logits.shape()));
    }
    const std::size_t batch = logits.rows();
    const std::size_t classes = logits.cols();
    if (labels.size() != batch) {
        throw std::invalid_argument("softmax_xent: " + std::to_string(labels.size()) +
                                    " labels for a batch of " + std::to_string(batch));
    }

    Tensor grad({batch, classes});
    double loss = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const int label = labels[b];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::invalid_argument("softmax_xent: label " + std::to_string(label) +
                                        " out of range [0, " + std::to_string(classes) + ")");
        }
        double row_max = logits(b, 0);
        for (std::size_t c = 1; c < classes; ++c) row_max = std::max(row_max, logits(b, c));
        double sum_exp = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum_exp += std::exp(logits(b, c) - row_max);
        loss += std::log(sum_exp) - (logits(b, static_cast<std::size_t>(label)) - row_max);
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(logits(b, c) - row_max) / sum_exp;
            grad(b, c) = (p - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) * inv_batch;
        }
    }
    loss *= inv_batch;
    if (!std::isfinite(loss)) throw std::runtime_error("softmax_xent: non-finite loss");
    return {loss, std::move(grad)};
}

void sgd_step(Network& net, const std::vector<Tensor>& grads, double lr) {
    if (grads.size() != net.params.size()) {
        throw std::invalid_argument("sgd_step: gradient count " + std::to_string(grads.size()) +
                                    " does not match layer count " +
                                    std::to_string(net.params.size()));
    }
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        Tensor& w = net.params[i];
        if (w.empty()) continue;
        const Tensor& g = grads[i];
        if (!w.same_shape(g)) {
            throw std::invalid_argument("sgd_step: gradient shape " + shape_to_string(g.shape()) +
                                        " does not match weight shape " +
                                        shape_to_string(w.shape()) + " at layer " +
                                        std::to_string(i));
        }
        double* wd = w.data();
        const double* gd = g.data();
        for (std::size_t k = 0; k < w.size(); ++k) wd[k] -= lr * gd[k];
    }
}

double evaluate(const Network& net, const Dataset& dataset) {
    const std::size_t n = dataset.size();
    if (n == 0) throw std::invalid_argument("evaluate: empty dataset");

    constexpr std::size_t kEvalBatch = 256;
    std::size_t correct = 0;
    std::vector<std::size_t> indices(kEvalBatch);
    for (std::size_t start = 0; start < n; start += kEvalBatch) {
        const std::size_t count = std::min(kEvalBatch, n - start);
        indices.resize(count);
        for (std::size_t k = 0; k < count; ++k) indices[k] = start + k;
        auto [images, labels] = gather_batch(dataset, indices);
        auto [logits, trace] = forward(net, images);
        for (std::size_t b = 0; b < count; ++b) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < logits.cols(); ++c) {
                if (logits(b, c) > logits(b, best)) best = c;
            }
            if (static_cast<int>(best) == labels[b]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace isoprune
