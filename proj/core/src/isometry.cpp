#include "isoprune/isometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "isoprune/linalg.hpp"
#include "isoprune/pruning.hpp"

namespace isoprune {

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Views one sample as a 1 x ... batch.
Tensor as_single_batch(const Tensor& input) {
    switch (input.rank()) {
        case 1: return input.reshaped({1, input.dim(0)});
        case 2:
            if (input.dim(0) != 1) {
                throw std::invalid_argument("jacobian: expected a single sample, got batch of " +
                                            std::to_string(input.dim(0)));
            }
            return input;
        case 3: return input.reshaped({1, input.dim(0), input.dim(1), input.dim(2)});
        case 4:
            if (input.dim(0) != 1) {
                throw std::invalid_argument("jacobian: expected a single sample, got batch of " +
                                            std::to_string(input.dim(0)));
            }
            return input;
        default:
            throw std::invalid_argument("jacobian: unsupported input shape " +
                                        shape_to_string(input.shape()));
    }
}

Tensor sample_slice(const Tensor& inputs, std::size_t index) {
    const std::size_t stride = inputs.size() / inputs.dim(0);
    Shape shape(inputs.shape().begin() + 1, inputs.shape().end());
    shape.insert(shape.begin(), 1);
    Tensor out(shape);
    std::copy(inputs.data() + index * stride, inputs.data() + (index + 1) * stride, out.data());
    return out;
}

}  // namespace

std::string jsv_csv_header() { return "mean,std,max,min,K,samples"; }

std::string jsv_csv_row(const JsvReport& r) {
    return format_double(r.mean) + "," + format_double(r.std_dev) + "," + format_double(r.max) +
           "," + format_double(r.min) + "," + std::to_string(r.k) + "," +
           std::to_string(r.sample_count);
}

bool is_linear(const Network& net) {
    return std::none_of(net.layers.begin(), net.layers.end(),
                        [](const LayerSpec& l) { return l.kind == LayerKind::relu; });
}

Tensor jacobian(const Network& net, const Tensor& input) {
    const Tensor batch = as_single_batch(input);
    auto [logits, trace] = forward(net, batch);
    const std::size_t classes = logits.cols();
    const std::size_t d_in = trace.input.cols();

    Tensor jac({classes, d_in});
    for (std::size_t c = 0; c < classes; ++c) {
        Tensor seed({1, classes});
        seed(0, c) = 1.0;
        const Gradients grads = backward(net, trace, seed);
        std::copy(grads.input.data(), grads.input.data() + d_in, jac.data() + c * d_in);
    }
    return jac;
}

JsvReport mean_jsv(const Network& net, const Tensor& inputs) {
    if (inputs.rank() < 2 || inputs.dim(0) == 0) {
        throw std::invalid_argument("mean_jsv: empty sample set");
    }
    const std::size_t available = inputs.dim(0);

    std::vector<double> pool;
    std::size_t samples_used = 0;
    std::size_t k = 0;

    if (is_linear(net)) {
        // The Jacobian of a linear network is input-independent; assert that
        // before trusting a single sample.
        const Tensor first = sample_slice(inputs, 0);
        Tensor probe = available > 1 ? sample_slice(inputs, 1) : first;
        if (available == 1) {
            for (std::size_t i = 0; i < probe.size(); ++i) probe(i) += 1.0 + double(i % 7);
        }
        const Tensor j0 = jacobian(net, first);
        const Tensor j1 = jacobian(net, probe);
        double max_diff = 0.0;
        for (std::size_t i = 0; i < j0.size(); ++i) {
            max_diff = std::max(max_diff, std::abs(j0(i) - j1(i)));
        }
        if (max_diff > 1e-10) {
            throw std::runtime_error("mean_jsv: linear network Jacobian varies across inputs by " +
                                     format_double(max_diff));
        }
        pool = svd_values(j0);
        k = pool.size();
        samples_used = 1;
    } else {
        for (std::size_t s = 0; s < available; ++s) {
            const std::vector<double> values = svd_values(jacobian(net, sample_slice(inputs, s)));
            if (s == 0) k = values.size();
            pool.insert(pool.end(), values.begin(), values.end());
        }
        samples_used = available;
    }

    // Sorting the pool makes the statistics exactly invariant to sample order.
    std::sort(pool.begin(), pool.end(), std::greater<double>());

    JsvReport report;
    report.k = k;
    report.sample_count = samples_used;
    double sum = 0.0, sum_sq = 0.0;
    report.max = pool.front();
    report.min = pool.front();
    for (double v : pool) {
        sum += v;
        sum_sq += v * v;
        report.max = std::max(report.max, v);
        report.min = std::min(report.min, v);
    }
    const double n = static_cast<double>(pool.size());
    report.mean = sum / n;
    report.std_dev = std::sqrt(std::max(0.0, sum_sq / n - report.mean * report.mean));
    return report;
}

Network orthp(const Network& net) {
    Network out = net;
    for (std::size_t i : out.parameterized_indices()) {
        const Tensor& w = out.params[i];
        const std::size_t rows = w.dim(0);
        const std::size_t cols = w.size() / rows;

        bool all_zero = true;
        for (std::size_t k = 0; k < w.size() && all_zero; ++k) all_zero = w.data()[k] == 0.0;
        if (all_zero) {
            throw std::runtime_error("orthp: orthogonalization undefined for all-zero weight "
                                     "at layer " +
                                     std::to_string(i));
        }

        const Tensor flat = w.reshaped({rows, cols});
        Tensor result;
        if (rows >= cols) {
            QrResult qr = qr_decompose(flat);
            for (std::size_t c = 0; c < cols; ++c) {
                if (qr.r(c, c) < 0.0) {
                    for (std::size_t r = 0; r < rows; ++r) qr.q(r, c) = -qr.q(r, c);
                }
            }
            result = std::move(qr.q);
        } else {
            QrResult qr = qr_decompose(flat.transposed());
            for (std::size_t c = 0; c < rows; ++c) {
                if (qr.r(c, c) < 0.0) {
                    for (std::size_t r = 0; r < cols; ++r) qr.q(r, c) = -qr.q(r, c);
                }
            }
            result = qr.q.transposed();
        }
        out.params[i] = result.reshaped(w.shape());
    }
    return out;
}

std::vector<std::pair<double, JsvReport>> jsv_sweep(const Network& pretrained,
                                                    const std::vector<double>& ratios,
                                                    const Tensor& inputs) {
    std::vector<std::pair<double, JsvReport>> result;
    result.reserve(ratios.size());
    for (double ratio : ratios) {
        if (!(ratio >= 0.0 && ratio < 1.0)) {
            throw std::invalid_argument("jsv_sweep: ratio " + format_double(ratio) +
                                        " outside [0, 1)");
        }
        if (ratio == 0.0) {
            result.emplace_back(ratio, mean_jsv(pretrained, inputs));
            continue;
        }
        const PrunePlan plan =
            make_plan(pretrained, PruneSpec::uniform(pretrained.arch_id, ratio));
        const Network pruned = apply_plan(pretrained, plan);
        result.emplace_back(ratio, mean_jsv(pruned, inputs));
    }
    return result;
}

}  // namespace isoprune
