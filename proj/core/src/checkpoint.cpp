#include "isoprune/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace isoprune {

namespace {

constexpr char kMagic[] = "ISOPRUNE1";
constexpr std::size_t kMagicLen = 9;

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (std::size_t i = 0; i < len; ++i) {
        hash ^= data[i];
        hash *= 1099511628211ULL;
    }
    return hash;
}

void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_f64(std::vector<std::uint8_t>& buf, double v) {
    append_u64(buf, std::bit_cast<std::uint64_t>(v));
}

struct Cursor {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) {
            throw std::runtime_error("load_checkpoint: checkpoint truncated in \"" + path +
                                     "\" at offset " + std::to_string(pos));
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
};

// Rebuilds a Network with the architecture's layer pattern and the stored
// (possibly pruned) weight shapes.
Network rebuild(ArchId arch, const std::vector<Tensor>& tensors, const std::string& path) {
    Network net = build_network(arch);
    const std::vector<std::size_t> pidx = net.parameterized_indices();
    if (tensors.size() != pidx.size()) {
        throw std::runtime_error("load_checkpoint: checkpoint shape mismatch in \"" + path +
                                 "\": " + std::to_string(tensors.size()) + " tensors for " +
                                 std::to_string(pidx.size()) + " parameterized layers of " +
                                 to_string(arch));
    }

    // Flatten-boundary block sizes come from the unpruned skeleton (the
    // spatial geometry does not change under channel pruning).
    std::vector<std::size_t> skeleton_out(pidx.size());
    std::vector<std::size_t> skeleton_in(pidx.size());
    for (std::size_t k = 0; k < pidx.size(); ++k) {
        const LayerSpec& s = net.layers[pidx[k]];
        skeleton_out[k] = s.kind == LayerKind::dense ? s.out_features : s.out_channels;
        skeleton_in[k] = s.kind == LayerKind::dense ? s.in_features : s.in_channels;
    }

    auto mismatch = [&](const std::string& why) {
        throw std::runtime_error("load_checkpoint: checkpoint shape mismatch in \"" + path +
                                 "\": " + why);
    };

    for (std::size_t k = 0; k < pidx.size(); ++k) {
        LayerSpec& spec = net.layers[pidx[k]];
        const Tensor& t = tensors[k];
        if (spec.kind == LayerKind::dense) {
            if (t.rank() != 2) mismatch("tensor w" + std::to_string(k) + " is not a matrix");
            spec.out_features = t.dim(0);
            spec.in_features = t.dim(1);
        } else {
            if (t.rank() != 4 || t.dim(2) != spec.kernel_h || t.dim(3) != spec.kernel_w) {
                mismatch("tensor w" + std::to_string(k) + " is not a " +
                         std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w) +
                         " conv kernel");
            }
            spec.out_channels = t.dim(0);
            spec.in_channels = t.dim(1);
        }
        net.params[pidx[k]] = t;
    }

    // Chain consistency.
    {
        const LayerSpec& first = net.layers[pidx[0]];
        if (first.kind == LayerKind::dense && first.in_features != 784) {
            mismatch("first layer fan-in " + std::to_string(first.in_features) + " != 784");
        }
        if (first.kind == LayerKind::conv2d && first.in_channels != 1) {
            mismatch("first conv fan-in " + std::to_string(first.in_channels) + " channels != 1");
        }
    }
    for (std::size_t k = 0; k + 1 < pidx.size(); ++k) {
        const LayerSpec& cur = net.layers[pidx[k]];
        const LayerSpec& nxt = net.layers[pidx[k + 1]];
        const std::size_t cur_out =
            cur.kind == LayerKind::dense ? cur.out_features : cur.out_channels;
        if (nxt.kind == LayerKind::conv2d) {
            if (nxt.in_channels != cur_out) {
                mismatch("layer w" + std::to_string(k + 1) + " fan-in does not match w" +
                         std::to_string(k) + " fan-out");
            }
        } else {
            const std::size_t block = skeleton_in[k + 1] / skeleton_out[k];
            if (nxt.in_features != cur_out * block) {
                mismatch("layer w" + std::to_string(k + 1) + " fan-in does not match w" +
                         std::to_string(k) + " fan-out");
            }
        }
    }
    const LayerSpec& last = net.layers[pidx.back()];
    if (last.out_features != 10) {
        mismatch("classifier width " + std::to_string(last.out_features) + " != 10");
    }
    return net;
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
    std::vector<std::uint8_t> payload;
    const std::string arch_name = to_string(net.arch_id);
    append_u32(payload, static_cast<std::uint32_t>(arch_name.size()));
    payload.insert(payload.end(), arch_name.begin(), arch_name.end());

    const std::vector<std::size_t> pidx = net.parameterized_indices();
    append_u32(payload, static_cast<std::uint32_t>(pidx.size()));
    for (std::size_t k = 0; k < pidx.size(); ++k) {
        const Tensor& t = net.params[pidx[k]];
        const std::string name = "w" + std::to_string(k);
        append_u32(payload, static_cast<std::uint32_t>(name.size()));
        payload.insert(payload.end(), name.begin(), name.end());
        append_u32(payload, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d = 0; d < t.rank(); ++d) {
            append_u32(payload, static_cast<std::uint32_t>(t.dim(d)));
        }
        for (std::size_t i = 0; i < t.size(); ++i) append_f64(payload, t.data()[i]);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open \"" + path + "\"");
    out.write(kMagic, kMagicLen);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    std::vector<std::uint8_t> checksum;
    append_u64(checksum, fnv1a64(payload.data(), payload.size()));
    out.write(reinterpret_cast<const char*>(checksum.data()), 8);
    if (!out) throw std::runtime_error("save_checkpoint: write failed for \"" + path + "\"");
}

Network load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open \"" + path + "\"");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < kMagicLen + 8) {
        throw std::runtime_error("load_checkpoint: checkpoint truncated in \"" + path +
                                 "\": only " + std::to_string(bytes.size()) + " bytes");
    }
    if (!std::equal(kMagic, kMagic + kMagicLen, bytes.begin())) {
        throw std::runtime_error("load_checkpoint: bad checkpoint magic in \"" + path + "\"");
    }

    const std::size_t payload_len = bytes.size() - kMagicLen - 8;
    const std::uint64_t want = fnv1a64(bytes.data() + kMagicLen, payload_len);
    std::uint64_t got = 0;
    for (int i = 0; i < 8; ++i) {
        got |= static_cast<std::uint64_t>(bytes[kMagicLen + payload_len + i]) << (8 * i);
    }
    if (want != got) {
        throw std::runtime_error("load_checkpoint: checksum mismatch in \"" + path + "\"");
    }

    // Parse the payload only (the checksum tail is already consumed).
    std::vector<std::uint8_t> payload(bytes.begin() + kMagicLen,
                                      bytes.end() - 8);
    Cursor cur{payload, 0, path};
    const std::string arch_name = cur.str(cur.u32());
    ArchId arch;
    try {
        arch = parse_arch(arch_name);
    } catch (const std::invalid_argument&) {
        throw std::runtime_error("load_checkpoint: unknown architecture \"" + arch_name +
                                 "\" in \"" + path + "\"");
    }

    const std::uint32_t tensor_count = cur.u32();
    std::vector<Tensor> tensors;
    tensors.reserve(tensor_count);
    for (std::uint32_t k = 0; k < tensor_count; ++k) {
        const std::string name = cur.str(cur.u32());
        if (name != "w" + std::to_string(k)) {
            throw std::runtime_error("load_checkpoint: unexpected tensor name \"" + name +
                                     "\" in \"" + path + "\"");
        }
        const std::uint32_t rank = cur.u32();
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = cur.u32();
        std::vector<double> values(shape_product(shape));
        for (double& v : values) v = cur.f64();
        tensors.emplace_back(std::move(shape), std::move(values));
    }
    if (cur.pos != payload.size()) {
        throw std::runtime_error("load_checkpoint: trailing bytes in \"" + path + "\"");
    }

    Network net = rebuild(arch, tensors, path);
    for (const Tensor& t : net.params) {
        if (!t.empty()) t.ensure_finite("load_checkpoint");
    }
    return net;
}

}  // namespace isoprune
