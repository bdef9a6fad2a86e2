#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "edac/common.hpp"
#include "edac/ensemble.hpp"
#include "edac/policy.hpp"
#include "edac/tensor.hpp"

namespace edac {

// Checkpoint file: magic "EDACCKPT", u32 format version, then per network:
// u32 name length, name bytes, u32 tensor count, and per tensor u32 rank,
// u32 dims[rank], f64 data. All integers and floats little-endian.

inline constexpr char kCkptMagic[8] = {'E', 'D', 'A', 'C', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCkptVersion = 1;

struct NamedTensors {
    std::string name;
    std::vector<Tensor> tensors;
};

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
    put_u32(os, static_cast<uint32_t>(v));
    put_u32(os, static_cast<uint32_t>(v >> 32));
}

inline void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<uint64_t>(x)); }

inline bool get_u32(std::istream& is, uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
        static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    return true;
}

inline bool get_u64(std::istream& is, uint64_t& v) {
    uint32_t lo, hi;
    if (!get_u32(is, lo) || !get_u32(is, hi)) return false;
    v = static_cast<uint64_t>(hi) << 32 | lo;
    return true;
}

inline bool get_f64(std::istream& is, double& x) {
    uint64_t v;
    if (!get_u64(is, v)) return false;
    x = std::bit_cast<double>(v);
    return true;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensors>& nets) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoError::Kind::Open, "cannot open checkpoint for writing: " + path);
    os.write(kCkptMagic, 8);
    detail::put_u32(os, kCkptVersion);
    for (const NamedTensors& net : nets) {
        detail::put_u32(os, static_cast<uint32_t>(net.name.size()));
        os.write(net.name.data(), static_cast<std::streamsize>(net.name.size()));
        detail::put_u32(os, static_cast<uint32_t>(net.tensors.size()));
        for (const Tensor& t : net.tensors) {
            detail::put_u32(os, 2);
            detail::put_u32(os, static_cast<uint32_t>(t.rows));
            detail::put_u32(os, static_cast<uint32_t>(t.cols));
            for (double x : t.v) detail::put_f64(os, x);
        }
    }
    if (!os) throw IoError(IoError::Kind::Open, "write failed: " + path);
}

inline std::vector<NamedTensors> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Kind::Open, "cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw IoError(IoError::Kind::Magic, "bad checkpoint magic in " + path);
    uint32_t version;
    if (!detail::get_u32(is, version) || version != kCkptVersion)
        throw IoError(IoError::Kind::Version, "unsupported checkpoint version in " + path);

    std::vector<NamedTensors> nets;
    while (true) {
        uint32_t name_len;
        if (!detail::get_u32(is, name_len)) break;  // clean EOF
        NamedTensors net;
        net.name.resize(name_len);
        if (!is.read(net.name.data(), name_len))
            throw IoError(IoError::Kind::Truncated, "truncated checkpoint: " + path);
        uint32_t tensor_count;
        if (!detail::get_u32(is, tensor_count))
            throw IoError(IoError::Kind::Truncated, "truncated checkpoint: " + path);
        for (uint32_t t = 0; t < tensor_count; ++t) {
            uint32_t rank;
            if (!detail::get_u32(is, rank) || rank == 0 || rank > 2)
                throw IoError(IoError::Kind::Dimension,
                              "unsupported tensor rank in checkpoint: " + path);
            uint32_t dims[2] = {1, 1};
            for (uint32_t d = 0; d < rank; ++d)
                if (!detail::get_u32(is, dims[d]))
                    throw IoError(IoError::Kind::Truncated, "truncated checkpoint: " + path);
            const uint32_t rows = rank == 2 ? dims[0] : 1;
            const uint32_t cols = rank == 2 ? dims[1] : dims[0];
            Tensor tensor(static_cast<int>(rows), static_cast<int>(cols));
            for (auto& x : tensor.v)
                if (!detail::get_f64(is, x))
                    throw IoError(IoError::Kind::Truncated, "truncated checkpoint: " + path);
            net.tensors.push_back(std::move(tensor));
        }
        nets.push_back(std::move(net));
    }
    return nets;
}

// ---- adapters between networks and named tensor lists ---------------------

inline NamedTensors pack_mlp(const std::string& name, const Mlp& m) {
    NamedTensors out{name, {}};
    for (const Tensor* t : m.params()) out.tensors.push_back(*t);
    return out;
}

inline Mlp unpack_mlp(const NamedTensors& net) {
    if (net.tensors.size() < 2 || net.tensors.size() % 2 != 0)
        throw IoError(IoError::Kind::Invalid, "network '" + net.name + "' is not an MLP");
    Mlp m;
    for (size_t i = 0; i < net.tensors.size(); i += 2) {
        m.weights.push_back(net.tensors[i]);
        m.biases.push_back(net.tensors[i + 1]);
    }
    return m;
}

inline void save_policy_checkpoint(const std::string& path, const GaussianPolicy& p) {
    save_checkpoint(path, {pack_mlp("policy", p.trunk)});
}

inline GaussianPolicy load_policy_checkpoint(const std::string& path) {
    auto nets = load_checkpoint(path);
    for (const auto& net : nets)
        if (net.name == "policy") {
            Mlp trunk = unpack_mlp(net);
            return GaussianPolicy{trunk, trunk.out_dim() / 2};
        }
    throw IoError(IoError::Kind::Invalid, "no policy network in " + path);
}

}  // namespace edac
