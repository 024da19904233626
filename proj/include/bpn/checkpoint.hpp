#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "bpn/network.hpp"

namespace bpn {

/// Versioned binary checkpoint: config, every layer, every memory bank keyed
/// by task, every anchor. All reals are stored as little-endian IEEE-754
/// bit patterns, so a write -> read round trip is bit-exact. Activation
/// flags are protocol state and are not persisted; a loaded network starts
/// with every bank inactive.
namespace ckpt {

constexpr char kMagic[8] = {'B', 'P', 'N', 'C', 'K', 'P', 'T', '1'};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw FormatError("checkpoint: truncated while reading u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void put_i32(std::ostream& os, std::int32_t v) {
    put_u64(os, static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)));
}

inline std::int32_t get_i32(std::istream& is) {
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(get_u64(is)));
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
    put_u64(os, m.rows());
    put_u64(os, m.cols());
    for (double x : m.values()) put_u64(os, std::bit_cast<std::uint64_t>(x));
}

inline Matrix get_matrix(std::istream& is) {
    const std::uint64_t r = get_u64(is);
    const std::uint64_t c = get_u64(is);
    Matrix m(r, c);
    for (double& x : m.values()) x = std::bit_cast<double>(get_u64(is));
    return m;
}

} // namespace detail

inline void save(const Network& net, std::ostream& os) {
    using namespace detail;
    os.write(kMagic, sizeof(kMagic));
    put_u64(os, 1); // version

    put_u64(os, net.config.layer_sizes.size());
    for (std::size_t s : net.config.layer_sizes) put_u64(os, s);
    put_u64(os, net.config.memory_layers.size());
    for (std::size_t l : net.config.memory_layers) put_u64(os, l);
    put_u64(os, net.config.memory_k);
    put_u64(os, net.config.memory_h);
    put_u64(os, net.seed);

    put_u64(os, net.layers.size());
    for (const auto& l : net.layers) {
        put_matrix(os, l.W);
        put_matrix(os, l.bias);
    }

    for (const auto& banks : net.memory) {
        put_u64(os, banks.size());
        for (const auto& [id, bank] : banks) {
            put_i32(os, id);
            put_matrix(os, bank.M);
            put_matrix(os, bank.W_task);
        }
    }

    put_u64(os, net.anchors.size());
    for (const auto& a : net.anchors) {
        put_i32(os, a.task);
        put_u64(os, a.fisher_W.size());
        for (const auto& m : a.fisher_W) put_matrix(os, m);
        for (const auto& m : a.fisher_bias) put_matrix(os, m);
        for (const auto& m : a.anchor_W) put_matrix(os, m);
        for (const auto& m : a.anchor_bias) put_matrix(os, m);
    }
}

inline Network load(std::istream& is) {
    using namespace detail;
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FormatError("checkpoint: bad magic");
    const std::uint64_t version = get_u64(is);
    if (version != 1)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));

    Network net;
    const std::uint64_t n_sizes = get_u64(is);
    for (std::uint64_t i = 0; i < n_sizes; ++i) net.config.layer_sizes.push_back(get_u64(is));
    const std::uint64_t n_mem = get_u64(is);
    for (std::uint64_t i = 0; i < n_mem; ++i) net.config.memory_layers.insert(get_u64(is));
    net.config.memory_k = get_u64(is);
    net.config.memory_h = get_u64(is);
    net.seed = get_u64(is);
    net.config.validate();

    const std::uint64_t n_layers = get_u64(is);
    if (n_layers != net.config.layer_count())
        throw FormatError("checkpoint: layer count mismatch");
    for (std::uint64_t l = 0; l < n_layers; ++l) {
        LayerParams p;
        p.W = get_matrix(is);
        p.bias = get_matrix(is);
        net.layers.push_back(std::move(p));
    }

    net.memory.resize(n_layers);
    for (std::uint64_t l = 0; l < n_layers; ++l) {
        const std::uint64_t n_banks = get_u64(is);
        for (std::uint64_t b = 0; b < n_banks; ++b) {
            MemoryBank bank;
            bank.task = get_i32(is);
            bank.M = get_matrix(is);
            bank.W_task = get_matrix(is);
            bank.active = false;
            net.memory[l].emplace(bank.task, std::move(bank));
        }
    }

    const std::uint64_t n_anchors = get_u64(is);
    for (std::uint64_t i = 0; i < n_anchors; ++i) {
        FisherAnchor a;
        a.task = get_i32(is);
        const std::uint64_t n = get_u64(is);
        for (std::uint64_t k = 0; k < n; ++k) a.fisher_W.push_back(get_matrix(is));
        for (std::uint64_t k = 0; k < n; ++k) a.fisher_bias.push_back(get_matrix(is));
        for (std::uint64_t k = 0; k < n; ++k) a.anchor_W.push_back(get_matrix(is));
        for (std::uint64_t k = 0; k < n; ++k) a.anchor_bias.push_back(get_matrix(is));
        net.anchors.push_back(std::move(a));
    }
    return net;
}

inline void save_file(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open for write: " + path);
    save(net, os);
    if (!os) throw IoError("checkpoint: write failed: " + path);
}

inline Network load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open for read: " + path);
    return load(is);
}

} // namespace ckpt
} // namespace bpn
