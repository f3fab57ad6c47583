#pragma once

// Binary files, all integers and floats little-endian.
//
// Parameter checkpoint (.iclp):
//   char[8]  "ICLPARAM"
//   u32      version (1)
//   u32      d
//   u32      number of layers (k+1)
//   u8       activation tag: 0 linear, 1 relu, 2 exp, 3 softmax
//   u8[k+1]  a_block tag per layer: 0 ZeroA, 1 FullA
//   then per layer: A (d*d f64, FullA only), r (f64), B (d*d f64), C (d*d f64),
//   matrices row-major.
//
// Prompt batch (.iclb):
//   char[8]  "ICLBATCH"
//   u32      version (1)
//   u64      record count
//   then per record: u32 d, u32 n, X (d*(n+1) f64 row-major), Y ((n+1) f64).

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "icl/data.hpp"
#include "icl/error.hpp"
#include "icl/transformer.hpp"

namespace icl {

class FormatError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b.data(), 8);
}
inline void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b.data(), 4);
}
inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void read_exact(std::istream& in, char* dst, std::size_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("unexpected end of file");
}
inline std::uint64_t get_u64(std::istream& in) {
    std::array<unsigned char, 8> b{};
    read_exact(in, reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}
inline std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    read_exact(in, reinterpret_cast<char*>(b.data()), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}
inline std::uint8_t get_u8(std::istream& in) {
    char c = 0;
    read_exact(in, &c, 1);
    return static_cast<std::uint8_t>(c);
}
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline void put_mat(std::ostream& out, const Mat& m) {
    for (double x : m.data()) put_f64(out, x);
}
inline Mat get_mat(std::istream& in, std::size_t rows, std::size_t cols) {
    Mat m(rows, cols);
    for (double& x : m.data()) x = get_f64(in);
    return m;
}

inline void expect_magic(std::istream& in, const char (&magic)[9]) {
    char buf[8];
    read_exact(in, buf, 8);
    if (std::memcmp(buf, magic, 8) != 0) throw FormatError(std::string("bad magic, expected ") + magic);
    const auto version = get_u32(in);
    if (version != 1) throw FormatError("unsupported version " + std::to_string(version));
}

inline std::uint8_t activation_tag(Activation a) {
    switch (a) {
        case Activation::LinearDot: return 0;
        case Activation::ReluDot: return 1;
        case Activation::ExpDot: return 2;
        case Activation::MaskedSoftmax: return 3;
    }
    return 0;
}

}  // namespace detail

struct Checkpoint {
    TfParams params;
    Activation activation = Activation::LinearDot;
};

inline void write_checkpoint(std::ostream& out, const TfParams& params, Activation act) {
    params.validate();
    const std::size_t d = params.dim();
    out.write("ICLPARAM", 8);
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(d));
    detail::put_u32(out, static_cast<std::uint32_t>(params.num_layers()));
    detail::put_u8(out, detail::activation_tag(act));
    for (const auto& l : params.layers) detail::put_u8(out, l.a ? 1 : 0);
    for (const auto& l : params.layers) {
        if (l.a) detail::put_mat(out, *l.a);
        detail::put_f64(out, l.r);
        detail::put_mat(out, l.b);
        detail::put_mat(out, l.c);
    }
}

inline Checkpoint read_checkpoint(std::istream& in) {
    detail::expect_magic(in, "ICLPARAM");
    const std::size_t d = detail::get_u32(in);
    const std::size_t layers = detail::get_u32(in);
    if (d == 0 || layers == 0) throw FormatError("checkpoint: zero dimension or layer count");
    const auto tag = detail::get_u8(in);
    if (tag > 3) throw FormatError("checkpoint: unknown activation tag");
    Checkpoint ck;
    ck.activation = kAllActivations[tag];
    std::vector<std::uint8_t> a_tags(layers);
    for (auto& t : a_tags) {
        t = detail::get_u8(in);
        if (t > 1) throw FormatError("checkpoint: unknown a_block tag");
    }
    for (std::size_t l = 0; l < layers; ++l) {
        LayerParams lp;
        if (a_tags[l]) lp.a = detail::get_mat(in, d, d);
        lp.r = detail::get_f64(in);
        lp.b = detail::get_mat(in, d, d);
        lp.c = detail::get_mat(in, d, d);
        ck.params.layers.push_back(std::move(lp));
    }
    return ck;
}

inline void write_prompt_batch(std::ostream& out, std::span<const Prompt> batch) {
    out.write("ICLBATCH", 8);
    detail::put_u32(out, 1);
    detail::put_u64(out, batch.size());
    for (const Prompt& p : batch) {
        detail::put_u32(out, static_cast<std::uint32_t>(p.dim()));
        detail::put_u32(out, static_cast<std::uint32_t>(p.num_demos()));
        detail::put_mat(out, p.x);
        for (double y : p.y) detail::put_f64(out, y);
    }
}

inline std::vector<Prompt> read_prompt_batch(std::istream& in) {
    detail::expect_magic(in, "ICLBATCH");
    const std::uint64_t count = detail::get_u64(in);
    std::vector<Prompt> out;
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::size_t d = detail::get_u32(in);
        const std::size_t n = detail::get_u32(in);
        if (d == 0) throw FormatError("prompt batch: zero dimension");
        Mat x = detail::get_mat(in, d, n + 1);
        Vec y(n + 1);
        for (double& v : y) v = detail::get_f64(in);
        out.push_back(assemble_prompt(std::move(x), std::move(y)));
    }
    return out;
}

}  // namespace icl
