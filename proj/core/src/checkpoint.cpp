// SPDX-License-Identifier: Apache-2.0
#include "mekd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace mekd::ckpt {

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    template <class T>
    void le(T v) {
        static_assert(std::is_unsigned_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(std::uint8_t(v >> (8 * i)));
    }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : buf(b) {}

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
    }
    template <class T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(buf[pos + i]) << (8 * i);
        pos += sizeof(T);
        return v;
    }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }

    std::span<const std::uint8_t> buf;
    std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const std::vector<NamedTensor>& params) {
    Writer w;
    w.bytes("MEKD", 4);
    w.le<std::uint32_t>(kFormatVersion);
    w.le<std::uint32_t>(std::uint32_t(params.size()));
    for (const auto& [name, value] : params) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("parameter name too long");
        if (value.rank() > std::numeric_limits<std::uint8_t>::max()) throw FormatError("tensor rank too large");
        w.le<std::uint16_t>(std::uint16_t(name.size()));
        w.bytes(name.data(), name.size());
        w.le<std::uint8_t>(std::uint8_t(value.rank()));
        for (std::size_t e : value.shape()) w.le<std::uint32_t>(std::uint32_t(e));
        for (double v : value.values()) w.f64(v);
    }
    return std::move(w.out);
}

std::vector<NamedTensor> decode(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.str(4) != "MEKD") throw FormatError("not a checkpoint (bad magic)");
    const auto version = r.le<std::uint32_t>();
    if (version != kFormatVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = r.le<std::uint32_t>();
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        NamedTensor nt;
        nt.name = r.str(r.le<std::uint16_t>());
        const auto rank = r.le<std::uint8_t>();
        Shape shape(rank);
        for (auto& e : shape) e = r.le<std::uint32_t>();
        const std::size_t n = shape_size(shape);
        r.need(n * 8);
        std::vector<double> values(n);
        for (auto& v : values) v = r.f64();
        nt.value = Tensor(std::move(shape), std::move(values));
        out.push_back(std::move(nt));
    }
    if (r.pos != bytes.size()) throw FormatError("trailing bytes after checkpoint payload");
    return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open " + tmp.string() + " for writing");
        f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        if (!f) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& params) {
    write_file_atomic(path, encode(params));
}

std::vector<NamedTensor> load(const std::filesystem::path& path) { return decode(read_file(path)); }

}  // namespace mekd::ckpt
