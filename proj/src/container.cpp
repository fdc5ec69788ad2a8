#include "hpt/container.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hpt {

namespace {

constexpr char kMagic[5] = {'H', 'P', 'M', 'T', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

bool read_u64(std::ifstream& in, std::uint64_t& v) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
}

void write_f64(std::ofstream& out, const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &p[i], 8);
        write_u64(out, bits);
    }
}

bool read_f64(std::ifstream& in, double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        if (!read_u64(in, bits)) return false;
        std::memcpy(&p[i], &bits, 8);
    }
    return true;
}

}  // namespace

void write_container(const std::string& path, const std::vector<NamedArray>& arrays) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, arrays.size());
    for (const auto& arr : arrays) {
        write_u64(out, arr.name.size());
        out.write(arr.name.data(), static_cast<std::streamsize>(arr.name.size()));
        write_u64(out, arr.shape.size());
        for (auto d : arr.shape) write_u64(out, d);
        if (arr.data.size() != arr.element_count())
            throw std::runtime_error("array payload does not match shape: " + arr.name);
        write_f64(out, arr.data.data(), arr.data.size());
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedArray> read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[5];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("bad container: " + path);
    std::uint64_t count = 0;
    if (!read_u64(in, count)) throw std::runtime_error("bad container: " + path);
    std::vector<NamedArray> arrays;
    arrays.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedArray arr;
        std::uint64_t name_len = 0;
        if (!read_u64(in, name_len)) throw std::runtime_error("missing array (truncated file): " + path);
        arr.name.resize(name_len);
        in.read(arr.name.data(), static_cast<std::streamsize>(name_len));
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw std::runtime_error("missing array (truncated file): " + path);
        std::uint64_t rank = 0;
        if (!read_u64(in, rank)) throw std::runtime_error("missing array (truncated file): " + path);
        arr.shape.resize(rank);
        for (auto& d : arr.shape)
            if (!read_u64(in, d)) throw std::runtime_error("missing array (truncated file): " + path);
        arr.data.resize(arr.element_count());
        if (!read_f64(in, arr.data.data(), arr.data.size()))
            throw std::runtime_error("missing array (truncated file): " + path);
        arrays.push_back(std::move(arr));
    }
    return arrays;
}

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name) {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw std::runtime_error("missing array: " + name);
}

NamedArray array_from_mat(const std::string& name, const Mat& m) {
    return NamedArray{name, {m.rows, m.cols}, m.a};
}

NamedArray array_from_vec(const std::string& name, const Vec& v) {
    return NamedArray{name, {v.size()}, v};
}

Mat mat_from_array(const NamedArray& a) {
    if (a.shape.size() != 2) throw std::runtime_error("shape mismatch: " + a.name + " is not rank 2");
    Mat m(a.shape[0], a.shape[1]);
    m.a = a.data;
    return m;
}

Vec vec_from_array(const NamedArray& a) {
    if (a.shape.size() != 1) throw std::runtime_error("shape mismatch: " + a.name + " is not rank 1");
    return a.data;
}

}  // namespace hpt
