#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpt/common.hpp"

namespace hpt {

// Named-array container used by both encoder weight files and training
// checkpoints. Layout (little-endian):
//   magic "HPMT1" (5 bytes)
//   u64 array count
//   per array: u64 name length, name bytes (UTF-8), u64 rank,
//              rank x u64 dims, then f64 payload row-major
struct NamedArray {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<double> data;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

void write_container(const std::string& path, const std::vector<NamedArray>& arrays);

// Throws "bad container" on a wrong magic and "missing array" on truncation.
std::vector<NamedArray> read_container(const std::string& path);

// Lookup helper; throws "missing array: <name>" when absent.
const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name);

NamedArray array_from_mat(const std::string& name, const Mat& m);
NamedArray array_from_vec(const std::string& name, const Vec& v);
Mat mat_from_array(const NamedArray& a);
Vec vec_from_array(const NamedArray& a);

}  // namespace hpt
