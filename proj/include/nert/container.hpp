#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nert::io {

enum class DType : std::uint8_t { Float32 = 0, Float64 = 1 };

struct NamedArray {
    std::vector<std::uint64_t> shape;
    DType dtype = DType::Float64;
    std::vector<double> values;  // widened to double in memory regardless of dtype
};

/// Shape-tagged little-endian array file:
///
///   u32 len, magic | u32 len, JSON metadata | u32 count |
///   count x { u32 len, name | u8 dtype | u32 ndim | u64 dims[ndim] | payload }
///
/// Arrays are kept in name order so byte output is deterministic.
struct ArrayContainer {
    std::string magic;
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, NamedArray> arrays;

    void put(const std::string& name, std::vector<std::uint64_t> shape, std::vector<double> values,
             DType dtype = DType::Float64);
    const NamedArray& at(const std::string& name) const;
    bool contains(const std::string& name) const { return arrays.count(name) != 0; }

    std::string serialize() const;
    static ArrayContainer deserialize(const std::string& bytes);

    void save(const std::filesystem::path& path) const;
    /// Throws DataError when the magic differs from `expected_magic` (if non-empty).
    static ArrayContainer load(const std::filesystem::path& path, const std::string& expected_magic = {});
};

}  // namespace nert::io
