#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mbk/common.hpp"

namespace mbk {

/// Self-describing tensor container ("TBK1"). Per entry: UTF-8 name, dtype
/// tag, rank, extents as 64-bit little-endian, then the row-major payload.
enum class Dtype : std::uint8_t { f64 = 0, f32 = 1, i8 = 2 };

std::size_t dtype_size(Dtype d);

struct ArchiveEntry {
    std::string name;
    Dtype dtype = Dtype::f64;
    Shape shape;
    std::vector<std::uint8_t> payload;

    std::int64_t count() const { return numel(shape); }
    std::vector<double> as_f64() const;
    std::vector<float> as_f32() const;
    const std::int8_t* as_i8() const;
};

class Archive {
public:
    static constexpr char kMagic[4] = {'T', 'B', 'K', '1'};

    void put_f64(const std::string& name, const Shape& shape, const double* values);
    void put_f32(const std::string& name, const Shape& shape, const float* values);
    void put_i8(const std::string& name, const Shape& shape, const std::int8_t* values);

    const ArchiveEntry* find(const std::string& name) const;
    const std::vector<ArchiveEntry>& entries() const { return entries_; }

    void write(std::ostream& out) const;
    static Archive read(std::istream& in);

    void save_file(const std::string& path) const;
    static Archive load_file(const std::string& path);

    /// Exact serialized size in bytes, headers included.
    std::size_t byte_size() const;

private:
    std::vector<ArchiveEntry> entries_;
};

}  // namespace mbk
