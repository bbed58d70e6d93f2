#include "mbk/archive.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mbk {

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
    std::uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) {
        throw IoError("archive: truncated stream");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    }
    return v;
}

}  // namespace

std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f64:
            return 8;
        case Dtype::f32:
            return 4;
        case Dtype::i8:
            return 1;
    }
    throw IoError("archive: unknown dtype tag");
}

std::vector<double> ArchiveEntry::as_f64() const {
    const auto n = static_cast<std::size_t>(count());
    std::vector<double> out(n);
    if (dtype == Dtype::f64) {
        std::memcpy(out.data(), payload.data(), n * 8);
    } else if (dtype == Dtype::f32) {
        const auto* p = reinterpret_cast<const float*>(payload.data());
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = static_cast<double>(p[i]);
        }
    } else {
        const auto* p = reinterpret_cast<const std::int8_t*>(payload.data());
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = static_cast<double>(p[i]);
        }
    }
    return out;
}

std::vector<float> ArchiveEntry::as_f32() const {
    const auto n = static_cast<std::size_t>(count());
    std::vector<float> out(n);
    if (dtype == Dtype::f32) {
        std::memcpy(out.data(), payload.data(), n * 4);
    } else if (dtype == Dtype::f64) {
        const auto* p = reinterpret_cast<const double*>(payload.data());
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = static_cast<float>(p[i]);
        }
    } else {
        const auto* p = reinterpret_cast<const std::int8_t*>(payload.data());
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = static_cast<float>(p[i]);
        }
    }
    return out;
}

const std::int8_t* ArchiveEntry::as_i8() const {
    if (dtype != Dtype::i8) {
        throw IoError("archive: entry " + name + " is not int8");
    }
    return reinterpret_cast<const std::int8_t*>(payload.data());
}

namespace {
void put_raw(std::vector<ArchiveEntry>& entries, const std::string& name, Dtype dtype,
             const Shape& shape, const void* values) {
    ArchiveEntry e;
    e.name = name;
    e.dtype = dtype;
    e.shape = shape;
    const std::size_t bytes = static_cast<std::size_t>(numel(shape)) * dtype_size(dtype);
    e.payload.resize(bytes);
    std::memcpy(e.payload.data(), values, bytes);
    entries.push_back(std::move(e));
}
}  // namespace

void Archive::put_f64(const std::string& name, const Shape& shape, const double* values) {
    put_raw(entries_, name, Dtype::f64, shape, values);
}
void Archive::put_f32(const std::string& name, const Shape& shape, const float* values) {
    put_raw(entries_, name, Dtype::f32, shape, values);
}
void Archive::put_i8(const std::string& name, const Shape& shape, const std::int8_t* values) {
    put_raw(entries_, name, Dtype::i8, shape, values);
}

const ArchiveEntry* Archive::find(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) {
            return &e;
        }
    }
    return nullptr;
}

void Archive::write(std::ostream& out) const {
    out.write(kMagic, 4);
    write_u64(out, entries_.size());
    for (const auto& e : entries_) {
        write_u64(out, e.name.size());
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        const auto tag = static_cast<char>(e.dtype);
        out.write(&tag, 1);
        write_u64(out, e.shape.size());
        for (auto extent : e.shape) {
            write_u64(out, static_cast<std::uint64_t>(extent));
        }
        out.write(reinterpret_cast<const char*>(e.payload.data()),
                  static_cast<std::streamsize>(e.payload.size()));
    }
    if (!out) {
        throw IoError("archive: write failed");
    }
}

Archive Archive::read(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("archive: bad magic, expected TBK1");
    }
    Archive a;
    const std::uint64_t count = read_u64(in);
    a.entries_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        ArchiveEntry e;
        const std::uint64_t name_len = read_u64(in);
        e.name.resize(name_len);
        in.read(e.name.data(), static_cast<std::streamsize>(name_len));
        char tag = 0;
        in.read(&tag, 1);
        if (tag < 0 || tag > 2) {
            throw IoError("archive: unknown dtype tag " + std::to_string(int(tag)));
        }
        e.dtype = static_cast<Dtype>(tag);
        const std::uint64_t rank = read_u64(in);
        e.shape.resize(rank);
        for (auto& extent : e.shape) {
            extent = static_cast<std::int64_t>(read_u64(in));
        }
        const std::size_t bytes = static_cast<std::size_t>(numel(e.shape)) * dtype_size(e.dtype);
        e.payload.resize(bytes);
        in.read(reinterpret_cast<char*>(e.payload.data()), static_cast<std::streamsize>(bytes));
        if (!in) {
            throw IoError("archive: truncated entry " + e.name);
        }
        a.entries_.push_back(std::move(e));
    }
    return a;
}

void Archive::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("archive: cannot open " + path + " for writing");
    }
    write(out);
}

Archive Archive::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("archive: cannot open " + path);
    }
    return read(in);
}

std::size_t Archive::byte_size() const {
    std::size_t n = 4 + 8;
    for (const auto& e : entries_) {
        n += 8 + e.name.size() + 1 + 8 + 8 * e.shape.size() + e.payload.size();
    }
    return n;
}

}  // namespace mbk
