#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "frito/tensor.hpp"

namespace frito {

// FRT1 tensor file:
//   4 bytes  magic "FRT1"
//   1 byte   dtype: 0 = f32, 1 = f64
//   1 byte   ndim
//   2 bytes  reserved, zero
//   ndim x 8 bytes  little-endian unsigned dims
//   payload  row-major scalars, little-endian

namespace frt1 {

constexpr char kMagic[4] = {'F', 'R', 'T', '1'};

template <class T>
constexpr std::uint8_t dtype_code() {
    return std::is_same_v<T, float> ? 0 : 1;
}

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace frt1

template <class T>
std::vector<std::uint8_t> tensor_to_bytes(const Tensor<T>& t) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 8 * t.ndim() + t.size() * sizeof(T));
    out.insert(out.end(), frt1::kMagic, frt1::kMagic + 4);
    out.push_back(frt1::dtype_code<T>());
    out.push_back(static_cast<std::uint8_t>(t.ndim()));
    out.push_back(0);
    out.push_back(0);
    for (std::size_t d : t.shape()) frt1::put_u64_le(out, d);

    if constexpr (std::endian::native == std::endian::little) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
        out.insert(out.end(), p, p + t.size() * sizeof(T));
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            if constexpr (sizeof(T) == 4) {
                const auto bits = std::bit_cast<std::uint32_t>(t[i]);
                for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
            } else {
                const auto bits = std::bit_cast<std::uint64_t>(t[i]);
                for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
            }
        }
    }
    return out;
}

template <class T>
Tensor<T> tensor_from_bytes(const std::uint8_t* p, std::size_t len, const std::string& origin) {
    auto truncated = [&](std::size_t expected) {
        throw TruncatedError("truncated FRT1 data in " + origin + ": expected " +
                             std::to_string(expected) + " bytes, got " + std::to_string(len));
    };
    if (len < 8) truncated(8);
    if (std::memcmp(p, frt1::kMagic, 4) != 0) {
        throw BadMagicError("bad FRT1 magic in " + origin);
    }
    const std::uint8_t dtype = p[4];
    if (dtype > 1) {
        throw BadDtypeError("unknown FRT1 dtype code " + std::to_string(dtype) + " in " + origin);
    }
    if (dtype != frt1::dtype_code<T>()) {
        throw BadDtypeError("FRT1 dtype mismatch in " + origin + ": file holds " +
                            std::string(dtype == 0 ? "f32" : "f64") + ", caller wants " +
                            std::string(frt1::dtype_code<T>() == 0 ? "f32" : "f64"));
    }
    const std::size_t ndim = p[5];
    if (ndim == 0) throw CorruptError("FRT1 rank 0 in " + origin);
    const std::size_t header = 8 + 8 * ndim;
    if (len < header) truncated(header);

    std::vector<std::size_t> shape(ndim);
    std::size_t count = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        shape[i] = static_cast<std::size_t>(frt1::get_u64_le(p + 8 + 8 * i));
        if (shape[i] == 0) throw CorruptError("FRT1 zero dimension in " + origin);
        count *= shape[i];
    }
    const std::size_t expected = header + count * sizeof(T);
    if (len != expected) truncated(expected);

    std::vector<T> data(count);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(data.data(), p + header, count * sizeof(T));
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint8_t* q = p + header + i * sizeof(T);
            if constexpr (sizeof(T) == 4) {
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(q[b]) << (8 * b);
                data[i] = std::bit_cast<float>(bits);
            } else {
                std::uint64_t bits = 0;
                for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(q[b]) << (8 * b);
                data[i] = std::bit_cast<double>(bits);
            }
        }
    }
    return Tensor<T>(std::move(shape), std::move(data));
}

template <class T>
void tensor_write(const Tensor<T>& t, const std::string& path) {
    const auto bytes = tensor_to_bytes(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + path);
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for reading");
    f.seekg(0, std::ios::end);
    const auto len = static_cast<std::size_t>(f.tellg());
    f.seekg(0);
    std::vector<std::uint8_t> bytes(len);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(len));
    if (!f) throw IoError("read failed for " + path);
    return bytes;
}

template <class T>
Tensor<T> tensor_read(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return tensor_from_bytes<T>(bytes.data(), bytes.size(), path);
}

// Dtype code of an FRT1 file without loading the payload: 0 = f32, 1 = f64.
inline std::uint8_t tensor_peek_dtype(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 8) throw TruncatedError("truncated FRT1 header in " + path);
    if (std::memcmp(bytes.data(), frt1::kMagic, 4) != 0) {
        throw BadMagicError("bad FRT1 magic in " + path);
    }
    if (bytes[4] > 1) throw BadDtypeError("unknown FRT1 dtype code in " + path);
    return bytes[4];
}

}  // namespace frito
