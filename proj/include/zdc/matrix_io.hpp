// ZDCM matrix files: "ZDCM", u32 LE rows, u32 LE cols, rows*cols f64 LE.
// JSON mirror: {"rows": r, "cols": c, "data": [...]} for small fixtures.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zdc/matrix.hpp"

namespace zdc {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
    std::array<unsigned char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> bytes{};
    if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
        throw std::runtime_error("zdcm: truncated stream");
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace detail

inline constexpr std::array<char, 4> kZdcmMagic{'Z', 'D', 'C', 'M'};

inline void write_zdcm(std::ostream& os, const Matrix& m) {
    if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) throw std::invalid_argument("zdcm: matrix too large");
    os.write(kZdcmMagic.data(), kZdcmMagic.size());
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) detail::put_le<double>(os, v);
    if (!os) throw std::runtime_error("zdcm: write failed");
}

inline Matrix read_zdcm(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kZdcmMagic) {
        throw std::runtime_error("zdcm: bad magic");
    }
    const auto rows = detail::get_le<std::uint32_t>(is);
    const auto cols = detail::get_le<std::uint32_t>(is);
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) v = detail::get_le<double>(is);
    return Matrix(rows, cols, std::move(data));
}

inline void save_zdcm(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_zdcm(os, m);
}

inline Matrix load_zdcm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read_zdcm(is);
}

inline std::string to_zdcm_bytes(const Matrix& m) {
    std::ostringstream os(std::ios::binary);
    write_zdcm(os, m);
    return os.str();
}

inline nlohmann::json to_json(const Matrix& m) {
    return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

/// Row vector helper for singular-value files.
inline Matrix as_row(const std::vector<double>& v) { return Matrix(1, v.size(), v); }

}  // namespace zdc
