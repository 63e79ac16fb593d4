#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xling/matrix.hpp"

namespace xling {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw io_error("read failure: " + path.string());
    return ss.str();
}

// Write-to-temp-then-rename; readers never observe a partially written file.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open file for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw io_error("write failure: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
    };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

// Locale-independent numeric parsing.
inline std::optional<double> parse_double(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    long long v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

// Shortest round-trip-exact representation.
inline std::string format_exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// FNV-1a, used for artifact content fingerprints in run manifests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

inline std::string hash_file_hex(const std::filesystem::path& path) {
    return hash_hex(read_file(path));
}

// ---------------------------------------------------------------------------
// Shared text matrix format: "<rows> <cols>" header, one whitespace-separated
// row per line. Embedding tables use the same layout with a leading token
// column; model/map blocks use it bare, at full precision.
// ---------------------------------------------------------------------------

inline void write_matrix(std::string& out, const Matrix& m, int decimals = -1) {
    out += std::to_string(m.rows);
    out += ' ';
    out += std::to_string(m.cols);
    out += '\n';
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) out += ' ';
            out += decimals >= 0 ? format_fixed(m(i, j), decimals) : format_exact(m(i, j));
        }
        out += '\n';
    }
}

// Reads one matrix block starting at lines[pos]; advances pos past the block.
inline Matrix read_matrix(const std::vector<std::string_view>& lines, std::size_t& pos,
                          const std::string& context) {
    while (pos < lines.size() && trim(lines[pos]).empty()) ++pos;
    if (pos >= lines.size()) throw parse_error(context + ": missing matrix header");
    const auto header = split_ws(lines[pos]);
    if (header.size() != 2)
        throw parse_error(context + ": bad matrix header at line " + std::to_string(pos + 1));
    const auto r = parse_int(header[0]);
    const auto c = parse_int(header[1]);
    if (!r || !c || *r < 0 || *c <= 0)
        throw parse_error(context + ": bad matrix header at line " + std::to_string(pos + 1));
    ++pos;
    Matrix m(static_cast<std::size_t>(*r), static_cast<std::size_t>(*c));
    for (std::size_t i = 0; i < m.rows; ++i, ++pos) {
        if (pos >= lines.size())
            throw parse_error(context + ": truncated matrix, expected " + std::to_string(*r) +
                              " rows");
        const auto fields = split_ws(lines[pos]);
        if (fields.size() != m.cols)
            throw parse_error(context + ": row length " + std::to_string(fields.size()) +
                              " != cols " + std::to_string(m.cols) + " at line " +
                              std::to_string(pos + 1));
        for (std::size_t j = 0; j < m.cols; ++j) {
            const auto v = parse_double(fields[j]);
            if (!v)
                throw parse_error(context + ": non-numeric value at line " +
                                  std::to_string(pos + 1));
            m(i, j) = *v;
        }
    }
    return m;
}

inline Matrix load_matrix_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    const auto lines = split_lines(text);
    std::size_t pos = 0;
    return read_matrix(lines, pos, path.string());
}

inline void save_matrix_file(const std::filesystem::path& path, const Matrix& m,
                             int decimals = -1) {
    std::string out;
    write_matrix(out, m, decimals);
    atomic_write(path, out);
}

}  // namespace xling
