#include "path/common.hpp"

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace path {

uint64_t fnv1a64(std::string_view data, uint64_t seed) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= static_cast<uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64(std::string_view data) {
    return fnv1a64(data, 0xcbf29ce484222325ULL);
}

std::string to_hex(uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

std::string digest_hex(std::string_view data) {
    return to_hex(fnv1a64(data));
}

std::string read_file(const std::string& file_path) {
    std::ifstream in(file_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file: " + file_path);
    }
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::string& file_path, std::string_view content) {
    ensure_parent_dir(file_path);
    std::ofstream out(file_path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write file: " + file_path);
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw IoError("write failed: " + file_path);
    }
}

void append_file(const std::string& file_path, std::string_view content) {
    ensure_parent_dir(file_path);
    std::ofstream out(file_path, std::ios::binary | std::ios::app);
    if (!out) {
        throw IoError("cannot append to file: " + file_path);
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw IoError("append failed: " + file_path);
    }
}

bool file_exists(const std::string& file_path) {
    std::error_code ec;
    return fs::exists(file_path, ec);
}

void ensure_parent_dir(const std::string& file_path) {
    fs::path p(file_path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
}

void ensure_dir(const std::string& dir_path) {
    std::error_code ec;
    fs::create_directories(dir_path, ec);
    if (ec) {
        throw IoError("cannot create directory: " + dir_path);
    }
}

std::string trim(std::string_view s) {
    size_t begin = 0;
    size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> parts;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) {
            parts.emplace_back(s.substr(start, i - start));
        }
    }
    return parts;
}

std::string collapse_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) {
            out.push_back(' ');
        }
        in_space = false;
        out.push_back(c);
    }
    return out;
}

std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return std::string(buf);
}

}  // namespace path
