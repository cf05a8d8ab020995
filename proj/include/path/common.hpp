#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace path {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File or format problems; messages carry file names and line numbers.
struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// LM transport, authentication, or retry-budget failures.
struct LmError : Error {
    using Error::Error;
};

// A single PATH trial failed (bad prompt, degenerate generation). The outer
// loop records these and moves on; they are fatal only outside run_path().
struct TrialError : Error {
    using Error::Error;
};

// External-trainer protocol violations (exit code, run format, timeout).
struct ProtocolError : Error {
    using Error::Error;
};

// FNV-1a, 64-bit. Used for content digests and template hashes; stable
// across platforms, not cryptographic.
uint64_t fnv1a64(std::string_view data);
uint64_t fnv1a64(std::string_view data, uint64_t seed);
std::string to_hex(uint64_t value);
std::string digest_hex(std::string_view data);

std::string read_file(const std::string& file_path);
void write_file(const std::string& file_path, std::string_view content);
void append_file(const std::string& file_path, std::string_view content);
bool file_exists(const std::string& file_path);
void ensure_parent_dir(const std::string& file_path);
void ensure_dir(const std::string& dir_path);

std::string trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
// Collapses internal runs of whitespace (incl. tabs/newlines) to single spaces.
std::string collapse_ws(std::string_view s);

// Fixed-precision decimal formatting (no locale surprises).
std::string format_fixed(double value, int decimals);

}  // namespace path
