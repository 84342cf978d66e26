#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lexalign/matrix.hpp"

namespace lexalign {

/// Bad user input: unknown keys, out-of-range values, malformed files.
/// The CLI maps this to exit code 1; everything else lands on 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);
std::string hash_hex(std::uint64_t h);

std::uint64_t hash_file(const std::filesystem::path& p);
std::uint64_t hash_matrix(const Matrix& m);

// ---------------------------------------------------------------------------
// Little-endian binary primitives. Checkpoints and indexes are pinned to
// little-endian 64-bit payloads regardless of host.
// ---------------------------------------------------------------------------

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
void write_string(std::ostream& os, const std::string& s);
void write_matrix(std::ostream& os, const Matrix& m);

std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
std::string read_string(std::istream& is);
Matrix read_matrix(std::istream& is);

// ---------------------------------------------------------------------------
// Flat key=value config files. '#' starts a comment, blank lines ignored,
// keys must be unique.
// ---------------------------------------------------------------------------

using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text, const std::string& what);
KvMap load_kv_file(const std::filesystem::path& p);

/// Canonical "k=v\n" rendering in sorted key order; the basis for config
/// hashes, so it must stay stable.
std::string canonical_kv(const KvMap& kv);

double kv_double(const KvMap& kv, const std::string& key, double fallback);
std::int64_t kv_int(const KvMap& kv, const std::string& key, std::int64_t fallback);
std::string kv_string(const KvMap& kv, const std::string& key, const std::string& fallback);

/// Throws ConfigError naming the first key not in `allowed`.
void reject_unknown_keys(const KvMap& kv, const std::vector<std::string>& allowed,
                         const std::string& what);

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& content);

/// Formats a double with enough digits to round-trip (shortest form is the
/// json library's job; CSVs use this fixed 17-significant-digit form).
std::string format_double(double v);

}  // namespace lexalign
