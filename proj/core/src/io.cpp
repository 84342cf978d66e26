#include "lexalign/io.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lexalign {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

std::uint64_t hash_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open file for hashing: " + p.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    std::array<char, 1 << 16> buf;
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = static_cast<std::size_t>(is.gcount());
        for (std::size_t i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::uint64_t hash_matrix(const Matrix& m) {
    std::uint64_t h = fnv1a64(&*"mx", 2);
    const std::uint64_t dims[2] = {m.rows(), m.cols()};
    h ^= fnv1a64(dims, sizeof(dims));
    return h ^ fnv1a64(m.data().data(), m.data().size() * sizeof(double));
}

namespace {

void write_bytes_le(std::ostream& os, std::uint64_t v, int nbytes) {
    char buf[8];
    for (int i = 0; i < nbytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, nbytes);
}

std::uint64_t read_bytes_le(std::istream& is, int nbytes) {
    char buf[8];
    is.read(buf, nbytes);
    if (!is) throw std::runtime_error("binary read: unexpected end of stream");
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    }
    return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_bytes_le(os, v, 4); }
void write_u64(std::ostream& os, std::uint64_t v) { write_bytes_le(os, v, 8); }

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_bytes_le(os, bits, 8);
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_matrix(std::ostream& os, const Matrix& m) {
    write_u64(os, m.rows());
    write_u64(os, m.cols());
    for (double v : m.data()) write_f64(os, v);
}

std::uint32_t read_u32(std::istream& is) { return static_cast<std::uint32_t>(read_bytes_le(is, 4)); }
std::uint64_t read_u64(std::istream& is) { return read_bytes_le(is, 8); }

double read_f64(std::istream& is) {
    const std::uint64_t bits = read_bytes_le(is, 8);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("binary read: truncated string");
    return s;
}

Matrix read_matrix(std::istream& is) {
    const std::uint64_t rows = read_u64(is);
    const std::uint64_t cols = read_u64(is);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = read_f64(is);
    return m;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KvMap parse_kv_text(const std::string& text, const std::string& what) {
    KvMap out;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(what + ": line " + std::to_string(lineno) + " is not key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(what + ": empty key at line " + std::to_string(lineno));
        }
        if (!out.emplace(key, val).second) {
            throw ConfigError(what + ": duplicate key '" + key + "'");
        }
    }
    return out;
}

KvMap load_kv_file(const std::filesystem::path& p) {
    return parse_kv_text(read_text_file(p), p.string());
}

std::string canonical_kv(const KvMap& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

double kv_double(const KvMap& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + it->second + "' is not a number");
    }
}

std::int64_t kv_int(const KvMap& kv, const std::string& key, std::int64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::int64_t v = 0;
    const auto* b = it->second.data();
    const auto* e = b + it->second.size();
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e) {
        throw ConfigError("config key '" + key + "': '" + it->second + "' is not an integer");
    }
    return v;
}

std::string kv_string(const KvMap& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

void reject_unknown_keys(const KvMap& kv, const std::vector<std::string>& allowed,
                         const std::string& what) {
    for (const auto& [k, _] : kv) {
        bool ok = false;
        for (const auto& a : allowed) {
            if (k == a) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError(what + ": unknown config key '" + k + "'");
    }
}

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw ConfigError("cannot open file: " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write file: " + p.string());
    os << content;
    if (!os) throw std::runtime_error("write failed: " + p.string());
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace lexalign
