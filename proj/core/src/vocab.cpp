#include "lexalign/vocab.hpp"

#include <fstream>
#include <unordered_set>

#include "lexalign/io.hpp"

namespace lexalign {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    validate();
}

void Vocabulary::validate() const {
    if (tokens_.size() < 2) {
        throw ConfigError("vocabulary must contain at least 2 tokens, got " +
                          std::to_string(tokens_.size()));
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) {
            throw ConfigError("vocabulary: empty token at line " + std::to_string(i + 1));
        }
        if (!seen.insert(tokens_[i]).second) {
            throw ConfigError("vocabulary: duplicate token '" + tokens_[i] + "'");
        }
    }
}

Vocabulary Vocabulary::synthetic(std::size_t size) {
    std::size_t width = 1;
    for (std::size_t v = size > 0 ? size - 1 : 0; v >= 10; v /= 10) ++width;
    if (width < 3) width = 3;
    std::vector<std::string> tokens;
    tokens.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        std::string num = std::to_string(i);
        tokens.push_back("tok" + std::string(width - num.size(), '0') + num);
    }
    return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw ConfigError("cannot open vocabulary file: " + p.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& p) const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    write_text_file(p, out);
}

std::int64_t Vocabulary::id_of(const std::string& token) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i] == token) return static_cast<std::int64_t>(i);
    }
    return -1;
}

}  // namespace lexalign
