#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lexalign {

/// Shared token set both modalities score against. Token id = line number in
/// the vocabulary file (0-based).
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    /// Synthetic placeholder vocabulary: tok000, tok001, ...
    static Vocabulary synthetic(std::size_t size);

    /// One token per line, UTF-8.
    static Vocabulary load(const std::filesystem::path& p);
    void save(const std::filesystem::path& p) const;

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// -1 if absent.
    std::int64_t id_of(const std::string& token) const;

private:
    void validate() const;
    std::vector<std::string> tokens_;
};

}  // namespace lexalign
