#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dprf {

struct VocabError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Token ids are contiguous from 0 with the four specials pinned first.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr const char* kSpecials[4] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

    Vocabulary();

    // Appends a non-special token; returns its id. Duplicate tokens throw.
    int add(const std::string& token);

    int id_of(std::string_view token) const;  // kUnk when absent
    const std::string& token_of(int id) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    // One token per line, line number == id. Specials must occupy lines 0-3.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int, std::less<>> ids_;
};

// Splits text into lowercase word tokens: maximal runs of [a-z0-9_] after
// ASCII lowercasing; every other byte is a separator.
std::vector<std::string> tokenize_words(std::string_view text);

// Word tokens with frequency >= min_count, ordered by frequency descending
// then lexicographic, after the pinned specials.
Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t min_count);

// Word split plus vocabulary lookup; unknown words map to [UNK].
std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab);

}  // namespace dprf
