#include "dprf/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace dprf {

Vocabulary::Vocabulary() {
    for (const char* s : kSpecials) add(s);
}

int Vocabulary::add(const std::string& token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
    if (!inserted) throw VocabError("duplicate token '" + token + "'");
    tokens_.push_back(token);
    return it->second;
}

int Vocabulary::id_of(std::string_view token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw VocabError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw VocabError("cannot open '" + path + "' for writing");
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw VocabError("write failed for '" + path + "'");
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw VocabError("cannot open '" + path + "'");
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        if (lineno < 4) {
            if (line != kSpecials[lineno])
                throw VocabError("vocab line " + std::to_string(lineno + 1) +
                                 ": expected special '" + kSpecials[lineno] + "', got '" + line + "'");
        } else {
            if (line.empty())
                throw VocabError("vocab line " + std::to_string(lineno + 1) + ": empty token");
            v.add(line);
        }
        ++lineno;
    }
    if (lineno < 4) throw VocabError("vocab file missing special tokens");
    return v;
}

namespace {
inline bool is_word_char(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}
}  // namespace

std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char raw : text) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
        if (is_word_char(c)) {
            cur.push_back(static_cast<char>(c));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t min_count) {
    if (texts.empty()) throw VocabError("build_vocab: empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& text : texts)
        for (auto& w : tokenize_words(text)) ++counts[w];

    std::vector<std::pair<std::string, std::size_t>> kept(counts.begin(), counts.end());
    std::erase_if(kept, [&](const auto& p) { return p.second < min_count; });
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    for (const auto& [w, n] : kept) v.add(w);
    return v;
}

std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const auto& w : tokenize_words(text)) ids.push_back(vocab.id_of(w));
    return ids;
}

}  // namespace dprf
