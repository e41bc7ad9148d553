#include "dprf/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dprf/vocab.hpp"

namespace dprf {

Bm25Stats Bm25Stats::build(const std::vector<DocumentRecord>& corpus) {
    Bm25Stats stats;
    stats.doc_ids_.reserve(corpus.size());
    stats.doc_lens_.reserve(corpus.size());
    std::size_t total_len = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto words = tokenize_words(corpus[i].text);
        stats.doc_ids_.push_back(corpus[i].doc_id);
        stats.doc_lens_.push_back(words.size());
        total_len += words.size();
        std::map<std::string, std::size_t> tf;
        for (const auto& w : words) ++tf[w];
        for (const auto& [w, n] : tf) stats.postings_[w].push_back({i, n});
    }
    stats.avgdl_ = corpus.empty() ? 0.0
                                  : static_cast<double>(total_len) /
                                        static_cast<double>(corpus.size());
    return stats;
}

std::size_t Bm25Stats::df(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Stats::idf(const std::string& term) const {
    const double n = static_cast<double>(num_docs());
    const double d = static_cast<double>(df(term));
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

namespace {

double term_weight(std::size_t tf, std::size_t dl, double avgdl, Bm25Params p) {
    if (tf == 0) return 0.0;
    const double norm = avgdl > 0.0 ? static_cast<double>(dl) / avgdl : 0.0;
    const double f = static_cast<double>(tf);
    return f * (p.k1 + 1.0) / (f + p.k1 * (1.0 - p.b + p.b * norm));
}

}  // namespace

double bm25_score(const std::vector<std::string>& query_terms,
                  const std::vector<std::string>& doc_terms, const Bm25Stats& stats,
                  Bm25Params params) {
    std::map<std::string, std::size_t> tf;
    for (const auto& w : doc_terms) ++tf[w];
    const std::size_t dl = doc_terms.size();
    double score = 0.0;
    for (const auto& term : query_terms) {
        auto it = tf.find(term);
        if (it == tf.end()) continue;
        score += stats.idf(term) * term_weight(it->second, dl, stats.avg_doc_len(), params);
    }
    return score;
}

RunList Bm25Stats::rank(const std::vector<QueryRecord>& queries, std::size_t depth,
                        Bm25Params params, const std::string& run_tag) const {
    RunList run;
    run.run_tag = run_tag;
    for (const auto& query : queries) {
        auto& entry = run.add(query.query_id);
        std::map<std::size_t, double> scores;
        for (const auto& term : tokenize_words(query.text)) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            const double idf_w = idf(term);
            for (const auto& post : it->second)
                scores[post.doc] += idf_w * term_weight(post.tf, doc_lens_[post.doc],
                                                        avgdl_, params);
        }
        std::vector<std::pair<std::size_t, double>> ranked(scores.begin(), scores.end());
        std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return doc_ids_[a.first] < doc_ids_[b.first];
        });
        const std::size_t n = std::min(depth, ranked.size());
        for (std::size_t r = 0; r < n; ++r)
            entry.hits.push_back({doc_ids_[ranked[r].first], ranked[r].second,
                                  static_cast<int>(r + 1)});
    }
    return run;
}

}  // namespace dprf
