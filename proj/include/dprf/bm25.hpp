#pragma once

#include <map>
#include <string>
#include <vector>

#include "dprf/data_io.hpp"
#include "dprf/run_io.hpp"

namespace dprf {

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

// Inverted corpus statistics for Okapi BM25 scoring and ranking.
class Bm25Stats {
public:
    static Bm25Stats build(const std::vector<DocumentRecord>& corpus);

    std::size_t num_docs() const { return doc_ids_.size(); }
    double avg_doc_len() const { return avgdl_; }
    std::size_t df(const std::string& term) const;

    // idf = ln(1 + (N - df + 0.5)/(df + 0.5)); nonnegative by construction.
    double idf(const std::string& term) const;

    // Rank the whole corpus for each query; docs sharing no query term are
    // omitted. Scores match bm25_score exactly.
    RunList rank(const std::vector<QueryRecord>& queries, std::size_t depth,
                 Bm25Params params = {}, const std::string& run_tag = "bm25") const;

private:
    struct Posting {
        std::size_t doc;
        std::size_t tf;
    };

    std::vector<std::string> doc_ids_;
    std::vector<std::size_t> doc_lens_;
    double avgdl_ = 0.0;
    std::map<std::string, std::vector<Posting>> postings_;
};

// Okapi BM25 of one query/document pair. Each query token occurrence
// contributes idf * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl)).
double bm25_score(const std::vector<std::string>& query_terms,
                  const std::vector<std::string>& doc_terms, const Bm25Stats& stats,
                  Bm25Params params = {});

}  // namespace dprf
