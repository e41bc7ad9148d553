#pragma once

#include <map>
#include <string>
#include <vector>

#include "dprf/data_io.hpp"
#include "dprf/encoder.hpp"
#include "dprf/flat_index.hpp"
#include "dprf/run_io.hpp"
#include "dprf/vocab.hpp"

namespace dprf {

struct RetrievalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PrfConfig {
    std::size_t k = 3;
    std::size_t first_pass_depth = 1000;
    std::size_t final_depth = 1000;

    void validate() const {
        if (final_depth < 1 || first_pass_depth < 1)
            throw RetrievalError("retrieval depths must be >= 1");
        if (k > first_pass_depth)
            throw RetrievalError("k must not exceed first_pass_depth");
    }
};

// Per-query work counters; the two-pass overhead contract is exactly one
// extra encoder forward and one extra index search.
struct RetrievalCounters {
    std::size_t encoder_calls = 0;
    std::size_t index_searches = 0;
};

// Pre-tokenized corpus texts keyed by doc id.
class DocTokens {
public:
    DocTokens() = default;
    DocTokens(const std::vector<DocumentRecord>& corpus, const Vocabulary& vocab);

    const std::vector<int>& tokens(const std::string& doc_id) const;

private:
    std::map<std::string, std::vector<int>> tokens_;
};

// Single first-pass retrieval: encode the query, exact top-depth search.
RunList::Entry first_pass(const QueryRecord& query, const EncoderParams& encoder,
                          const Vocabulary& vocab, const FlatIndex& index, std::size_t depth,
                          RetrievalCounters* counters = nullptr);

// Two-pass feedback retrieval: first pass with the baseline encoder, then
// re-encode [CLS] q [SEP] d1 ... dk [SEP] with the feedback encoder and
// search again at final_depth. With k = 0 the first pass is skipped and the
// feedback encoder sees the query alone.
RunList::Entry prf_retrieve(const QueryRecord& query, const EncoderParams& prf_encoder,
                            const EncoderParams& baseline_encoder, const Vocabulary& vocab,
                            const FlatIndex& index, const DocTokens& doc_tokens,
                            const PrfConfig& config, RetrievalCounters* counters = nullptr);

RunList first_pass_run(const std::vector<QueryRecord>& queries, const EncoderParams& encoder,
                       const Vocabulary& vocab, const FlatIndex& index, std::size_t depth,
                       const std::string& run_tag, int threads = 1,
                       RetrievalCounters* counters = nullptr);

RunList prf_run(const std::vector<QueryRecord>& queries, const EncoderParams& prf_encoder,
                const EncoderParams& baseline_encoder, const Vocabulary& vocab,
                const FlatIndex& index, const DocTokens& doc_tokens, const PrfConfig& config,
                const std::string& run_tag, int threads = 1,
                RetrievalCounters* counters = nullptr);

// Encodes every corpus document with the document encoder role.
FlatIndex build_corpus_index(const EncoderParams& encoder, const std::vector<DocumentRecord>& corpus,
                             const Vocabulary& vocab, int threads = 1);

}  // namespace dprf
