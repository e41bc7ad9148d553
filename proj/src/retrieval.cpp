#include "dprf/retrieval.hpp"

#include <atomic>

#include "dprf/parallel.hpp"

namespace dprf {

DocTokens::DocTokens(const std::vector<DocumentRecord>& corpus, const Vocabulary& vocab) {
    for (const auto& doc : corpus) tokens_[doc.doc_id] = tokenize(doc.text, vocab);
}

const std::vector<int>& DocTokens::tokens(const std::string& doc_id) const {
    auto it = tokens_.find(doc_id);
    if (it == tokens_.end()) throw RetrievalError("no text for doc id '" + doc_id + "'");
    return it->second;
}

RunList::Entry first_pass(const QueryRecord& query, const EncoderParams& encoder,
                          const Vocabulary& vocab, const FlatIndex& index, std::size_t depth,
                          RetrievalCounters* counters) {
    const auto query_tokens = tokenize(query.text, vocab);
    if (query_tokens.empty())
        throw RetrievalError("query '" + query.query_id + "' is empty after tokenization");
    const auto seq = build_query_input(query_tokens, encoder.config.budget());
    const auto embedding = encode(encoder, seq);
    if (counters) ++counters->encoder_calls;
    auto hits = index.search(embedding, depth);
    if (counters) ++counters->index_searches;
    return {query.query_id, std::move(hits)};
}

RunList::Entry prf_retrieve(const QueryRecord& query, const EncoderParams& prf_encoder,
                            const EncoderParams& baseline_encoder, const Vocabulary& vocab,
                            const FlatIndex& index, const DocTokens& doc_tokens,
                            const PrfConfig& config, RetrievalCounters* counters) {
    config.validate();
    const auto query_tokens = tokenize(query.text, vocab);
    if (query_tokens.empty())
        throw RetrievalError("query '" + query.query_id + "' is empty after tokenization");

    std::vector<std::vector<int>> feedback;
    if (config.k > 0) {
        const auto first = first_pass(query, baseline_encoder, vocab, index,
                                      config.first_pass_depth, counters);
        const std::size_t k = std::min(config.k, first.hits.size());
        feedback.reserve(k);
        for (std::size_t i = 0; i < k; ++i)
            feedback.push_back(doc_tokens.tokens(first.hits[i].doc_id));
    }

    const auto input = build_prf_input(query_tokens, feedback, prf_encoder.config.budget());
    const auto embedding = encode(prf_encoder, input);
    if (counters) ++counters->encoder_calls;
    auto hits = index.search(embedding, config.final_depth);
    if (counters) ++counters->index_searches;
    return {query.query_id, std::move(hits)};
}

namespace {

template <typename PerQuery>
RunList assemble_run(const std::vector<QueryRecord>& queries, const std::string& run_tag,
                     int threads, RetrievalCounters* counters, PerQuery per_query) {
    RunList run;
    run.run_tag = run_tag;
    run.entries.resize(queries.size());
    std::atomic<std::size_t> encoder_calls{0}, index_searches{0};
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        RetrievalCounters local;
        run.entries[i] = per_query(queries[i], &local);
        encoder_calls += local.encoder_calls;
        index_searches += local.index_searches;
    });
    if (counters) {
        counters->encoder_calls += encoder_calls.load();
        counters->index_searches += index_searches.load();
    }
    return run;
}

}  // namespace

RunList first_pass_run(const std::vector<QueryRecord>& queries, const EncoderParams& encoder,
                       const Vocabulary& vocab, const FlatIndex& index, std::size_t depth,
                       const std::string& run_tag, int threads, RetrievalCounters* counters) {
    return assemble_run(queries, run_tag, threads, counters,
                        [&](const QueryRecord& q, RetrievalCounters* c) {
                            return first_pass(q, encoder, vocab, index, depth, c);
                        });
}

RunList prf_run(const std::vector<QueryRecord>& queries, const EncoderParams& prf_encoder,
                const EncoderParams& baseline_encoder, const Vocabulary& vocab,
                const FlatIndex& index, const DocTokens& doc_tokens, const PrfConfig& config,
                const std::string& run_tag, int threads, RetrievalCounters* counters) {
    return assemble_run(queries, run_tag, threads, counters,
                        [&](const QueryRecord& q, RetrievalCounters* c) {
                            return prf_retrieve(q, prf_encoder, baseline_encoder, vocab, index,
                                                doc_tokens, config, c);
                        });
}

FlatIndex build_corpus_index(const EncoderParams& encoder, const std::vector<DocumentRecord>& corpus,
                             const Vocabulary& vocab, int threads) {
    if (corpus.empty()) throw RetrievalError("cannot index an empty corpus");
    std::vector<std::pair<std::string, EmbeddingVector>> rows(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        const auto seq = build_doc_input(tokenize(corpus[i].text, vocab), encoder.config.max_len);
        rows[i] = {corpus[i].doc_id, encode(encoder, seq)};
    });
    return FlatIndex::build(rows);
}

}  // namespace dprf
