#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dprf/vocab.hpp"

namespace dprf {

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Half-open token-position interval [begin, end).
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
};

// Padded id sequence. First token is [CLS]; mask is 1 on real tokens and 0 on
// the trailing padding.
struct TokenSequence {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;

    std::size_t real_length() const;

    bool operator==(const TokenSequence&) const = default;
};

// Eq.-style feedback input: [CLS] q [SEP] d1 [SEP] ... dk [SEP], with the
// query span and one span per feedback document recorded in rank order.
// A fully truncated document keeps its (empty) span and its [SEP].
struct PrfInput {
    TokenSequence seq;
    Span query_span;
    std::vector<Span> doc_spans;
};

struct InputBudget {
    std::size_t max_len = 128;
    std::size_t query_budget = 24;
};

// [CLS] + query truncated to query_budget + [SEP], padded to max_len.
TokenSequence build_query_input(const std::vector<int>& query_ids, const InputBudget& budget);

// [CLS] + document truncated to max_len - 2 + [SEP], padded to max_len.
// Empty documents are allowed and encode as [CLS] [SEP].
TokenSequence build_doc_input(const std::vector<int>& doc_ids, std::size_t max_len);

// Feedback layout with the document region tail-truncated as one
// concatenated block, so lower-ranked documents lose tokens first. The query
// is truncated to query_budget exactly as in build_query_input, which makes
// the k=0 case bit-identical to build_query_input.
PrfInput build_prf_input(const std::vector<int>& query_ids,
                         const std::vector<std::vector<int>>& prf_docs,
                         const InputBudget& budget);

}  // namespace dprf
