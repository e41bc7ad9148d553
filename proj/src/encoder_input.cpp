#include "dprf/encoder_input.hpp"

#include <algorithm>

namespace dprf {

std::size_t TokenSequence::real_length() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
}

namespace {

void pad_to(TokenSequence& seq, std::size_t max_len) {
    while (seq.ids.size() < max_len) {
        seq.ids.push_back(Vocabulary::kPad);
        seq.mask.push_back(0);
    }
}

std::vector<int> truncated_query(const std::vector<int>& query_ids, const InputBudget& budget) {
    std::vector<int> q(query_ids.begin(),
                       query_ids.begin() + std::min(query_ids.size(), budget.query_budget));
    return q;
}

}  // namespace

TokenSequence build_query_input(const std::vector<int>& query_ids, const InputBudget& budget) {
    const auto q = truncated_query(query_ids, budget);
    if (q.empty()) throw InputError("empty query");
    if (q.size() + 2 > budget.max_len)
        throw InputError("query does not fit in max_len");

    TokenSequence seq;
    seq.ids.reserve(budget.max_len);
    seq.mask.reserve(budget.max_len);
    seq.ids.push_back(Vocabulary::kCls);
    seq.ids.insert(seq.ids.end(), q.begin(), q.end());
    seq.ids.push_back(Vocabulary::kSep);
    seq.mask.assign(seq.ids.size(), 1);
    pad_to(seq, budget.max_len);
    return seq;
}

TokenSequence build_doc_input(const std::vector<int>& doc_ids, std::size_t max_len) {
    if (max_len < 2) throw InputError("max_len must be >= 2");
    const std::size_t keep = std::min(doc_ids.size(), max_len - 2);
    TokenSequence seq;
    seq.ids.reserve(max_len);
    seq.ids.push_back(Vocabulary::kCls);
    seq.ids.insert(seq.ids.end(), doc_ids.begin(), doc_ids.begin() + keep);
    seq.ids.push_back(Vocabulary::kSep);
    seq.mask.assign(seq.ids.size(), 1);
    pad_to(seq, max_len);
    return seq;
}

PrfInput build_prf_input(const std::vector<int>& query_ids,
                         const std::vector<std::vector<int>>& prf_docs,
                         const InputBudget& budget) {
    const auto q = truncated_query(query_ids, budget);
    if (q.empty()) throw InputError("empty query");

    const std::size_t k = prf_docs.size();
    // [CLS] + query + [SEP] + one [SEP] per document.
    const std::size_t overhead = 2 + q.size() + k;
    if (overhead > budget.max_len)
        throw InputError("query plus separators exceed max_len; reduce k");
    const std::size_t doc_token_budget = budget.max_len - overhead;

    // Tail-truncate the concatenated document region: later documents lose
    // tokens first.
    std::vector<std::size_t> doc_keep(k, 0);
    std::size_t remaining = doc_token_budget;
    for (std::size_t i = 0; i < k && remaining > 0; ++i) {
        doc_keep[i] = std::min(prf_docs[i].size(), remaining);
        remaining -= doc_keep[i];
    }

    PrfInput input;
    auto& seq = input.seq;
    seq.ids.reserve(budget.max_len);
    seq.ids.push_back(Vocabulary::kCls);
    seq.ids.insert(seq.ids.end(), q.begin(), q.end());
    input.query_span = {1, 1 + q.size()};
    seq.ids.push_back(Vocabulary::kSep);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t begin = seq.ids.size();
        seq.ids.insert(seq.ids.end(), prf_docs[i].begin(), prf_docs[i].begin() + doc_keep[i]);
        input.doc_spans.push_back({begin, seq.ids.size()});
        seq.ids.push_back(Vocabulary::kSep);
    }
    seq.mask.assign(seq.ids.size(), 1);
    pad_to(seq, budget.max_len);
    return input;
}

}  // namespace dprf
