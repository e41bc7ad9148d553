#include "doctest.h"

#include "dprf/encoder_input.hpp"
#include "dprf/rng.hpp"

using namespace dprf;

namespace {

constexpr int C = Vocabulary::kCls;
constexpr int S = Vocabulary::kSep;
constexpr int P = Vocabulary::kPad;

// Independent re-layout: concatenate all doc tokens, cut the tail to the
// budget, then re-split by the original document lengths.
std::vector<int> reference_layout(const std::vector<int>& query,
                                  const std::vector<std::vector<int>>& docs,
                                  const InputBudget& budget) {
    std::vector<int> q(query.begin(),
                       query.begin() + std::min(query.size(), budget.query_budget));
    std::vector<int> concat;
    for (const auto& d : docs) concat.insert(concat.end(), d.begin(), d.end());
    const std::size_t doc_budget = budget.max_len - (2 + q.size() + docs.size());
    concat.resize(std::min(concat.size(), doc_budget));

    std::vector<int> out{C};
    out.insert(out.end(), q.begin(), q.end());
    out.push_back(S);
    std::size_t cursor = 0;
    for (const auto& d : docs) {
        const std::size_t take = std::min(d.size(), concat.size() - cursor);
        out.insert(out.end(), concat.begin() + cursor, concat.begin() + cursor + take);
        cursor += take;
        out.push_back(S);
    }
    out.resize(budget.max_len, P);
    return out;
}

}  // namespace

TEST_CASE("query input layout") {
    const InputBudget budget{16, 4};
    const auto seq = build_query_input({10, 11}, budget);
    CHECK(seq.ids.size() == 16);
    CHECK(seq.mask.size() == 16);
    CHECK(seq.ids[0] == C);
    CHECK(seq.ids[1] == 10);
    CHECK(seq.ids[2] == 11);
    CHECK(seq.ids[3] == S);
    CHECK(seq.ids[4] == P);
    CHECK(seq.real_length() == 4);

    // tail truncation to the query budget
    const auto longer = build_query_input({1, 2, 3, 4, 5, 6}, budget);
    CHECK(longer.real_length() == 6);  // CLS + 4 + SEP
    CHECK(longer.ids[4] == 4);
    CHECK(longer.ids[5] == S);

    CHECK_THROWS_AS(build_query_input({}, budget), InputError);
}

TEST_CASE("query input round trip of real tokens") {
    const InputBudget budget{32, 8};
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> query;
        const std::size_t len = 1 + static_cast<std::size_t>(rng.below(12));
        for (std::size_t i = 0; i < len; ++i)
            query.push_back(4 + static_cast<int>(rng.below(50)));
        const auto seq = build_query_input(query, budget);
        const std::size_t kept = std::min(query.size(), budget.query_budget);
        for (std::size_t i = 0; i < kept; ++i) CHECK(seq.ids[1 + i] == query[i]);
        CHECK(seq.ids[1 + kept] == S);
    }
}

TEST_CASE("doc input layout") {
    const auto seq = build_doc_input({7, 8, 9}, 8);
    CHECK(seq.ids == std::vector<int>{C, 7, 8, 9, S, P, P, P});
    // empty documents are allowed
    const auto empty = build_doc_input({}, 8);
    CHECK(empty.ids == std::vector<int>{C, S, P, P, P, P, P, P});
    // oversized documents are tail-truncated
    const auto cut = build_doc_input({1, 2, 3, 4, 5, 6, 7, 8, 9}, 6);
    CHECK(cut.ids == std::vector<int>{C, 1, 2, 3, 4, S});
}

TEST_CASE("prf input direct construction") {
    const InputBudget budget{16, 4};
    const auto input = build_prf_input({10}, {{20}, {21}}, budget);
    CHECK(input.seq.ids[0] == C);
    CHECK(input.seq.ids[1] == 10);
    CHECK(input.seq.ids[2] == S);
    CHECK(input.seq.ids[3] == 20);
    CHECK(input.seq.ids[4] == S);
    CHECK(input.seq.ids[5] == 21);
    CHECK(input.seq.ids[6] == S);
    CHECK(input.query_span.begin == 1);
    CHECK(input.query_span.end == 2);
    REQUIRE(input.doc_spans.size() == 2);
    CHECK(input.doc_spans[0].begin == 3);  // covers exactly token 20
    CHECK(input.doc_spans[0].end == 4);
    CHECK(input.doc_spans[1].begin == 5);
    CHECK(input.doc_spans[1].end == 6);
}

TEST_CASE("k=0 prf input equals the query input exactly") {
    const InputBudget budget{32, 8};
    const std::vector<int> query{5, 6, 7};
    const auto prf = build_prf_input(query, {}, budget);
    const auto plain = build_query_input(query, budget);
    CHECK(prf.seq == plain);
    CHECK(prf.doc_spans.empty());
}

TEST_CASE("document region tail truncation matches the reference layout") {
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        const InputBudget budget{24 + static_cast<std::size_t>(rng.below(24)), 6};
        std::vector<int> query;
        const std::size_t qlen = 1 + static_cast<std::size_t>(rng.below(8));
        for (std::size_t i = 0; i < qlen; ++i) query.push_back(4 + static_cast<int>(rng.below(40)));
        std::vector<std::vector<int>> docs(1 + static_cast<std::size_t>(rng.below(4)));
        for (auto& d : docs) {
            const std::size_t dlen = static_cast<std::size_t>(rng.below(14));
            for (std::size_t i = 0; i < dlen; ++i) d.push_back(44 + static_cast<int>(rng.below(40)));
        }

        const auto input = build_prf_input(query, docs, budget);
        CHECK(input.seq.ids == reference_layout(query, docs, budget));

        // spans partition all non-special, non-padding positions
        std::vector<bool> covered(input.seq.real_length(), false);
        auto mark = [&](const Span& span) {
            for (std::size_t j = span.begin; j < span.end; ++j) {
                CHECK_FALSE(covered[j]);
                covered[j] = true;
            }
        };
        mark(input.query_span);
        for (const auto& span : input.doc_spans) mark(span);
        for (std::size_t j = 0; j < input.seq.real_length(); ++j) {
            const int id = input.seq.ids[j];
            if (id == C || id == S)
                CHECK_FALSE(covered[j]);
            else
                CHECK(covered[j]);
        }
        CHECK(input.doc_spans.size() == docs.size());
    }
}

TEST_CASE("losing exactly three tokens cuts the tail of the last documents") {
    // query 2 + specials: CLS q q SEP d1(4 tokens) SEP d2(4 tokens) SEP = 14;
    // max_len 11 forces the loss of exactly 3 document tokens.
    const InputBudget budget{11, 4};
    const std::vector<std::vector<int>> docs{{20, 21, 22, 23}, {30, 31, 32, 33}};
    const auto input = build_prf_input({10, 11}, docs, budget);
    CHECK(input.seq.ids ==
          std::vector<int>{C, 10, 11, S, 20, 21, 22, 23, S, 30, S});
    CHECK(input.doc_spans[0].size() == 4);
    CHECK(input.doc_spans[1].size() == 1);  // lost 31, 32, 33
    CHECK(input.seq.real_length() == 11);
}

TEST_CASE("a fully truncated document keeps an empty span and its separator") {
    const InputBudget budget{8, 4};
    // CLS q q S d1... with k=2: overhead = 2+2+2 = 6, doc budget = 2
    const auto input = build_prf_input({10, 11}, {{20, 21, 22}, {30}}, budget);
    CHECK(input.seq.ids == std::vector<int>{C, 10, 11, S, 20, 21, S, S});
    REQUIRE(input.doc_spans.size() == 2);
    CHECK(input.doc_spans[0].size() == 2);
    CHECK(input.doc_spans[1].empty());
    CHECK(input.doc_spans[1].begin == 7);

    // overhead alone exceeding max_len is an error
    CHECK_THROWS_AS(build_prf_input({1, 2, 3, 4}, std::vector<std::vector<int>>(4), {8, 4}),
                    InputError);
}
