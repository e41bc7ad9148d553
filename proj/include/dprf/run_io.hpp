#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dprf/flat_index.hpp"

namespace dprf {

struct RunError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ranked results for a set of queries, in query submission order.
struct RunList {
    struct Entry {
        std::string query_id;
        std::vector<ScoredHit> hits;
    };

    std::string run_tag = "dprf";
    std::vector<Entry> entries;

    const Entry* find(const std::string& query_id) const;
    Entry& add(const std::string& query_id);
};

// TREC 6-column format: "qid Q0 docid rank score tag", scores with six
// decimal places. read_run preserves per-query order and validates ranks.
void write_run(const RunList& run, const std::string& path);
RunList read_run(const std::string& path);

}  // namespace dprf
