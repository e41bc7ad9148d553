#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dprf/data_io.hpp"

namespace dprf {

// Seeded topic-model benchmark: each document mixes words from its topic
// pool with shared noise words; queries are drawn from their topic pool.
// "Core" documents use p_topic, "fringe" documents use p_topic / 2 and are
// graded 1 instead of 2. Generation is single-threaded and the PRNG stream
// order is part of the contract.
struct SyntheticSpec {
    std::size_t num_topics = 32;
    std::size_t docs_per_topic = 63;  // ~2000 docs in total
    std::size_t topic_vocab_size = 48;
    std::size_t noise_vocab_size = 512;
    std::size_t doc_len_min = 8;
    std::size_t doc_len_max = 18;
    std::size_t query_len = 3;
    double p_topic = 0.55;
    double core_fraction = 0.5;  // leading fraction of each topic's docs
    std::size_t train_queries = 64;
    std::size_t dev_queries = 32;
    std::size_t test_queries = 32;
    std::uint64_t seed = 42;

    void validate() const;
};

struct SyntheticData {
    std::vector<DocumentRecord> corpus;
    std::vector<QueryRecord> train_queries;
    std::vector<QueryRecord> dev_queries;
    std::vector<QueryRecord> test_queries;
    Qrels qrels;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// corpus.tsv, queries_{train,dev,test}.tsv and qrels.txt under dir.
void write_synthetic(const SyntheticData& data, const std::string& dir);

}  // namespace dprf
