#include "dprf/synthetic.hpp"

#include <cstdio>
#include <filesystem>

#include "dprf/rng.hpp"

namespace dprf {

void SyntheticSpec::validate() const {
    if (num_topics == 0 || docs_per_topic == 0 || topic_vocab_size == 0 ||
        noise_vocab_size == 0 || query_len == 0)
        throw DataError("synthetic spec: counts must be positive");
    if (doc_len_min == 0 || doc_len_max < doc_len_min)
        throw DataError("synthetic spec: bad doc length range");
    if (p_topic < 0.0 || p_topic > 1.0 || core_fraction < 0.0 || core_fraction > 1.0)
        throw DataError("synthetic spec: probabilities must lie in [0, 1]");
    if (query_len > topic_vocab_size)
        throw DataError("synthetic spec: topic pool exhausted; query_len exceeds pool size");
    if (train_queries == 0 || dev_queries == 0 || test_queries == 0)
        throw DataError("synthetic spec: empty query split");
    const std::size_t core = static_cast<std::size_t>(core_fraction * static_cast<double>(docs_per_topic));
    if (core == 0)
        throw DataError("synthetic spec: every topic needs at least one core (grade-2) doc");
}

namespace {

std::string word_name(const char* prefix, std::size_t topic, std::size_t i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s%02zu_w%03zu", prefix, topic, i);
    return buf;
}

std::string noise_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "noise_w%03zu", i);
    return buf;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SyntheticData data;

    std::vector<std::vector<std::string>> topic_pools(spec.num_topics);
    for (std::size_t t = 0; t < spec.num_topics; ++t)
        for (std::size_t i = 0; i < spec.topic_vocab_size; ++i)
            topic_pools[t].push_back(word_name("t", t, i));
    std::vector<std::string> noise_pool;
    for (std::size_t i = 0; i < spec.noise_vocab_size; ++i) noise_pool.push_back(noise_name(i));

    const std::size_t core_count =
        static_cast<std::size_t>(spec.core_fraction * static_cast<double>(spec.docs_per_topic));

    // Documents, topic-major; the first core_count per topic are "core".
    std::size_t doc_index = 0;
    std::vector<std::vector<std::pair<std::string, bool>>> docs_of_topic(spec.num_topics);
    for (std::size_t t = 0; t < spec.num_topics; ++t) {
        for (std::size_t d = 0; d < spec.docs_per_topic; ++d) {
            const bool core = d < core_count;
            const double p = core ? spec.p_topic : spec.p_topic / 2.0;
            const std::size_t len =
                spec.doc_len_min + static_cast<std::size_t>(rng.below(spec.doc_len_max - spec.doc_len_min + 1));
            std::string text;
            for (std::size_t w = 0; w < len; ++w) {
                const std::string& word =
                    rng.coin(p)
                        ? topic_pools[t][static_cast<std::size_t>(rng.below(spec.topic_vocab_size))]
                        : noise_pool[static_cast<std::size_t>(rng.below(spec.noise_vocab_size))];
                if (!text.empty()) text.push_back(' ');
                text += word;
            }
            char id[16];
            std::snprintf(id, sizeof(id), "d%05zu", doc_index++);
            data.corpus.push_back({id, text});
            docs_of_topic[t].emplace_back(id, core);
        }
    }

    // Queries, round-robin over topics; split train / dev / test in order.
    const std::size_t total_queries = spec.train_queries + spec.dev_queries + spec.test_queries;
    for (std::size_t qi = 0; qi < total_queries; ++qi) {
        const std::size_t t = qi % spec.num_topics;
        std::vector<std::size_t> chosen;
        while (chosen.size() < spec.query_len) {
            const auto idx = static_cast<std::size_t>(rng.below(spec.topic_vocab_size));
            bool seen = false;
            for (auto c : chosen) seen |= (c == idx);
            if (!seen) chosen.push_back(idx);
        }
        std::string text;
        for (auto idx : chosen) {
            if (!text.empty()) text.push_back(' ');
            text += topic_pools[t][idx];
        }
        char id[16];
        std::snprintf(id, sizeof(id), "q%04zu", qi);
        QueryRecord query{id, text};
        if (qi < spec.train_queries)
            data.train_queries.push_back(query);
        else if (qi < spec.train_queries + spec.dev_queries)
            data.dev_queries.push_back(query);
        else
            data.test_queries.push_back(query);

        for (const auto& [doc_id, core] : docs_of_topic[t])
            data.qrels.add(query.query_id, doc_id, core ? 2 : 1);
    }
    return data;
}

void write_synthetic(const SyntheticData& data, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path base(dir);
    write_corpus(data.corpus, (base / "corpus.tsv").string());
    write_queries(data.train_queries, (base / "queries_train.tsv").string());
    write_queries(data.dev_queries, (base / "queries_dev.tsv").string());
    write_queries(data.test_queries, (base / "queries_test.tsv").string());
    write_qrels(data.qrels, (base / "qrels.txt").string());
}

}  // namespace dprf
