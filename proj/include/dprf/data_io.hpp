#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dprf {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DocumentRecord {
    std::string doc_id;
    std::string text;
};

struct QueryRecord {
    std::string query_id;
    std::string text;
};

// Graded relevance judgments. Lookups for absent pairs return grade 0;
// judged() distinguishes an explicit 0 from a missing judgment.
class Qrels {
public:
    void add(const std::string& query_id, const std::string& doc_id, int grade);

    int grade(const std::string& query_id, const std::string& doc_id) const;
    bool judged(const std::string& query_id, const std::string& doc_id) const;
    bool has_query(const std::string& query_id) const;
    // nullptr when the query has no judgments.
    const std::map<std::string, int>* for_query(const std::string& query_id) const;
    const std::map<std::string, std::map<std::string, int>>& all() const { return grades_; }
    int max_grade() const;
    std::size_t query_count() const { return grades_.size(); }

private:
    std::map<std::string, std::map<std::string, int>> grades_;
};

// "id<TAB>text" per line.
std::vector<DocumentRecord> load_corpus(const std::string& path);
std::vector<QueryRecord> load_queries(const std::string& path);
void write_corpus(const std::vector<DocumentRecord>& docs, const std::string& path);
void write_queries(const std::vector<QueryRecord>& queries, const std::string& path);

// TREC qrels "qid 0 docid grade". Duplicate (qid, docid) entries keep the
// max grade and emit a warning on stderr.
Qrels load_qrels(const std::string& path);
void write_qrels(const Qrels& qrels, const std::string& path);

}  // namespace dprf
