#include "dprf/data_io.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dprf {

void Qrels::add(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) throw DataError("negative relevance grade");
    grades_[query_id][doc_id] = grade;
}

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
    auto q = grades_.find(query_id);
    if (q == grades_.end()) return 0;
    auto d = q->second.find(doc_id);
    return d == q->second.end() ? 0 : d->second;
}

bool Qrels::judged(const std::string& query_id, const std::string& doc_id) const {
    auto q = grades_.find(query_id);
    return q != grades_.end() && q->second.count(doc_id) > 0;
}

bool Qrels::has_query(const std::string& query_id) const {
    return grades_.count(query_id) > 0;
}

const std::map<std::string, int>* Qrels::for_query(const std::string& query_id) const {
    auto q = grades_.find(query_id);
    return q == grades_.end() ? nullptr : &q->second;
}

int Qrels::max_grade() const {
    int mx = 0;
    for (const auto& [q, docs] : grades_)
        for (const auto& [d, g] : docs) mx = std::max(mx, g);
    return mx;
}

namespace {

std::vector<std::pair<std::string, std::string>> load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 'id<TAB>text'");
        rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return rows;
}

void write_tsv(const std::vector<std::pair<std::string, std::string>>& rows,
               const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (const auto& [id, text] : rows) out << id << '\t' << text << '\n';
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace

std::vector<DocumentRecord> load_corpus(const std::string& path) {
    std::vector<DocumentRecord> docs;
    for (auto& [id, text] : load_tsv(path)) docs.push_back({std::move(id), std::move(text)});
    return docs;
}

std::vector<QueryRecord> load_queries(const std::string& path) {
    std::vector<QueryRecord> queries;
    for (auto& [id, text] : load_tsv(path)) queries.push_back({std::move(id), std::move(text)});
    return queries;
}

void write_corpus(const std::vector<DocumentRecord>& docs, const std::string& path) {
    std::vector<std::pair<std::string, std::string>> rows;
    rows.reserve(docs.size());
    for (const auto& d : docs) rows.emplace_back(d.doc_id, d.text);
    write_tsv(rows, path);
}

void write_queries(const std::vector<QueryRecord>& queries, const std::string& path) {
    std::vector<std::pair<std::string, std::string>> rows;
    rows.reserve(queries.size());
    for (const auto& q : queries) rows.emplace_back(q.query_id, q.text);
    write_tsv(rows, path);
}

Qrels load_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, iter, docid, grade_str, extra;
        if (!(ss >> qid >> iter >> docid >> grade_str) || (ss >> extra))
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": expected 'qid 0 docid grade'");
        int grade = 0;
        try {
            std::size_t pos = 0;
            grade = std::stoi(grade_str, &pos);
            if (pos != grade_str.size()) throw std::invalid_argument(grade_str);
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad grade '" + grade_str + "'");
        }
        if (grade < 0)
            throw DataError(path + ":" + std::to_string(lineno) + ": negative grade");
        if (qrels.judged(qid, docid)) {
            const int prev = qrels.grade(qid, docid);
            std::cerr << "warning: " << path << ":" << lineno << ": duplicate qrels entry ("
                      << qid << ", " << docid << "); keeping max grade\n";
            qrels.add(qid, docid, std::max(prev, grade));
        } else {
            qrels.add(qid, docid, grade);
        }
    }
    return qrels;
}

void write_qrels(const Qrels& qrels, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (const auto& [qid, docs] : qrels.all())
        for (const auto& [docid, grade] : docs) out << qid << " 0 " << docid << ' ' << grade << '\n';
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace dprf
