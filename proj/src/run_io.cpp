#include "dprf/run_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace dprf {

const RunList::Entry* RunList::find(const std::string& query_id) const {
    for (const auto& e : entries)
        if (e.query_id == query_id) return &e;
    return nullptr;
}

RunList::Entry& RunList::add(const std::string& query_id) {
    entries.push_back({query_id, {}});
    return entries.back();
}

void write_run(const RunList& run, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw RunError("cannot open '" + path + "' for writing");
    char score_buf[64];
    for (const auto& entry : run.entries) {
        for (const auto& hit : entry.hits) {
            std::snprintf(score_buf, sizeof(score_buf), "%.6f", hit.score);
            out << entry.query_id << " Q0 " << hit.doc_id << ' ' << hit.rank << ' '
                << score_buf << ' ' << run.run_tag << '\n';
        }
    }
    if (!out) throw RunError("write failed for '" + path + "'");
}

RunList read_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open '" + path + "'");

    RunList run;
    run.run_tag.clear();
    std::map<std::string, std::size_t> entry_of;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, q0, docid, rank_str, score_str, tag, extra;
        if (!(ss >> qid >> q0 >> docid >> rank_str >> score_str >> tag) || (ss >> extra))
            throw RunError(path + ":" + std::to_string(lineno) +
                           ": expected 6 columns 'qid Q0 docid rank score tag'");
        int rank = 0;
        double score = 0.0;
        try {
            rank = std::stoi(rank_str);
            score = std::stod(score_str);
        } catch (const std::exception&) {
            throw RunError(path + ":" + std::to_string(lineno) + ": bad rank or score");
        }
        if (run.run_tag.empty()) run.run_tag = tag;

        auto [it, inserted] = entry_of.emplace(qid, run.entries.size());
        if (inserted) run.add(qid);
        auto& entry = run.entries[it->second];
        if (rank != static_cast<int>(entry.hits.size()) + 1)
            throw RunError(path + ":" + std::to_string(lineno) + ": rank " + rank_str +
                           " breaks the 1..n order for query " + qid);
        if (!entry.hits.empty() && score > entry.hits.back().score)
            throw RunError(path + ":" + std::to_string(lineno) +
                           ": scores increase within query " + qid);
        entry.hits.push_back({docid, score, rank});
    }
    return run;
}

}  // namespace dprf
