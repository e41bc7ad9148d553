#include "dprf/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace dprf {

std::optional<double> MetricReport::value_for(const std::string& query_id) const {
    for (const auto& [qid, v] : per_query)
        if (qid == query_id) return v;
    return std::nullopt;
}

namespace {

void finalize(MetricReport& report) {
    report.evaluated = report.per_query.size();
    double sum = 0.0;
    for (const auto& [qid, v] : report.per_query) sum += v;
    report.mean = report.evaluated == 0 ? 0.0 : sum / static_cast<double>(report.evaluated);
}

double dcg(const std::vector<int>& grades, std::size_t cutoff) {
    double acc = 0.0;
    const std::size_t n = std::min(cutoff, grades.size());
    for (std::size_t r = 0; r < n; ++r)
        acc += static_cast<double>(grades[r]) / std::log2(static_cast<double>(r) + 2.0);
    return acc;
}

}  // namespace

MetricReport mrr_at(const RunList& run, const Qrels& qrels, std::size_t cutoff,
                    int rel_threshold) {
    if (cutoff < 1) throw MetricError("mrr: cutoff must be >= 1");
    MetricReport report;
    report.metric = "mrr@" + std::to_string(cutoff);
    for (const auto& entry : run.entries) {
        if (!qrels.has_query(entry.query_id)) {
            ++report.excluded;
            continue;
        }
        double rr = 0.0;
        const std::size_t depth = std::min(cutoff, entry.hits.size());
        for (std::size_t i = 0; i < depth; ++i) {
            if (qrels.grade(entry.query_id, entry.hits[i].doc_id) >= rel_threshold) {
                rr = 1.0 / static_cast<double>(i + 1);
                break;
            }
        }
        report.per_query.emplace_back(entry.query_id, rr);
    }
    finalize(report);
    return report;
}

MetricReport ndcg_at(const RunList& run, const Qrels& qrels, std::size_t cutoff) {
    if (cutoff < 1) throw MetricError("ndcg: cutoff must be >= 1");
    MetricReport report;
    report.metric = "ndcg@" + std::to_string(cutoff);
    for (const auto& entry : run.entries) {
        const auto* judged = qrels.for_query(entry.query_id);
        std::vector<int> ideal;
        if (judged)
            for (const auto& [doc, g] : *judged)
                if (g > 0) ideal.push_back(g);
        if (ideal.empty()) {
            ++report.excluded;
            continue;
        }
        std::sort(ideal.begin(), ideal.end(), std::greater<int>());

        std::vector<int> got;
        got.reserve(std::min(cutoff, entry.hits.size()));
        for (std::size_t i = 0; i < std::min(cutoff, entry.hits.size()); ++i)
            got.push_back(qrels.grade(entry.query_id, entry.hits[i].doc_id));

        const double ideal_dcg = dcg(ideal, cutoff);
        report.per_query.emplace_back(entry.query_id, dcg(got, cutoff) / ideal_dcg);
    }
    finalize(report);
    return report;
}

MetricReport recall_at(const RunList& run, const Qrels& qrels, std::size_t cutoff,
                       int binarize_at) {
    if (cutoff < 1) throw MetricError("recall: cutoff must be >= 1");
    MetricReport report;
    report.metric = "recall@" + std::to_string(cutoff);
    for (const auto& entry : run.entries) {
        const auto* judged = qrels.for_query(entry.query_id);
        std::size_t relevant = 0;
        if (judged)
            for (const auto& [doc, g] : *judged)
                if (g >= binarize_at) ++relevant;
        if (relevant == 0) {
            ++report.excluded;
            continue;
        }
        std::size_t found = 0;
        for (std::size_t i = 0; i < std::min(cutoff, entry.hits.size()); ++i)
            if (qrels.grade(entry.query_id, entry.hits[i].doc_id) >= binarize_at) ++found;
        report.per_query.emplace_back(entry.query_id,
                                      static_cast<double>(found) / static_cast<double>(relevant));
    }
    finalize(report);
    return report;
}

MetricReport hole_at(const RunList& run, const Qrels& qrels, std::size_t cutoff) {
    if (cutoff < 1) throw MetricError("hole: cutoff must be >= 1");
    MetricReport report;
    report.metric = "hole@" + std::to_string(cutoff);
    for (const auto& entry : run.entries) {
        if (!qrels.has_query(entry.query_id)) {
            ++report.excluded;
            continue;
        }
        const std::size_t depth = std::min(cutoff, entry.hits.size());
        if (depth == 0) {
            report.per_query.emplace_back(entry.query_id, 0.0);
            continue;
        }
        std::size_t unjudged = 0;
        for (std::size_t i = 0; i < depth; ++i)
            if (!qrels.judged(entry.query_id, entry.hits[i].doc_id)) ++unjudged;
        report.per_query.emplace_back(entry.query_id,
                                      static_cast<double>(unjudged) / static_cast<double>(depth));
    }
    finalize(report);
    return report;
}

double avg_rel(const RunList& run, const Qrels& qrels, std::size_t position) {
    if (position < 1) throw MetricError("avg_rel: position must be >= 1");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& entry : run.entries) {
        if (!qrels.has_query(entry.query_id)) continue;
        int grade = 0;
        if (position <= entry.hits.size())
            grade = qrels.grade(entry.query_id, entry.hits[position - 1].doc_id);
        sum += static_cast<double>(grade);
        ++count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

MetricSpec MetricSpec::parse(const std::string& name) {
    const auto at = name.find('@');
    if (at == std::string::npos || at + 1 >= name.size())
        throw MetricError("bad metric '" + name + "'; expected name@cutoff");
    const std::string base = name.substr(0, at);
    std::size_t cutoff = 0;
    try {
        cutoff = std::stoull(name.substr(at + 1));
    } catch (const std::exception&) {
        throw MetricError("bad metric cutoff in '" + name + "'");
    }
    if (cutoff < 1) throw MetricError("metric cutoff must be >= 1 in '" + name + "'");
    Kind kind;
    if (base == "mrr") kind = Kind::Mrr;
    else if (base == "ndcg") kind = Kind::Ndcg;
    else if (base == "recall") kind = Kind::Recall;
    else if (base == "hole") kind = Kind::Hole;
    else if (base == "avg_rel") kind = Kind::AvgRel;
    else throw MetricError("unknown metric '" + base + "'");
    return {kind, cutoff};
}

std::string MetricSpec::name() const {
    switch (kind) {
        case Kind::Mrr: return "mrr@" + std::to_string(cutoff);
        case Kind::Ndcg: return "ndcg@" + std::to_string(cutoff);
        case Kind::Recall: return "recall@" + std::to_string(cutoff);
        case Kind::Hole: return "hole@" + std::to_string(cutoff);
        case Kind::AvgRel: return "avg_rel@" + std::to_string(cutoff);
    }
    return "?";
}

MetricReport evaluate_metric(const MetricSpec& spec, const RunList& run, const Qrels& qrels) {
    switch (spec.kind) {
        case MetricSpec::Kind::Mrr: return mrr_at(run, qrels, spec.cutoff);
        case MetricSpec::Kind::Ndcg: return ndcg_at(run, qrels, spec.cutoff);
        case MetricSpec::Kind::Recall: return recall_at(run, qrels, spec.cutoff);
        case MetricSpec::Kind::Hole: return hole_at(run, qrels, spec.cutoff);
        case MetricSpec::Kind::AvgRel: {
            // Per-query grade at the position; keeps the diff interface uniform.
            MetricReport report;
            report.metric = spec.name();
            for (const auto& entry : run.entries) {
                if (!qrels.has_query(entry.query_id)) {
                    ++report.excluded;
                    continue;
                }
                int grade = 0;
                if (spec.cutoff <= entry.hits.size())
                    grade = qrels.grade(entry.query_id, entry.hits[spec.cutoff - 1].doc_id);
                report.per_query.emplace_back(entry.query_id, static_cast<double>(grade));
            }
            report.evaluated = report.per_query.size();
            double sum = 0.0;
            for (const auto& [q, v] : report.per_query) sum += v;
            report.mean = report.evaluated ? sum / static_cast<double>(report.evaluated) : 0.0;
            return report;
        }
    }
    throw MetricError("unhandled metric kind");
}

DiffReport per_query_diff(const RunList& run_a, const RunList& run_b, const Qrels& qrels,
                          const MetricSpec& metric) {
    const MetricReport a = evaluate_metric(metric, run_a, qrels);
    const MetricReport b = evaluate_metric(metric, run_b, qrels);
    DiffReport diff;
    for (const auto& [qid, va] : a.per_query) {
        const auto vb = b.value_for(qid);
        if (!vb) continue;
        const double delta = va - *vb;
        diff.deltas.emplace_back(qid, delta);
        if (delta > DiffReport::tie_epsilon) ++diff.wins;
        else if (delta < -DiffReport::tie_epsilon) ++diff.losses;
        else ++diff.ties;
    }
    return diff;
}

}  // namespace dprf
