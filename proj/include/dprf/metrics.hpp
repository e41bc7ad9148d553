#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dprf/data_io.hpp"
#include "dprf/run_io.hpp"

namespace dprf {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-query values over the evaluated queries (run order) plus their mean.
// `excluded` counts run queries skipped by the metric's eligibility rule,
// e.g. queries absent from the qrels.
struct MetricReport {
    std::string metric;
    std::vector<std::pair<std::string, double>> per_query;
    double mean = 0.0;
    std::size_t evaluated = 0;
    std::size_t excluded = 0;

    std::optional<double> value_for(const std::string& query_id) const;
};

// Reciprocal rank of the first doc with grade >= rel_threshold in the top
// cutoff, else 0. Queries absent from qrels are excluded.
MetricReport mrr_at(const RunList& run, const Qrels& qrels, std::size_t cutoff = 10,
                    int rel_threshold = 1);

// Linear-gain DCG with log2(r+1) discount; ideal from all judged grades.
// Queries without a positive grade are excluded.
MetricReport ndcg_at(const RunList& run, const Qrels& qrels, std::size_t cutoff = 10);

// Fraction of docs with grade >= binarize_at found in the top cutoff.
// Queries with no such doc are excluded.
MetricReport recall_at(const RunList& run, const Qrels& qrels, std::size_t cutoff = 1000,
                       int binarize_at = 2);

// Unjudged fraction of the top cutoff; the denominator is the actual
// retrieved count when a ranking is shorter than the cutoff.
MetricReport hole_at(const RunList& run, const Qrels& qrels, std::size_t cutoff = 10);

// Mean over judged queries of the grade at rank `position` (1-based);
// unjudged or missing docs count as grade 0.
double avg_rel(const RunList& run, const Qrels& qrels, std::size_t position);

// Parsed "name@cutoff" metric selector, e.g. "ndcg@10", "avg_rel@3".
struct MetricSpec {
    enum class Kind { Mrr, Ndcg, Recall, Hole, AvgRel };
    Kind kind;
    std::size_t cutoff;

    static MetricSpec parse(const std::string& name);
    std::string name() const;
};

MetricReport evaluate_metric(const MetricSpec& spec, const RunList& run, const Qrels& qrels);

// Per-query metric difference a - b over queries evaluated in both runs.
struct DiffReport {
    std::vector<std::pair<std::string, double>> deltas;
    std::size_t wins = 0;    // delta > tie_epsilon
    std::size_t losses = 0;  // delta < -tie_epsilon
    std::size_t ties = 0;
    static constexpr double tie_epsilon = 1e-9;
};

DiffReport per_query_diff(const RunList& run_a, const RunList& run_b, const Qrels& qrels,
                          const MetricSpec& metric);

}  // namespace dprf
