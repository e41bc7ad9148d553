#include "dprf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dprf/parallel.hpp"

namespace dprf {

int relevance_threshold_for(const Qrels& qrels) {
    return qrels.max_grade() >= 2 ? 2 : 1;
}

GroupAttention group_attention(const AttentionRecord& attn, const PrfInput& input,
                               const std::vector<DocGrade>& doc_grades, int rel_threshold) {
    if (doc_grades.size() != input.doc_spans.size())
        throw AnalysisError("one grade per feedback document required");
    const std::size_t real_len = input.seq.real_length();
    if (attn.values.size() < real_len)
        throw AnalysisError("attention record shorter than the input");
    for (const auto& span : input.doc_spans)
        if (span.begin > span.end || span.end > real_len)
            throw AnalysisError("document span misaligned with the input");
    if (input.query_span.end > real_len)
        throw AnalysisError("query span misaligned with the input");

    GroupAttention ga;
    std::vector<bool> claimed(real_len, false);

    auto accumulate = [&](const Span& span, GroupAttention::GroupStat& stat) {
        for (std::size_t j = span.begin; j < span.end; ++j) {
            stat.mass += attn.values[j];
            ++stat.tokens;
            claimed[j] = true;
        }
    };

    accumulate(input.query_span, ga.query);
    for (std::size_t i = 0; i < input.doc_spans.size(); ++i) {
        GroupAttention::RankStat rank_stat;
        rank_stat.rank = i + 1;
        rank_stat.judged = doc_grades[i].judged();
        rank_stat.relevant = rank_stat.judged && *doc_grades[i].grade >= rel_threshold;
        accumulate(input.doc_spans[i], rank_stat.stat);
        ga.all_docs.mass += rank_stat.stat.mass;
        ga.all_docs.tokens += rank_stat.stat.tokens;
        auto& group = rank_stat.relevant ? ga.relevant_docs : ga.irrelevant_docs;
        group.mass += rank_stat.stat.mass;
        group.tokens += rank_stat.stat.tokens;
        ga.per_rank.push_back(rank_stat);
    }
    for (std::size_t j = 0; j < real_len; ++j) {
        ga.total_mass += attn.values[j];
        if (!claimed[j]) {
            ga.specials.mass += attn.values[j];
            ++ga.specials.tokens;
        }
    }
    return ga;
}

GeometryContext make_geometry_context(const std::vector<QueryRecord>& queries,
                                      const EncoderParams& baseline_encoder,
                                      const Vocabulary& vocab, const DocTokens& doc_tokens,
                                      const RunList& first_pass, const FlatIndex& index,
                                      const Qrels& qrels, std::size_t k, int threads) {
    GeometryContext ctx;
    ctx.queries = queries;
    ctx.index = &index;
    ctx.qrels = &qrels;
    ctx.rel_threshold = relevance_threshold_for(qrels);
    ctx.original_query_embeddings.resize(queries.size());
    ctx.feedback_ids.resize(queries.size());
    ctx.prf_inputs.resize(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        const auto tokens = tokenize(queries[i].text, vocab);
        const auto seq = build_query_input(tokens, baseline_encoder.config.budget());
        ctx.original_query_embeddings[i] = encode(baseline_encoder, seq);
        const auto* entry = first_pass.find(queries[i].query_id);
        if (entry == nullptr)
            throw AnalysisError("query " + queries[i].query_id + " missing from first-pass run");
        const std::size_t depth = std::min(k, entry->hits.size());
        std::vector<std::vector<int>> feedback_tokens;
        for (std::size_t r = 0; r < depth; ++r) {
            ctx.feedback_ids[i].push_back(entry->hits[r].doc_id);
            feedback_tokens.push_back(doc_tokens.tokens(entry->hits[r].doc_id));
        }
        ctx.prf_inputs[i] = build_prf_input(tokens, feedback_tokens,
                                            baseline_encoder.config.budget());
    });
    return ctx;
}

namespace {

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

std::vector<DocGrade> grades_for(const GeometryContext& ctx, std::size_t query_index) {
    std::vector<DocGrade> grades;
    const auto& qid = ctx.queries[query_index].query_id;
    for (const auto& doc_id : ctx.feedback_ids[query_index]) {
        if (ctx.qrels->judged(qid, doc_id))
            grades.push_back({ctx.qrels->grade(qid, doc_id)});
        else
            grades.push_back({std::nullopt});
    }
    return grades;
}

}  // namespace

GeometryRecord embedding_geometry_at(const EncoderParams& prf_params, std::size_t step,
                                     const GeometryContext& ctx, int threads) {
    struct PerQuery {
        double dot_query = 0.0;
        double rel_mean = 0.0, irrel_mean = 0.0;
        bool has_rel = false, has_irrel = false;
    };
    std::vector<PerQuery> rows(ctx.queries.size());

    parallel_for(ctx.queries.size(), threads, [&](std::size_t i) {
        const auto q_prf = encode(prf_params, ctx.prf_inputs[i]);
        PerQuery row;
        row.dot_query = dot(q_prf, ctx.original_query_embeddings[i]);
        double rel_sum = 0.0, irrel_sum = 0.0;
        std::size_t rel_n = 0, irrel_n = 0;
        const auto& qid = ctx.queries[i].query_id;
        for (const auto& doc_id : ctx.feedback_ids[i]) {
            const double d = dot(q_prf, ctx.index->embedding(doc_id));
            const bool relevant = ctx.qrels->judged(qid, doc_id) &&
                                  ctx.qrels->grade(qid, doc_id) >= ctx.rel_threshold;
            if (relevant) {
                rel_sum += d;
                ++rel_n;
            } else {
                irrel_sum += d;
                ++irrel_n;
            }
        }
        if (rel_n > 0) {
            row.rel_mean = rel_sum / static_cast<double>(rel_n);
            row.has_rel = true;
        }
        if (irrel_n > 0) {
            row.irrel_mean = irrel_sum / static_cast<double>(irrel_n);
            row.has_irrel = true;
        }
        rows[i] = row;
    });

    GeometryRecord record;
    record.step = step;
    double q_sum = 0.0, rel_sum = 0.0, irrel_sum = 0.0;
    for (const auto& row : rows) {
        q_sum += row.dot_query;
        if (row.has_rel) {
            rel_sum += row.rel_mean;
            ++record.queries_with_relevant;
        }
        if (row.has_irrel) {
            irrel_sum += row.irrel_mean;
            ++record.queries_with_irrelevant;
        }
    }
    const auto n = static_cast<double>(ctx.queries.size());
    record.dot_query = n > 0 ? q_sum / n : 0.0;
    record.dot_relevant = record.queries_with_relevant
                              ? rel_sum / static_cast<double>(record.queries_with_relevant)
                              : 0.0;
    record.dot_irrelevant = record.queries_with_irrelevant
                                ? irrel_sum / static_cast<double>(record.queries_with_irrelevant)
                                : 0.0;
    return record;
}

std::vector<GeometryRecord> embedding_geometry(const std::vector<std::string>& checkpoint_paths,
                                               const GeometryContext& ctx, int threads) {
    std::vector<GeometryRecord> records;
    records.reserve(checkpoint_paths.size());
    for (std::size_t i = 0; i < checkpoint_paths.size(); ++i) {
        std::map<std::string, std::string> extra;
        const EncoderParams params = load_checkpoint(checkpoint_paths[i], &extra);
        std::size_t step = i;
        if (auto it = extra.find("step"); it != extra.end()) step = std::stoull(it->second);
        records.push_back(embedding_geometry_at(params, step, ctx, threads));
    }
    return records;
}

GroupAttentionSummary summarize_group_attention(const EncoderParams& prf_params,
                                                const GeometryContext& ctx, int threads) {
    std::vector<GroupAttention> per_query(ctx.queries.size());
    parallel_for(ctx.queries.size(), threads, [&](std::size_t i) {
        const auto attn = cls_attention(prf_params, ctx.prf_inputs[i]);
        per_query[i] = group_attention(attn, ctx.prf_inputs[i], grades_for(ctx, i),
                                       ctx.rel_threshold);
    });

    GroupAttentionSummary summary;
    double query_sum = 0.0, rel_sum = 0.0, irrel_sum = 0.0, all_sum = 0.0;
    std::size_t all_n = 0;
    std::map<std::size_t, std::pair<GroupAttention::RankStat, std::size_t>> ranks;
    for (const auto& ga : per_query) {
        query_sum += ga.query.mean();
        ++all_n;
        all_sum += ga.all_docs.mean();
        const bool has_rel = ga.relevant_docs.tokens > 0;
        const bool has_irrel = ga.irrelevant_docs.tokens > 0;
        if (has_rel) {
            rel_sum += ga.relevant_docs.mean();
            ++summary.queries_with_relevant;
        }
        if (has_irrel) {
            irrel_sum += ga.irrelevant_docs.mean();
            ++summary.queries_with_irrelevant;
        }
        if (has_rel && has_irrel) {
            ++summary.separation_total;
            if (ga.relevant_docs.mean() > ga.irrelevant_docs.mean()) ++summary.separation_wins;
        }
        for (const auto& rs : ga.per_rank) {
            auto& [acc, n] = ranks[rs.rank];
            acc.rank = rs.rank;
            acc.stat.mass += rs.stat.mass;
            acc.stat.tokens += rs.stat.tokens;
            ++n;
        }
    }
    summary.query_mean = all_n ? query_sum / static_cast<double>(all_n) : 0.0;
    summary.all_docs_mean = all_n ? all_sum / static_cast<double>(all_n) : 0.0;
    summary.relevant_mean = summary.queries_with_relevant
                                ? rel_sum / static_cast<double>(summary.queries_with_relevant)
                                : 0.0;
    summary.irrelevant_mean = summary.queries_with_irrelevant
                                  ? irrel_sum / static_cast<double>(summary.queries_with_irrelevant)
                                  : 0.0;
    for (auto& [rank, entry] : ranks) summary.per_rank_means.push_back(entry.first);
    return summary;
}

std::vector<HighlightToken> highlight_terms(const PrfInput& input, const AttentionRecord& attn,
                                            const Vocabulary& vocab) {
    const std::size_t real_len = input.seq.real_length();
    if (attn.values.size() < real_len)
        throw AnalysisError("attention record shorter than the input");

    std::vector<std::string> roles(real_len, "special");
    for (std::size_t j = input.query_span.begin; j < input.query_span.end; ++j)
        roles[j] = "query";
    for (std::size_t i = 0; i < input.doc_spans.size(); ++i)
        for (std::size_t j = input.doc_spans[i].begin; j < input.doc_spans[i].end; ++j)
            roles[j] = "doc" + std::to_string(i + 1);

    double max_weight = 0.0;
    for (std::size_t j = 0; j < real_len; ++j)
        if (roles[j] != "special") max_weight = std::max(max_weight, attn.values[j]);
    const double denom = max_weight > 0.0 ? max_weight : 1.0;

    std::vector<HighlightToken> tokens;
    tokens.reserve(real_len);
    for (std::size_t j = 0; j < real_len; ++j)
        tokens.push_back({vocab.token_of(input.seq.ids[j]), attn.values[j] / denom, roles[j]});
    return tokens;
}

void write_highlight_html(const std::vector<HighlightToken>& tokens, const std::string& title,
                          const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw AnalysisError("cannot open '" + path + "' for writing");
    out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << title
        << "</title>\n<style>body{font-family:monospace;line-height:2}"
        << ".tok{padding:2px 3px;border-radius:3px}"
        << ".special{color:#888}</style></head>\n<body><h3>" << title << "</h3>\n<p>\n";
    char buf[160];
    for (const auto& tok : tokens) {
        const double opacity = std::clamp(tok.weight, 0.0, 1.0);
        std::snprintf(buf, sizeof(buf),
                      "<span class=\"tok %s\" style=\"background:rgba(220,20,20,%.3f)\" "
                      "title=\"%s w=%.4f\">%s</span>\n",
                      tok.role == "special" ? "special" : "", opacity, tok.role.c_str(),
                      tok.weight, tok.token.c_str());
        out << buf;
    }
    out << "</p></body></html>\n";
    if (!out) throw AnalysisError("write failed for '" + path + "'");
}

std::vector<AblationRow> depth_ablation(const EncoderParams& baseline_encoder,
                                        const std::map<std::size_t, const EncoderParams*>& prf_encoders,
                                        const std::vector<QueryRecord>& queries,
                                        const Qrels& qrels, const Vocabulary& vocab,
                                        const FlatIndex& index, const DocTokens& doc_tokens,
                                        const PrfConfig& base_config, int threads) {
    std::vector<AblationRow> rows;
    const RunList baseline_run = first_pass_run(queries, baseline_encoder, vocab, index,
                                                base_config.final_depth, "ablate-baseline", threads);
    auto fill = [&](AblationRow& row, const RunList& run) {
        row.mrr10 = mrr_at(run, qrels).mean;
        row.ndcg10 = ndcg_at(run, qrels).mean;
        row.recall1k = recall_at(run, qrels, base_config.final_depth).mean;
        row.hole10 = hole_at(run, qrels).mean;
    };

    AblationRow base_row;
    base_row.label = "baseline";
    fill(base_row, baseline_run);
    rows.push_back(base_row);

    for (const auto& [k, encoder] : prf_encoders) {
        PrfConfig config = base_config;
        config.k = k;
        AblationRow row;
        row.label = "k=" + std::to_string(k);
        row.k = k;
        const RunList run = prf_run(queries, *encoder, baseline_encoder, vocab, index,
                                    doc_tokens, config, "ablate-k" + std::to_string(k), threads);
        fill(row, run);
        if (k > 0) row.avg_rel_at_k = avg_rel(baseline_run, qrels, k);
        rows.push_back(row);
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path,
                        const std::string& header_comment) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw AnalysisError("cannot open '" + path + "' for writing");
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << "label,k,mrr@10,ndcg@10,recall@1000,hole@10,avg_rel@k\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", row.mrr10, row.ndcg10,
                      row.recall1k, row.hole10);
        out << row.label << ',' << (row.k ? std::to_string(*row.k) : "") << ',' << buf << ',';
        if (row.avg_rel_at_k) {
            std::snprintf(buf, sizeof(buf), "%.6f", *row.avg_rel_at_k);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw AnalysisError("write failed for '" + path + "'");
}

}  // namespace dprf
