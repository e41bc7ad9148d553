#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dprf/encoder.hpp"
#include "dprf/metrics.hpp"
#include "dprf/retrieval.hpp"

namespace dprf {

struct AnalysisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Relevance grade of one feedback document; std::nullopt when unjudged.
// Unjudged documents fall into the irrelevant group, flagged via judged().
struct DocGrade {
    std::optional<int> grade;
    bool judged() const { return grade.has_value(); }
};

// [CLS]-attention mass split over input regions. mass is the raw sum of
// per-token values; mean() is the per-token average, which keeps long spans
// from dominating the comparison.
struct GroupAttention {
    struct GroupStat {
        double mass = 0.0;
        std::size_t tokens = 0;
        double mean() const { return tokens == 0 ? 0.0 : mass / static_cast<double>(tokens); }
    };

    GroupStat query, relevant_docs, irrelevant_docs, all_docs, specials;

    struct RankStat {
        std::size_t rank = 0;  // 1-based feedback rank
        bool relevant = false;
        bool judged = false;
        GroupStat stat;
    };
    std::vector<RankStat> per_rank;

    double total_mass = 0.0;  // equals num_heads up to rounding
};

// Sums last-layer [CLS] attention over the query span, each document span
// and the separators. A document is relevant iff judged and grade >=
// rel_threshold.
GroupAttention group_attention(const AttentionRecord& attn, const PrfInput& input,
                               const std::vector<DocGrade>& doc_grades, int rel_threshold);

// Dataset convention: graded sets (max grade >= 2) use threshold 2, binary
// sets use threshold 1.
int relevance_threshold_for(const Qrels& qrels);

struct GeometryRecord {
    std::size_t step = 0;
    double dot_query = 0.0;      // q_prf . original query embedding
    double dot_relevant = 0.0;   // mean over relevant feedback docs
    double dot_irrelevant = 0.0;
    std::size_t queries_with_relevant = 0;
    std::size_t queries_with_irrelevant = 0;
};

// Everything fixed while a feedback encoder evolves: original query
// embeddings, frozen feedback lists and their prebuilt inputs, and the
// document index.
struct GeometryContext {
    std::vector<QueryRecord> queries;
    std::vector<EmbeddingVector> original_query_embeddings;  // aligned with queries
    std::vector<std::vector<std::string>> feedback_ids;      // aligned, first-pass top-k
    std::vector<PrfInput> prf_inputs;                        // aligned
    const FlatIndex* index = nullptr;
    const Qrels* qrels = nullptr;
    int rel_threshold = 2;
};

GeometryContext make_geometry_context(const std::vector<QueryRecord>& queries,
                                      const EncoderParams& baseline_encoder,
                                      const Vocabulary& vocab, const DocTokens& doc_tokens,
                                      const RunList& first_pass, const FlatIndex& index,
                                      const Qrels& qrels, std::size_t k, int threads = 1);

GeometryRecord embedding_geometry_at(const EncoderParams& prf_params, std::size_t step,
                                     const GeometryContext& ctx, int threads = 1);

// Offline variant over saved checkpoints (step taken from the header when
// present, else the series position).
std::vector<GeometryRecord> embedding_geometry(const std::vector<std::string>& checkpoint_paths,
                                               const GeometryContext& ctx, int threads = 1);

// Mean per-token group attention over a query set, for the training log and
// the attention-separation analysis.
struct GroupAttentionSummary {
    double query_mean = 0.0;
    double relevant_mean = 0.0;
    double irrelevant_mean = 0.0;
    double all_docs_mean = 0.0;
    std::size_t queries_with_relevant = 0;
    std::size_t queries_with_irrelevant = 0;
    // Queries where the relevant per-token mean strictly exceeds the
    // irrelevant one, among queries having both groups.
    std::size_t separation_wins = 0;
    std::size_t separation_total = 0;
    std::vector<GroupAttention::RankStat> per_rank_means;  // mass averaged over queries
};

GroupAttentionSummary summarize_group_attention(const EncoderParams& prf_params,
                                                const GeometryContext& ctx, int threads = 1);

struct HighlightToken {
    std::string token;
    double weight = 0.0;  // raw attention / max non-special attention
    std::string role;     // "query", "doc<rank>" or "special"
};

// Per-token normalized attention weights for rendering; padding is dropped
// and specials are excluded from the normalization maximum.
std::vector<HighlightToken> highlight_terms(const PrfInput& input, const AttentionRecord& attn,
                                            const Vocabulary& vocab);

void write_highlight_html(const std::vector<HighlightToken>& tokens, const std::string& title,
                          const std::string& path);

struct AblationRow {
    std::string label;  // "baseline", "k=0", "k=3", ...
    std::optional<std::size_t> k;
    double mrr10 = 0.0;
    double ndcg10 = 0.0;
    double recall1k = 0.0;
    double hole10 = 0.0;
    std::optional<double> avg_rel_at_k;
};

// Evaluates the baseline first pass plus one feedback encoder per k on a
// fixed query set. avg_rel is measured on the first-pass run at position k.
std::vector<AblationRow> depth_ablation(const EncoderParams& baseline_encoder,
                                        const std::map<std::size_t, const EncoderParams*>& prf_encoders,
                                        const std::vector<QueryRecord>& queries,
                                        const Qrels& qrels, const Vocabulary& vocab,
                                        const FlatIndex& index, const DocTokens& doc_tokens,
                                        const PrfConfig& base_config, int threads = 1);

// header_comment, when nonempty, becomes a leading "# ..." line.
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path,
                        const std::string& header_comment = "");

}  // namespace dprf
