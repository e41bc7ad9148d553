#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dprf/analysis.hpp"
#include "dprf/data_io.hpp"
#include "dprf/encoder.hpp"
#include "dprf/flat_index.hpp"
#include "dprf/retrieval.hpp"
#include "dprf/run_io.hpp"
#include "dprf/vocab.hpp"

namespace dprf {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stable -log( exp(q.d+) / (exp(q.d+) + sum exp(q.d-)) ).
double nll_loss(const EmbeddingVector& q, const EmbeddingVector& d_plus,
                const std::vector<EmbeddingVector>& d_minus);

struct NllGrad {
    double loss = 0.0;
    EmbeddingVector grad_query;        // d(loss)/dq
    std::vector<double> probs;         // softmax, positive first
};

NllGrad nll_loss_grad(const EmbeddingVector& q, const EmbeddingVector& d_plus,
                      const std::vector<EmbeddingVector>& d_minus);

struct TrainingExample {
    std::string query_id;
    std::vector<int> query_tokens;
    std::string positive_doc_id;
    std::vector<std::string> negative_doc_ids;
    std::vector<std::string> prf_doc_ids;  // first-pass rank order
};

struct TrainConfig {
    std::size_t k = 3;
    std::size_t negatives_per_example = 8;
    std::size_t batch_size = 32;
    std::size_t accumulation_steps = 1;
    double learning_rate = 1e-3;
    double warmup_fraction = 0.05;  // linear warmup over this share of steps
    std::size_t total_steps = 2000;
    std::size_t eval_interval = 100;
    std::uint64_t seed = 42;
    bool in_batch_negatives = true;
    int threads = 1;

    void validate() const;
};

// Deterministic draw of n negatives from the top 200 of the first-pass run,
// excluding docs judged relevant (grade >= 1); padded with seeded uniform
// corpus docs when the run cannot supply enough candidates.
std::vector<std::string> sample_negatives(const RunList::Entry& first_pass, const Qrels& qrels,
                                          std::size_t n, std::uint64_t seed,
                                          const std::vector<std::string>& corpus_doc_ids);

struct TrainLogRecord {
    std::size_t step = 0;
    std::optional<double> mean_loss;  // mean over steps since the last record
    double dev_metric = 0.0;          // dev MRR@10
    std::optional<GeometryRecord> geometry;
    std::optional<GroupAttentionSummary> attention;
};

struct TrainResult {
    EncoderParams best;
    std::size_t best_step = 0;
    double best_dev_metric = 0.0;
    EncoderParams final_params;
    std::vector<TrainLogRecord> log;
};

struct BatchGradResult {
    double loss = 0.0;
    EncoderParams grads;
};

// Mean feedback-encoder NLL over a batch with document embeddings read from
// the frozen index; gradients flow only into the feedback encoder.
BatchGradResult prf_loss_gradient(const EncoderParams& prf_params,
                                  const std::vector<TrainingExample>& batch,
                                  const FlatIndex& index, const DocTokens& doc_tokens,
                                  const Qrels& qrels, bool in_batch_negatives, int threads);

// Builds the frozen per-query training examples for the feedback phase:
// seeded positive choice, fixed feedback lists, fixed sampled negatives.
std::vector<TrainingExample> make_prf_examples(const std::vector<QueryRecord>& queries,
                                               const Qrels& qrels, const RunList& first_pass,
                                               const Vocabulary& vocab, const TrainConfig& config,
                                               const std::vector<std::string>& corpus_doc_ids);

// Phase 1: dual encoder trained from scratch with in-batch plus a shared
// pool of sampled random negatives; checkpoint selection by dev MRR@10.
TrainResult train_baseline(const EncoderConfig& config, const TrainConfig& train_config,
                           const std::vector<DocumentRecord>& corpus,
                           const std::vector<QueryRecord>& train_queries,
                           const std::vector<QueryRecord>& dev_queries, const Qrels& qrels,
                           const Vocabulary& vocab, const std::string& log_path = "");

// Phase 2: feedback query encoder initialized from the trained baseline and
// trained against the frozen index; the baseline, index and feedback lists
// never change.
TrainResult train_prf(const EncoderParams& baseline, const TrainConfig& train_config,
                      const FlatIndex& index, const std::vector<DocumentRecord>& corpus,
                      const std::vector<QueryRecord>& train_queries,
                      const std::vector<QueryRecord>& dev_queries, const Qrels& qrels,
                      const Vocabulary& vocab, const RunList& first_pass_train,
                      const RunList& first_pass_dev, const std::string& log_path = "");

void write_train_log(const std::vector<TrainLogRecord>& log, const std::string& path,
                     const std::string& phase, const std::string& config_hash = "");

}  // namespace dprf
