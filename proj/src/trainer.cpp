#include "dprf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>

#include "dprf/metrics.hpp"
#include "dprf/parallel.hpp"
#include "dprf/rng.hpp"
#include "json.hpp"

namespace dprf {

void TrainConfig::validate() const {
    if (batch_size == 0 || total_steps == 0 || eval_interval == 0 || accumulation_steps == 0)
        throw TrainError("train config counts must be positive");
    if (learning_rate <= 0.0) throw TrainError("learning rate must be positive");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
        throw TrainError("warmup fraction must lie in [0, 1]");
    if (threads < 1) throw TrainError("threads must be >= 1");
}

double nll_loss(const EmbeddingVector& q, const EmbeddingVector& d_plus,
                const std::vector<EmbeddingVector>& d_minus) {
    return nll_loss_grad(q, d_plus, d_minus).loss;
}

NllGrad nll_loss_grad(const EmbeddingVector& q, const EmbeddingVector& d_plus,
                      const std::vector<EmbeddingVector>& d_minus) {
    const std::size_t dim = q.size();
    if (d_plus.size() != dim) throw TrainError("nll: dimension mismatch");
    for (const auto& d : d_minus)
        if (d.size() != dim) throw TrainError("nll: dimension mismatch");

    std::vector<double> scores(1 + d_minus.size());
    auto dot = [dim](const EmbeddingVector& a, const EmbeddingVector& b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) acc += a[i] * b[i];
        return acc;
    };
    scores[0] = dot(q, d_plus);
    for (std::size_t i = 0; i < d_minus.size(); ++i) scores[1 + i] = dot(q, d_minus[i]);

    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - mx);

    NllGrad out;
    out.loss = std::log(z) - (scores[0] - mx);
    out.probs.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out.probs[i] = std::exp(scores[i] - mx) / z;

    // dL/dq = sum_d p_d * d  -  d+
    out.grad_query.assign(dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j)
        out.grad_query[j] = (out.probs[0] - 1.0) * d_plus[j];
    for (std::size_t i = 0; i < d_minus.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j) out.grad_query[j] += out.probs[1 + i] * d_minus[i][j];
    return out;
}

std::vector<std::string> sample_negatives(const RunList::Entry& first_pass, const Qrels& qrels,
                                          std::size_t n, std::uint64_t seed,
                                          const std::vector<std::string>& corpus_doc_ids) {
    std::vector<std::string> candidates;
    const std::size_t depth = std::min<std::size_t>(200, first_pass.hits.size());
    for (std::size_t i = 0; i < depth; ++i) {
        const auto& doc_id = first_pass.hits[i].doc_id;
        if (qrels.grade(first_pass.query_id, doc_id) < 1) candidates.push_back(doc_id);
    }
    Rng rng = Rng(seed).child("neg:" + first_pass.query_id);
    rng.shuffle(candidates);
    if (candidates.size() > n) candidates.resize(n);

    if (candidates.size() < n) {
        if (corpus_doc_ids.empty())
            throw TrainError("insufficient negatives and no corpus to pad from for query " +
                             first_pass.query_id);
        std::size_t attempts = 0;
        const std::size_t max_attempts = 1000 * (n + 1);
        while (candidates.size() < n) {
            if (++attempts > max_attempts)
                throw TrainError("cannot find enough negatives for query " + first_pass.query_id);
            const auto& doc_id =
                corpus_doc_ids[static_cast<std::size_t>(rng.below(corpus_doc_ids.size()))];
            if (qrels.grade(first_pass.query_id, doc_id) >= 1) continue;
            if (std::find(candidates.begin(), candidates.end(), doc_id) != candidates.end())
                continue;
            candidates.push_back(doc_id);
        }
    }
    return candidates;
}

namespace {

// Adam with bias correction; the parameter walk is part of the reproducible
// contract, so moments are reduced in tensor_list order.
class Adam {
public:
    Adam(const EncoderParams& params, double lr, double warmup_fraction, std::size_t total_steps)
        : m_(zeros_like(params)),
          v_(zeros_like(params)),
          lr_(lr),
          warmup_steps_(std::max<std::size_t>(1, static_cast<std::size_t>(
                                                     warmup_fraction * static_cast<double>(total_steps)))) {}

    void update(EncoderParams& params, const EncoderParams& grads) {
        ++t_;
        const double lr_t = t_ <= warmup_steps_
                                ? lr_ * static_cast<double>(t_) / static_cast<double>(warmup_steps_)
                                : lr_;
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));

        auto ps = tensor_list(params);
        auto gs = tensor_list(const_cast<EncoderParams&>(grads));
        auto ms = tensor_list(m_);
        auto vs = tensor_list(v_);
        for (std::size_t ti = 0; ti < ps.size(); ++ti) {
            auto& p = ps[ti]->data;
            const auto& g = gs[ti]->data;
            auto& m = ms[ti]->data;
            auto& v = vs[ti]->data;
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
                v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= lr_t * mhat / (std::sqrt(vhat) + kEps);
            }
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    EncoderParams m_, v_;
    double lr_;
    std::size_t warmup_steps_;
    std::size_t t_ = 0;
};

void zero_grads(EncoderParams& grads) {
    for (Matrix* m : tensor_list(grads)) m->fill(0.0);
}

void scale_grads(EncoderParams& grads, double factor) {
    for (Matrix* m : tensor_list(grads))
        for (double& v : m->data) v *= factor;
}

// Deterministic choice of a positive document: seeded pick among the
// highest-convention-grade judged docs of the query.
std::string pick_positive(const std::string& query_id, const Qrels& qrels, int threshold,
                          std::uint64_t seed) {
    const auto* judged = qrels.for_query(query_id);
    if (judged == nullptr)
        throw TrainError("query " + query_id + " has no judgments; cannot build example");
    std::vector<std::string> positives;
    for (const auto& [doc_id, grade] : *judged)
        if (grade >= threshold) positives.push_back(doc_id);
    if (positives.empty())
        throw TrainError("query " + query_id + " has no positive (grade >= " +
                         std::to_string(threshold) + ") documents");
    Rng rng = Rng(seed).child("pos:" + query_id);
    return positives[static_cast<std::size_t>(rng.below(positives.size()))];
}

struct CandidateSet {
    std::vector<EmbeddingVector> negatives;
    std::vector<std::string> negative_ids;
};

// In-batch sharing with relevance filtering: documents judged relevant for
// the example's query never serve as its negatives.
void add_candidate(CandidateSet& set, const std::string& doc_id, const EmbeddingVector& emb,
                   const TrainingExample& example, const Qrels& qrels) {
    if (doc_id == example.positive_doc_id) return;
    if (qrels.grade(example.query_id, doc_id) >= 1) return;
    if (std::find(set.negative_ids.begin(), set.negative_ids.end(), doc_id) !=
        set.negative_ids.end())
        return;
    set.negative_ids.push_back(doc_id);
    set.negatives.push_back(emb);
}

double mrr10_of_entries(std::vector<RunList::Entry> entries, const Qrels& qrels) {
    RunList run;
    run.entries = std::move(entries);
    return mrr_at(run, qrels, 10).mean;
}

}  // namespace

std::vector<TrainingExample> make_prf_examples(const std::vector<QueryRecord>& queries,
                                               const Qrels& qrels, const RunList& first_pass,
                                               const Vocabulary& vocab, const TrainConfig& config,
                                               const std::vector<std::string>& corpus_doc_ids) {
    const int pos_threshold = relevance_threshold_for(qrels);
    std::vector<TrainingExample> examples;
    examples.reserve(queries.size());
    for (const auto& query : queries) {
        const auto* entry = first_pass.find(query.query_id);
        if (entry == nullptr)
            throw TrainError("query " + query.query_id + " missing from first-pass run");
        TrainingExample ex;
        ex.query_id = query.query_id;
        ex.query_tokens = tokenize(query.text, vocab);
        if (ex.query_tokens.empty())
            throw TrainError("query " + query.query_id + " is empty after tokenization");
        ex.positive_doc_id = pick_positive(query.query_id, qrels, pos_threshold, config.seed);
        ex.negative_doc_ids = sample_negatives(*entry, qrels, config.negatives_per_example,
                                               config.seed, corpus_doc_ids);
        const std::size_t k = std::min(config.k, entry->hits.size());
        for (std::size_t i = 0; i < k; ++i) ex.prf_doc_ids.push_back(entry->hits[i].doc_id);
        examples.push_back(std::move(ex));
    }
    return examples;
}

BatchGradResult prf_loss_gradient(const EncoderParams& prf_params,
                                  const std::vector<TrainingExample>& batch,
                                  const FlatIndex& index, const DocTokens& doc_tokens,
                                  const Qrels& qrels, bool in_batch_negatives, int threads) {
    if (batch.empty()) throw TrainError("empty batch");
    const std::size_t b = batch.size();

    std::vector<PrfInput> inputs(b);
    std::vector<EncoderForward> forwards(b);
    parallel_for(b, threads, [&](std::size_t i) {
        std::vector<std::vector<int>> feedback;
        feedback.reserve(batch[i].prf_doc_ids.size());
        for (const auto& doc_id : batch[i].prf_doc_ids)
            feedback.push_back(doc_tokens.tokens(doc_id));
        inputs[i] = build_prf_input(batch[i].query_tokens, feedback, prf_params.config.budget());
        forwards[i] = encode_forward(prf_params, inputs[i].seq);
    });

    BatchGradResult result;
    result.grads = zeros_like(prf_params);
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
        const EmbeddingVector q = forwards[i].cls();
        const EmbeddingVector d_plus = index.embedding(batch[i].positive_doc_id);

        CandidateSet set;
        for (const auto& neg_id : batch[i].negative_doc_ids)
            add_candidate(set, neg_id, index.embedding(neg_id), batch[i], qrels);
        if (in_batch_negatives)
            for (std::size_t j = 0; j < b; ++j) {
                if (j == i) continue;
                add_candidate(set, batch[j].positive_doc_id,
                              index.embedding(batch[j].positive_doc_id), batch[i], qrels);
            }
        if (set.negatives.empty())
            throw TrainError("no usable negatives for query " + batch[i].query_id);

        NllGrad nll = nll_loss_grad(q, d_plus, set.negatives);
        if (!std::isfinite(nll.loss))
            throw TrainError("loss diverged (non-finite) for query " + batch[i].query_id);
        result.loss += nll.loss * inv_b;
        for (double& g : nll.grad_query) g *= inv_b;
        encode_backward(prf_params, forwards[i], nll.grad_query, result.grads);
    }
    return result;
}

namespace {

struct EvalHooks {
    std::function<double(const EncoderParams&)> dev_metric;
    std::function<std::optional<GeometryRecord>(const EncoderParams&, std::size_t)> geometry;
    std::function<std::optional<GroupAttentionSummary>(const EncoderParams&)> attention;
};

// Shared eval/selection/logging loop for both phases. step_fn performs one
// optimization step and returns the batch loss.
TrainResult run_training_loop(EncoderParams params, const TrainConfig& config,
                              const std::function<double(EncoderParams&, std::size_t)>& step_fn,
                              const EvalHooks& hooks) {
    TrainResult result;
    double loss_acc = 0.0;
    std::size_t loss_n = 0;

    auto evaluate = [&](std::size_t step, bool with_loss) {
        TrainLogRecord rec;
        rec.step = step;
        if (with_loss && loss_n > 0) rec.mean_loss = loss_acc / static_cast<double>(loss_n);
        loss_acc = 0.0;
        loss_n = 0;
        rec.dev_metric = hooks.dev_metric(params);
        if (hooks.geometry) rec.geometry = hooks.geometry(params, step);
        if (hooks.attention) rec.attention = hooks.attention(params);
        result.log.push_back(rec);
        // Strictly-greater keeps the earliest step on ties.
        if (result.log.size() == 1 || rec.dev_metric > result.best_dev_metric) {
            result.best = params;
            result.best_step = step;
            result.best_dev_metric = rec.dev_metric;
        }
    };

    evaluate(0, false);
    for (std::size_t step = 1; step <= config.total_steps; ++step) {
        const double loss = step_fn(params, step);
        if (!std::isfinite(loss))
            throw TrainError("training diverged: non-finite loss at step " + std::to_string(step));
        loss_acc += loss;
        ++loss_n;
        if (step % config.eval_interval == 0 || step == config.total_steps)
            evaluate(step, true);
    }
    result.final_params = std::move(params);
    return result;
}

// Cyclic, reshuffled-on-epoch batch order.
class BatchSchedule {
public:
    BatchSchedule(std::size_t n, std::uint64_t seed) : order_(n), rng_(Rng(seed).child("order")) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        rng_.shuffle(order_);
    }

    std::vector<std::size_t> next(std::size_t batch_size) {
        std::vector<std::size_t> batch;
        batch.reserve(batch_size);
        while (batch.size() < batch_size) {
            if (cursor_ == order_.size()) {
                rng_.shuffle(order_);
                cursor_ = 0;
            }
            batch.push_back(order_[cursor_++]);
        }
        return batch;
    }

private:
    std::vector<std::size_t> order_;
    Rng rng_;
    std::size_t cursor_ = 0;
};

}  // namespace

TrainResult train_baseline(const EncoderConfig& config, const TrainConfig& train_config,
                           const std::vector<DocumentRecord>& corpus,
                           const std::vector<QueryRecord>& train_queries,
                           const std::vector<QueryRecord>& dev_queries, const Qrels& qrels,
                           const Vocabulary& vocab, const std::string& log_path) {
    train_config.validate();
    config.validate();
    if (train_queries.empty() || dev_queries.empty()) throw TrainError("empty query split");

    const int pos_threshold = relevance_threshold_for(qrels);
    const std::size_t n_docs = corpus.size();

    // Frozen example set: query tokens and one seeded positive per query.
    struct BaselineExample {
        std::string query_id;
        TokenSequence query_input;
        std::string positive_doc_id;
        std::size_t positive_row;
    };
    std::map<std::string, std::size_t> doc_row;
    for (std::size_t i = 0; i < n_docs; ++i) doc_row[corpus[i].doc_id] = i;

    std::vector<TokenSequence> doc_inputs(n_docs);
    parallel_for(n_docs, train_config.threads, [&](std::size_t i) {
        doc_inputs[i] = build_doc_input(tokenize(corpus[i].text, vocab), config.max_len);
    });

    std::vector<BaselineExample> examples;
    examples.reserve(train_queries.size());
    for (const auto& query : train_queries) {
        BaselineExample ex;
        ex.query_id = query.query_id;
        const auto tokens = tokenize(query.text, vocab);
        if (tokens.empty())
            throw TrainError("query " + query.query_id + " is empty after tokenization");
        ex.query_input = build_query_input(tokens, config.budget());
        ex.positive_doc_id = pick_positive(query.query_id, qrels, pos_threshold,
                                           train_config.seed);
        auto it = doc_row.find(ex.positive_doc_id);
        if (it == doc_row.end())
            throw TrainError("positive doc " + ex.positive_doc_id + " not in corpus");
        ex.positive_row = it->second;
        examples.push_back(std::move(ex));
    }

    std::vector<TokenSequence> dev_inputs(dev_queries.size());
    parallel_for(dev_queries.size(), train_config.threads, [&](std::size_t i) {
        const auto tokens = tokenize(dev_queries[i].text, vocab);
        if (tokens.empty())
            throw TrainError("query " + dev_queries[i].query_id + " is empty after tokenization");
        dev_inputs[i] = build_query_input(tokens, config.budget());
    });

    EncoderParams params = init_params(config, train_config.seed);
    Adam optimizer(params, train_config.learning_rate, train_config.warmup_fraction,
                   train_config.total_steps);
    BatchSchedule schedule(examples.size(), train_config.seed);
    Rng pool_rng = Rng(train_config.seed).child("negpool");
    EncoderParams grads = zeros_like(params);

    auto step_fn = [&](EncoderParams& p, std::size_t) -> double {
        const auto batch = schedule.next(train_config.batch_size);
        const std::size_t b = batch.size();

        // One shared pool of sampled random negatives per step keeps the
        // document-encoder cost linear in the batch size.
        std::vector<std::size_t> pool;
        while (pool.size() < train_config.negatives_per_example) {
            const auto row = static_cast<std::size_t>(pool_rng.below(n_docs));
            if (std::find(pool.begin(), pool.end(), row) == pool.end()) pool.push_back(row);
        }

        // Unique documents of this step: batch positives plus the pool.
        std::vector<std::size_t> doc_rows;
        auto slot_of = [&](std::size_t row) {
            for (std::size_t s = 0; s < doc_rows.size(); ++s)
                if (doc_rows[s] == row) return s;
            doc_rows.push_back(row);
            return doc_rows.size() - 1;
        };
        std::vector<std::size_t> pos_slot(b);
        for (std::size_t i = 0; i < b; ++i) pos_slot[i] = slot_of(examples[batch[i]].positive_row);
        std::vector<std::size_t> pool_slot(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool_slot[i] = slot_of(pool[i]);

        std::vector<EncoderForward> query_fwd(b);
        std::vector<EncoderForward> doc_fwd(doc_rows.size());
        parallel_for(b + doc_rows.size(), train_config.threads, [&](std::size_t i) {
            if (i < b)
                query_fwd[i] = encode_forward(p, examples[batch[i]].query_input);
            else
                doc_fwd[i - b] = encode_forward(p, doc_inputs[doc_rows[i - b]]);
        });

        std::vector<EmbeddingVector> doc_emb(doc_rows.size());
        for (std::size_t s = 0; s < doc_rows.size(); ++s) doc_emb[s] = doc_fwd[s].cls();

        const double inv_b = 1.0 / static_cast<double>(b);
        double loss = 0.0;
        zero_grads(grads);
        std::vector<EmbeddingVector> doc_grad(doc_rows.size(),
                                              EmbeddingVector(config.model_dim, 0.0));
        for (std::size_t i = 0; i < b; ++i) {
            const auto& ex = examples[batch[i]];
            const EmbeddingVector q = query_fwd[i].cls();

            std::vector<std::size_t> neg_slots;
            auto try_add = [&](std::size_t slot) {
                const auto& doc_id = corpus[doc_rows[slot]].doc_id;
                if (doc_id == ex.positive_doc_id) return;
                if (qrels.grade(ex.query_id, doc_id) >= 1) return;
                if (std::find(neg_slots.begin(), neg_slots.end(), slot) != neg_slots.end()) return;
                neg_slots.push_back(slot);
            };
            if (train_config.in_batch_negatives)
                for (std::size_t j = 0; j < b; ++j)
                    if (j != i) try_add(pos_slot[j]);
            for (std::size_t s : pool_slot) try_add(s);
            if (neg_slots.empty())
                throw TrainError("no usable negatives for query " + ex.query_id);

            std::vector<EmbeddingVector> negs;
            negs.reserve(neg_slots.size());
            for (std::size_t s : neg_slots) negs.push_back(doc_emb[s]);

            NllGrad nll = nll_loss_grad(q, doc_emb[pos_slot[i]], negs);
            loss += nll.loss * inv_b;

            for (double& g : nll.grad_query) g *= inv_b;
            encode_backward(p, query_fwd[i], nll.grad_query, grads);

            // d(loss)/d(doc) contributions, positive then each negative.
            for (std::size_t j = 0; j < config.model_dim; ++j)
                doc_grad[pos_slot[i]][j] += (nll.probs[0] - 1.0) * q[j] * inv_b;
            for (std::size_t ni = 0; ni < neg_slots.size(); ++ni)
                for (std::size_t j = 0; j < config.model_dim; ++j)
                    doc_grad[neg_slots[ni]][j] += nll.probs[1 + ni] * q[j] * inv_b;
        }
        for (std::size_t s = 0; s < doc_rows.size(); ++s)
            encode_backward(p, doc_fwd[s], doc_grad[s], grads);

        optimizer.update(p, grads);
        return loss;
    };

    EvalHooks hooks;
    hooks.dev_metric = [&](const EncoderParams& p) {
        // Fresh corpus index under the current parameters, then MRR@10.
        const FlatIndex index = build_corpus_index(p, corpus, vocab, train_config.threads);
        std::vector<RunList::Entry> entries(dev_queries.size());
        parallel_for(dev_queries.size(), train_config.threads, [&](std::size_t i) {
            auto hits = index.search(encode(p, dev_inputs[i]), 10);
            entries[i] = {dev_queries[i].query_id, std::move(hits)};
        });
        return mrr10_of_entries(std::move(entries), qrels);
    };

    TrainResult result = run_training_loop(std::move(params), train_config, step_fn, hooks);
    if (!log_path.empty()) write_train_log(result.log, log_path, "baseline");
    return result;
}

TrainResult train_prf(const EncoderParams& baseline, const TrainConfig& train_config,
                      const FlatIndex& index, const std::vector<DocumentRecord>& corpus,
                      const std::vector<QueryRecord>& train_queries,
                      const std::vector<QueryRecord>& dev_queries, const Qrels& qrels,
                      const Vocabulary& vocab, const RunList& first_pass_train,
                      const RunList& first_pass_dev, const std::string& log_path) {
    train_config.validate();
    if (train_queries.empty() || dev_queries.empty()) throw TrainError("empty query split");

    std::vector<std::string> corpus_doc_ids;
    corpus_doc_ids.reserve(corpus.size());
    for (const auto& doc : corpus) corpus_doc_ids.push_back(doc.doc_id);

    const DocTokens doc_tokens(corpus, vocab);
    const auto examples = make_prf_examples(train_queries, qrels, first_pass_train, vocab,
                                            train_config, corpus_doc_ids);

    // Frozen dev-side context: original query embeddings, feedback lists and
    // inputs; reused for the dev metric, geometry and attention logging.
    const GeometryContext dev_ctx =
        make_geometry_context(dev_queries, baseline, vocab, doc_tokens, first_pass_dev, index,
                              qrels, train_config.k, train_config.threads);

    EncoderParams params = baseline;  // BERT^prf initialized from the baseline
    Adam optimizer(params, train_config.learning_rate, train_config.warmup_fraction,
                   train_config.total_steps);
    BatchSchedule schedule(examples.size(), train_config.seed);

    auto step_fn = [&](EncoderParams& p, std::size_t) -> double {
        const auto batch_idx = schedule.next(train_config.batch_size);
        std::vector<TrainingExample> batch;
        batch.reserve(batch_idx.size());
        for (auto i : batch_idx) batch.push_back(examples[i]);
        BatchGradResult bg = prf_loss_gradient(p, batch, index, doc_tokens, qrels,
                                               train_config.in_batch_negatives,
                                               train_config.threads);
        optimizer.update(p, bg.grads);
        return bg.loss;
    };

    EvalHooks hooks;
    hooks.dev_metric = [&](const EncoderParams& p) {
        std::vector<RunList::Entry> entries(dev_queries.size());
        parallel_for(dev_queries.size(), train_config.threads, [&](std::size_t i) {
            auto hits = index.search(encode(p, dev_ctx.prf_inputs[i]), 10);
            entries[i] = {dev_queries[i].query_id, std::move(hits)};
        });
        return mrr10_of_entries(std::move(entries), qrels);
    };
    hooks.geometry = [&](const EncoderParams& p, std::size_t step) {
        return std::optional<GeometryRecord>(
            embedding_geometry_at(p, step, dev_ctx, train_config.threads));
    };
    hooks.attention = [&](const EncoderParams& p) {
        return std::optional<GroupAttentionSummary>(
            summarize_group_attention(p, dev_ctx, train_config.threads));
    };

    TrainResult result = run_training_loop(std::move(params), train_config, step_fn, hooks);
    if (!log_path.empty()) write_train_log(result.log, log_path, "prf");
    return result;
}

void write_train_log(const std::vector<TrainLogRecord>& log, const std::string& path,
                     const std::string& phase, const std::string& config_hash) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw TrainError("cannot open '" + path + "' for writing");
    nlohmann::json header{{"record", "header"}, {"phase", phase}};
    if (!config_hash.empty()) header["config_hash"] = config_hash;
    out << header.dump() << '\n';
    for (const auto& rec : log) {
        nlohmann::json j{{"record", "eval"}, {"step", rec.step}, {"dev_mrr10", rec.dev_metric}};
        if (rec.mean_loss) j["loss"] = *rec.mean_loss;
        if (rec.geometry) {
            j["dot_query"] = rec.geometry->dot_query;
            j["dot_relevant"] = rec.geometry->dot_relevant;
            j["dot_irrelevant"] = rec.geometry->dot_irrelevant;
        }
        if (rec.attention) {
            j["attn_query"] = rec.attention->query_mean;
            j["attn_relevant"] = rec.attention->relevant_mean;
            j["attn_irrelevant"] = rec.attention->irrelevant_mean;
            j["attn_all_docs"] = rec.attention->all_docs_mean;
            nlohmann::json ranks = nlohmann::json::array();
            for (const auto& rs : rec.attention->per_rank_means)
                ranks.push_back({{"rank", rs.rank}, {"mean", rs.stat.mean()}});
            j["attn_per_rank"] = ranks;
        }
        out << j.dump() << '\n';
    }
    if (!out) throw TrainError("write failed for '" + path + "'");
}

}  // namespace dprf
