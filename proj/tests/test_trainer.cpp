#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dprf/rng.hpp"
#include "dprf/trainer.hpp"

using namespace dprf;

namespace {

EmbeddingVector random_vec(std::size_t dim, Rng& rng) {
    EmbeddingVector v(dim);
    for (auto& x : v) x = rng.uniform() * 2.0 - 1.0;
    return v;
}

EncoderConfig tiny_config(std::size_t vocab_size) {
    EncoderConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.model_dim = 8;
    cfg.ff_dim = 16;
    cfg.max_len = 16;
    cfg.vocab_size = vocab_size;
    cfg.query_budget = 4;
    return cfg;
}

// Small frozen world for feedback-phase tests: a corpus of short docs, an
// index of random embeddings and qrels marking one positive per query.
struct TinyWorld {
    std::vector<DocumentRecord> corpus;
    Vocabulary vocab;
    FlatIndex index;
    Qrels qrels;
    DocTokens doc_tokens;
    std::vector<TrainingExample> examples;

    static TinyWorld make(std::size_t model_dim = 8) {
        TinyWorld w;
        std::vector<std::string> texts = {"red apple fruit",  "green apple pie",
                                          "blue sky cloud",   "sky storm rain",
                                          "fast car engine",  "car wheel road",
                                          "slow boat river",  "boat sail wind"};
        for (std::size_t i = 0; i < texts.size(); ++i)
            w.corpus.push_back({"d" + std::to_string(i), texts[i]});
        w.vocab = build_vocab(texts, 1);

        Rng rng(404);
        std::vector<std::pair<std::string, EmbeddingVector>> rows;
        for (const auto& doc : w.corpus) rows.emplace_back(doc.doc_id, random_vec(model_dim, rng));
        w.index = FlatIndex::build(rows);

        w.qrels.add("q0", "d0", 2);
        w.qrels.add("q0", "d1", 1);
        w.qrels.add("q1", "d4", 2);
        w.qrels.add("q1", "d5", 1);

        w.doc_tokens = DocTokens(w.corpus, w.vocab);

        TrainingExample e0;
        e0.query_id = "q0";
        e0.query_tokens = tokenize("red fruit", w.vocab);
        e0.positive_doc_id = "d0";
        e0.negative_doc_ids = {"d2", "d6"};
        e0.prf_doc_ids = {"d0", "d3", "d6"};
        TrainingExample e1;
        e1.query_id = "q1";
        e1.query_tokens = tokenize("fast engine", w.vocab);
        e1.positive_doc_id = "d4";
        e1.negative_doc_ids = {"d3", "d7"};
        e1.prf_doc_ids = {"d4", "d2", "d7"};
        w.examples = {e0, e1};
        return w;
    }
};

}  // namespace

TEST_CASE("nll loss values") {
    // all dot products equal with three negatives: -log(1/4) = ln 4
    const EmbeddingVector q{1.0, 0.0};
    const EmbeddingVector d{0.5, 0.5};
    const std::vector<EmbeddingVector> three(3, d);
    CHECK(nll_loss(q, d, three) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(nll_loss(q, d, three) == doctest::Approx(1.3862943611).epsilon(1e-9));

    // dots: positive 2, negatives 1 and 0 -> ln(e^2+e^1+e^0) - 2
    const EmbeddingVector qa{1.0};
    const auto loss = nll_loss(qa, {2.0}, {{1.0}, {0.0}});
    CHECK(loss == doctest::Approx(std::log(std::exp(2.0) + std::exp(1.0) + 1.0) - 2.0)
                      .epsilon(1e-12));

    // a dominant positive drives the loss to zero
    CHECK(nll_loss(qa, {50.0}, {{0.0}, {1.0}}) < 1e-8);

    // loss is nonnegative and dimension mismatches are rejected
    CHECK(nll_loss(qa, {0.0}, {{5.0}}) > 0.0);
    CHECK_THROWS_AS(nll_loss(q, {1.0}, {}), TrainError);
    CHECK_THROWS_AS(nll_loss(qa, {1.0}, {{1.0, 2.0}}), TrainError);
}

TEST_CASE("nll loss is invariant under negative permutations") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const auto q = random_vec(6, rng);
        const auto dp = random_vec(6, rng);
        std::vector<EmbeddingVector> negs;
        for (int i = 0; i < 5; ++i) negs.push_back(random_vec(6, rng));
        const double base = nll_loss(q, dp, negs);
        rng.shuffle(negs);
        CHECK(nll_loss(q, dp, negs) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("adding a negative never decreases the loss") {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const auto q = random_vec(6, rng);
        const auto dp = random_vec(6, rng);
        std::vector<EmbeddingVector> negs{random_vec(6, rng)};
        double prev = nll_loss(q, dp, negs);
        for (int i = 0; i < 4; ++i) {
            negs.push_back(random_vec(6, rng));
            const double next = nll_loss(q, dp, negs);
            CHECK(next >= prev - 1e-12);
            prev = next;
        }
    }
}

TEST_CASE("query gradient matches the softmax algebra") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 5;
        const auto q = random_vec(dim, rng);
        const auto dp = random_vec(dim, rng);
        std::vector<EmbeddingVector> negs;
        for (int i = 0; i < 4; ++i) negs.push_back(random_vec(dim, rng));

        const auto out = nll_loss_grad(q, dp, negs);
        // dL/dq = sum_d p_d d - d+, the softmax-weighted doc mean minus the positive
        for (std::size_t j = 0; j < dim; ++j) {
            double expected = out.probs[0] * dp[j] - dp[j];
            for (std::size_t i = 0; i < negs.size(); ++i) expected += out.probs[1 + i] * negs[i][j];
            CHECK(out.grad_query[j] == doctest::Approx(expected).epsilon(1e-12));
        }
        double psum = 0.0;
        for (double p : out.probs) psum += p;
        CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    TinyWorld w = TinyWorld::make();
    const auto cfg = tiny_config(w.vocab.size());
    EncoderParams params = init_params(cfg, 2024);

    const auto analytic =
        prf_loss_gradient(params, w.examples, w.index, w.doc_tokens, w.qrels, true, 1);

    const double h = 1e-4;
    double max_rel = 0.0;
    auto tensors = tensor_list(params);
    auto grad_tensors = tensor_list(const_cast<EncoderParams&>(analytic.grads));
    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        for (std::size_t i = 0; i < tensors[ti]->data.size(); ++i) {
            const double orig = tensors[ti]->data[i];
            tensors[ti]->data[i] = orig + h;
            const double up =
                prf_loss_gradient(params, w.examples, w.index, w.doc_tokens, w.qrels, true, 1).loss;
            tensors[ti]->data[i] = orig - h;
            const double down =
                prf_loss_gradient(params, w.examples, w.index, w.doc_tokens, w.qrels, true, 1).loss;
            tensors[ti]->data[i] = orig;

            const double fd = (up - down) / (2.0 * h);
            const double an = grad_tensors[ti]->data[i];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("document side stays frozen through a gradient step") {
    TinyWorld w = TinyWorld::make();
    const auto cfg = tiny_config(w.vocab.size());
    const EncoderParams params = init_params(cfg, 11);

    std::vector<float> before = w.index.matrix();
    const auto result =
        prf_loss_gradient(params, w.examples, w.index, w.doc_tokens, w.qrels, true, 1);
    CHECK(result.loss > 0.0);
    CHECK(std::memcmp(before.data(), w.index.matrix().data(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("batch loss gradient scales as a mean") {
    TinyWorld w = TinyWorld::make();
    const auto cfg = tiny_config(w.vocab.size());
    const EncoderParams params = init_params(cfg, 31);

    // in-batch off: a batch of one example equals the per-example loss
    const auto single =
        prf_loss_gradient(params, {w.examples[0]}, w.index, w.doc_tokens, w.qrels, false, 1);
    const auto pair =
        prf_loss_gradient(params, w.examples, w.index, w.doc_tokens, w.qrels, false, 1);
    const auto other =
        prf_loss_gradient(params, {w.examples[1]}, w.index, w.doc_tokens, w.qrels, false, 1);
    CHECK(pair.loss == doctest::Approx((single.loss + other.loss) / 2.0).epsilon(1e-12));
}

TEST_CASE("sample_negatives") {
    Qrels qrels;
    qrels.add("q", "pos", 2);
    std::vector<std::string> corpus_ids;
    for (int i = 0; i < 40; ++i) corpus_ids.push_back("c" + std::to_string(i));

    SUBCASE("forced choice when exactly n candidates exist") {
        RunList::Entry entry{"q", {{"pos", 4.0, 1}, {"a", 3.0, 2}, {"b", 2.0, 3}, {"c", 1.0, 4}}};
        auto negs = sample_negatives(entry, qrels, 3, 7, corpus_ids);
        std::sort(negs.begin(), negs.end());
        CHECK(negs == std::vector<std::string>{"a", "b", "c"});
    }
    SUBCASE("same seed twice gives identical sets") {
        RunList::Entry entry{"q", {}};
        for (int i = 0; i < 60; ++i)
            entry.hits.push_back({"r" + std::to_string(i), 60.0 - i, i + 1});
        const auto a = sample_negatives(entry, qrels, 8, 42, corpus_ids);
        const auto b = sample_negatives(entry, qrels, 8, 42, corpus_ids);
        CHECK(a == b);
        const auto c = sample_negatives(entry, qrels, 8, 43, corpus_ids);
        CHECK(a != c);
    }
    SUBCASE("matches a reference seeded shuffle") {
        RunList::Entry entry{"q", {}};
        for (int i = 0; i < 30; ++i)
            entry.hits.push_back({"r" + std::to_string(i), 30.0 - i, i + 1});
        entry.hits[4].doc_id = "pos";  // excluded by relevance

        // reference: same candidate construction, same child stream, same shuffle
        std::vector<std::string> expect;
        for (const auto& hit : entry.hits)
            if (qrels.grade("q", hit.doc_id) < 1) expect.push_back(hit.doc_id);
        Rng ref = Rng(1234).child("neg:q");
        ref.shuffle(expect);
        expect.resize(8);

        CHECK(sample_negatives(entry, qrels, 8, 1234, corpus_ids) == expect);
    }
    SUBCASE("padding from the corpus when the run is short") {
        RunList::Entry entry{"q", {{"pos", 2.0, 1}, {"a", 1.0, 2}}};
        const auto negs = sample_negatives(entry, qrels, 5, 9, corpus_ids);
        CHECK(negs.size() == 5);
        CHECK(std::find(negs.begin(), negs.end(), "a") != negs.end());
        CHECK(std::find(negs.begin(), negs.end(), "pos") == negs.end());
        // no duplicates
        auto sorted = negs;
        std::sort(sorted.begin(), sorted.end());
        CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    }
    SUBCASE("error when nothing can pad") {
        RunList::Entry entry{"q", {{"pos", 1.0, 1}}};
        CHECK_THROWS_AS(sample_negatives(entry, qrels, 3, 9, {}), TrainError);
    }
}

TEST_CASE("make_prf_examples freezes feedback and respects invariants") {
    TinyWorld w = TinyWorld::make();
    RunList fp;
    fp.run_tag = "fp";
    fp.add("q0").hits = {{"d0", 3.0, 1}, {"d3", 2.0, 2}, {"d6", 1.0, 3}};
    fp.add("q1").hits = {{"d4", 3.0, 1}, {"d2", 2.0, 2}, {"d7", 1.0, 3}};

    TrainConfig tc;
    tc.k = 2;
    tc.negatives_per_example = 3;
    tc.seed = 77;
    std::vector<std::string> ids;
    for (const auto& d : w.corpus) ids.push_back(d.doc_id);

    const auto examples = make_prf_examples({{"q0", "red fruit"}, {"q1", "fast engine"}}, w.qrels,
                                            fp, w.vocab, tc, ids);
    REQUIRE(examples.size() == 2);
    CHECK(examples[0].prf_doc_ids == std::vector<std::string>{"d0", "d3"});
    CHECK(examples[0].positive_doc_id == "d0");  // only grade-2 doc of q0
    for (const auto& ex : examples) {
        CHECK(std::find(ex.negative_doc_ids.begin(), ex.negative_doc_ids.end(),
                        ex.positive_doc_id) == ex.negative_doc_ids.end());
        CHECK(ex.negative_doc_ids.size() == 3);
    }
}

namespace {

// Miniature end-to-end world big enough for train_baseline/train_prf runs.
struct TrainWorld {
    std::vector<DocumentRecord> corpus;
    std::vector<QueryRecord> train_queries, dev_queries;
    Qrels qrels;
    Vocabulary vocab;

    static TrainWorld make() {
        TrainWorld w;
        Rng rng(2025);
        const std::vector<std::string> topics = {"apple fruit orchard", "engine car road",
                                                 "river boat water", "star sky night"};
        std::size_t doc_id = 0;
        for (std::size_t t = 0; t < topics.size(); ++t) {
            const auto words = tokenize_words(topics[t]);
            for (int d = 0; d < 6; ++d) {
                std::string text;
                for (int i = 0; i < 6; ++i) {
                    text += words[static_cast<std::size_t>(rng.below(words.size()))];
                    text.push_back(' ');
                }
                text += "filler" + std::to_string(rng.below(10));
                w.corpus.push_back({"d" + std::to_string(doc_id++), text});
            }
        }
        std::vector<std::string> texts;
        for (const auto& d : w.corpus) texts.push_back(d.text);
        w.vocab = build_vocab(texts, 1);
        for (std::size_t t = 0; t < topics.size(); ++t) {
            const auto words = tokenize_words(topics[t]);
            w.train_queries.push_back({"qt" + std::to_string(t), words[0] + " " + words[1]});
            w.dev_queries.push_back({"qd" + std::to_string(t), words[1] + " " + words[2]});
            for (int d = 0; d < 6; ++d) {
                const std::string doc = "d" + std::to_string(t * 6 + static_cast<std::size_t>(d));
                const int grade = d < 3 ? 2 : 1;
                w.qrels.add("qt" + std::to_string(t), doc, grade);
                w.qrels.add("qd" + std::to_string(t), doc, grade);
            }
        }
        return w;
    }
};

TrainConfig quick_config(std::size_t steps, std::size_t eval_interval) {
    TrainConfig tc;
    tc.batch_size = 4;
    tc.total_steps = steps;
    tc.eval_interval = eval_interval;
    tc.negatives_per_example = 2;
    tc.learning_rate = 1e-3;
    tc.seed = 71;
    return tc;
}

EncoderConfig small_model(std::size_t vocab_size) {
    EncoderConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.model_dim = 16;
    cfg.ff_dim = 32;
    cfg.max_len = 32;
    cfg.vocab_size = vocab_size;
    cfg.query_budget = 6;
    return cfg;
}

bool params_equal(const EncoderParams& a, const EncoderParams& b) {
    const auto ta = tensor_list(a);
    const auto tb = tensor_list(b);
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i]->data.size() != tb[i]->data.size()) return false;
        if (std::memcmp(ta[i]->data.data(), tb[i]->data.data(),
                        ta[i]->data.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("baseline training is deterministic and selects the best eval step") {
    TrainWorld w = TrainWorld::make();
    const auto cfg = small_model(w.vocab.size());
    const auto tc = quick_config(8, 4);

    const auto a = train_baseline(cfg, tc, w.corpus, w.train_queries, w.dev_queries, w.qrels,
                                  w.vocab);
    const auto b = train_baseline(cfg, tc, w.corpus, w.train_queries, w.dev_queries, w.qrels,
                                  w.vocab);
    CHECK(params_equal(a.best, b.best));
    CHECK(params_equal(a.final_params, b.final_params));
    CHECK(a.best_step == b.best_step);

    // the selection rule: maximum dev metric, earliest step on ties
    double best = -1.0;
    std::size_t best_step = 0;
    for (const auto& rec : a.log) {
        if (rec.dev_metric > best) {
            best = rec.dev_metric;
            best_step = rec.step;
        }
    }
    CHECK(a.best_dev_metric == doctest::Approx(best));
    CHECK(a.best_step == best_step);
    CHECK(a.log.front().step == 0);
    CHECK(a.log.back().step == tc.total_steps);
}

TEST_CASE("feedback training keeps the index frozen and is deterministic") {
    TrainWorld w = TrainWorld::make();
    const auto cfg = small_model(w.vocab.size());
    const auto base_tc = quick_config(6, 3);
    const auto baseline = train_baseline(cfg, base_tc, w.corpus, w.train_queries, w.dev_queries,
                                         w.qrels, w.vocab);

    const FlatIndex index = build_corpus_index(baseline.best, w.corpus, w.vocab, 1);
    const RunList fp_train = first_pass_run(w.train_queries, baseline.best, w.vocab, index, 20,
                                            "fp_train", 1);
    const RunList fp_dev = first_pass_run(w.dev_queries, baseline.best, w.vocab, index, 20,
                                          "fp_dev", 1);

    auto prf_tc = quick_config(6, 3);
    prf_tc.k = 2;
    const std::vector<float> index_before = index.matrix();
    const auto a = train_prf(baseline.best, prf_tc, index, w.corpus, w.train_queries,
                             w.dev_queries, w.qrels, w.vocab, fp_train, fp_dev);
    const auto b = train_prf(baseline.best, prf_tc, index, w.corpus, w.train_queries,
                             w.dev_queries, w.qrels, w.vocab, fp_train, fp_dev);

    CHECK(params_equal(a.best, b.best));
    CHECK(params_equal(a.final_params, b.final_params));
    CHECK(std::memcmp(index_before.data(), index.matrix().data(),
                      index_before.size() * sizeof(float)) == 0);

    // feedback-phase log carries the geometry and attention series
    CHECK(a.log.size() >= 3);
    for (const auto& rec : a.log) {
        REQUIRE(rec.geometry.has_value());
        REQUIRE(rec.attention.has_value());
        CHECK(std::isfinite(rec.geometry->dot_query));
        CHECK(rec.attention->separation_total > 0);
    }
}
