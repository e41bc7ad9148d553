// dprf — dense retrieval with a trainable pseudo-relevance-feedback query
// encoder. Subcommands cover the full workflow: gen-synthetic, build-vocab,
// train, build-index, retrieve, evaluate, significance, analyze, ablate and
// pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dprf/analysis.hpp"
#include "dprf/bm25.hpp"
#include "dprf/metrics.hpp"
#include "dprf/pipeline.hpp"
#include "dprf/stats.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonPaths {
    std::string config_path;
    dprf::RunConfig config;
    std::string hash;

    void load() {
        config = dprf::load_run_config(config_path);
        hash = dprf::config_hash(config);
    }
    fs::path out() const { return fs::path(config.out_dir); }
};

dprf::Vocabulary load_vocab_or_die(const std::string& path) {
    return dprf::Vocabulary::load(path);
}

std::vector<dprf::QueryRecord> queries_from(const std::string& path) {
    return dprf::load_queries(path);
}

void print_report(const dprf::MetricReport& report, bool per_query) {
    std::cout << report.metric << "\tmean=" << report.mean << "\tevaluated="
              << report.evaluated << "\texcluded=" << report.excluded << "\n";
    if (per_query)
        for (const auto& [qid, v] : report.per_query)
            std::cout << "  " << qid << '\t' << v << '\n';
}

int run_train(const CommonPaths& paths, const std::string& phase, int k_override) {
    const auto& config = paths.config;
    const fs::path out = paths.out();
    const auto data_dir = out / "data";
    const auto corpus = dprf::load_corpus((data_dir / "corpus.tsv").string());
    const auto train_queries = queries_from((data_dir / "queries_train.tsv").string());
    const auto dev_queries = queries_from((data_dir / "queries_dev.tsv").string());
    const auto qrels = dprf::load_qrels((data_dir / "qrels.txt").string());
    const auto vocab = load_vocab_or_die((out / "vocab.txt").string());

    dprf::EncoderConfig model = config.model;
    model.vocab_size = vocab.size();
    model.validate();
    fs::create_directories(out / "ckpt");
    fs::create_directories(out / "logs");

    if (phase == "baseline") {
        const auto result = dprf::train_baseline(model, config.baseline_train, corpus,
                                                 train_queries, dev_queries, qrels, vocab,
                                                 (out / "logs" / "train_baseline.jsonl").string());
        dprf::save_checkpoint(result.best, (out / "ckpt" / "baseline.ckpt").string(),
                              {{"phase", "baseline"},
                               {"step", std::to_string(result.best_step)},
                               {"config_hash", paths.hash}});
        std::cout << "baseline best dev MRR@10 " << result.best_dev_metric << " at step "
                  << result.best_step << "\n";
        return 0;
    }

    dprf::TrainConfig prf_config = config.prf_train;
    if (k_override >= 0) prf_config.k = static_cast<std::size_t>(k_override);
    const auto baseline = dprf::load_checkpoint((out / "ckpt" / "baseline.ckpt").string());
    const auto index = dprf::FlatIndex::load((out / "index" / "docs.idx").string());

    // First-pass runs for train and dev splits; computed here when the
    // pipeline has not produced them yet.
    const auto run_path = [&](const char* split) {
        return out / "runs" / ("baseline_" + std::string(split) + ".trec");
    };
    dprf::RunList fp_train, fp_dev;
    if (fs::exists(run_path("train")) && fs::exists(run_path("dev"))) {
        fp_train = dprf::read_run(run_path("train").string());
        fp_dev = dprf::read_run(run_path("dev").string());
    } else {
        fp_train = dprf::first_pass_run(train_queries, baseline, vocab, index,
                                        config.retrieval.first_pass_depth, "baseline_train",
                                        config.threads);
        fp_dev = dprf::first_pass_run(dev_queries, baseline, vocab, index,
                                      config.retrieval.first_pass_depth, "baseline_dev",
                                      config.threads);
    }

    const auto result = dprf::train_prf(
        baseline, prf_config, index, corpus, train_queries, dev_queries, qrels, vocab, fp_train,
        fp_dev, (out / "logs" / ("train_prf_k" + std::to_string(prf_config.k) + ".jsonl")).string());
    dprf::save_checkpoint(result.best,
                          (out / "ckpt" / ("prf_k" + std::to_string(prf_config.k) + ".ckpt")).string(),
                          {{"phase", "prf"},
                           {"prf_k", std::to_string(prf_config.k)},
                           {"step", std::to_string(result.best_step)},
                           {"config_hash", paths.hash}});
    std::cout << "prf k=" << prf_config.k << " best dev MRR@10 " << result.best_dev_metric
              << " at step " << result.best_step << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dense retrieval toolkit with feedback-refined query encoding"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "max worker threads")->capture_default_str();

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "generate the seeded synthetic benchmark");
    std::string gen_spec, gen_out;
    gen->add_option("--spec,--config", gen_spec, "run config file")->required();
    gen->add_option("--out", gen_out, "output directory (default <out_dir>/data)");

    // build-vocab
    auto* bv = app.add_subcommand("build-vocab", "build a corpus vocabulary");
    std::string bv_corpus, bv_out;
    std::size_t bv_min_count = 1;
    bv->add_option("--corpus", bv_corpus, "corpus tsv")->required();
    bv->add_option("--min-count", bv_min_count, "frequency threshold")->capture_default_str();
    bv->add_option("--out", bv_out, "vocabulary output path")->required();

    // build-index
    auto* bi = app.add_subcommand("build-index", "encode a corpus into a flat index");
    std::string bi_corpus, bi_encoder, bi_vocab, bi_out;
    bi->add_option("--corpus", bi_corpus, "corpus tsv")->required();
    bi->add_option("--encoder", bi_encoder, "encoder checkpoint")->required();
    bi->add_option("--vocab", bi_vocab, "vocabulary file")->required();
    bi->add_option("--out", bi_out, "index output path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train the baseline or the feedback encoder");
    std::string tr_config, tr_phase;
    int tr_k = -1;
    tr->add_option("--config", tr_config, "run config file")->required();
    tr->add_option("--phase", tr_phase, "baseline|prf")
        ->required()
        ->check(CLI::IsMember({"baseline", "prf"}));
    tr->add_option("--k", tr_k, "feedback depth override (prf phase)");

    // retrieve
    auto* re = app.add_subcommand("retrieve", "produce a TREC run");
    std::string re_mode, re_queries, re_index, re_encoder, re_prf_encoder, re_corpus, re_vocab,
        re_out, re_tag = "dprf";
    std::size_t re_k = 3, re_depth = 1000, re_first_depth = 1000;
    re->add_option("--mode", re_mode, "baseline|prf|bm25")
        ->required()
        ->check(CLI::IsMember({"baseline", "prf", "bm25"}));
    re->add_option("--queries", re_queries, "queries tsv")->required();
    re->add_option("--out", re_out, "run output path")->required();
    re->add_option("--index", re_index, "flat index path");
    re->add_option("--encoder", re_encoder, "baseline encoder checkpoint");
    re->add_option("--prf-encoder", re_prf_encoder, "feedback encoder checkpoint");
    re->add_option("--corpus", re_corpus, "corpus tsv (prf/bm25 modes)");
    re->add_option("--vocab", re_vocab, "vocabulary file");
    re->add_option("--k", re_k, "feedback depth")->capture_default_str();
    re->add_option("--depth", re_depth, "final run depth")->capture_default_str();
    re->add_option("--first-pass-depth", re_first_depth, "first pass depth")
        ->capture_default_str();
    re->add_option("--tag", re_tag, "run tag")->capture_default_str();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a run against qrels");
    std::string ev_run, ev_qrels, ev_metrics = "mrr@10,ndcg@10,recall@1000,hole@10";
    bool ev_per_query = false;
    ev->add_option("--run", ev_run, "run file")->required();
    ev->add_option("--qrels", ev_qrels, "qrels file")->required();
    ev->add_option("--metrics", ev_metrics, "comma-separated metric list")
        ->capture_default_str();
    ev->add_flag("--per-query", ev_per_query, "print per-query values");

    // significance
    auto* sig = app.add_subcommand("significance", "paired t-test between two runs");
    std::string sig_a, sig_b, sig_qrels, sig_metric = "ndcg@10";
    sig->add_option("--run-a", sig_a, "run A")->required();
    sig->add_option("--run-b", sig_b, "run B")->required();
    sig->add_option("--qrels", sig_qrels, "qrels file")->required();
    sig->add_option("--metric", sig_metric, "per-query metric")->capture_default_str();

    // analyze
    auto* an = app.add_subcommand("analyze", "attention/geometry/highlight/ablate studies");
    an->require_subcommand(1);
    std::string an_baseline, an_prf, an_index, an_vocab, an_corpus, an_queries, an_qrels, an_out,
        an_query_id;
    std::size_t an_k = 3, an_first_depth = 1000;
    std::vector<std::string> an_checkpoints;
    for (auto* sub : {an->add_subcommand("attention", "per-query group attention records"),
                      an->add_subcommand("geometry", "embedding dot products per checkpoint"),
                      an->add_subcommand("highlight", "attention-weighted term highlighting")}) {
        sub->add_option("--baseline", an_baseline, "baseline encoder checkpoint")->required();
        sub->add_option("--index", an_index, "flat index path")->required();
        sub->add_option("--vocab", an_vocab, "vocabulary file")->required();
        sub->add_option("--corpus", an_corpus, "corpus tsv")->required();
        sub->add_option("--queries", an_queries, "queries tsv")->required();
        sub->add_option("--qrels", an_qrels, "qrels file")->required();
        sub->add_option("--k", an_k, "feedback depth")->capture_default_str();
        sub->add_option("--first-pass-depth", an_first_depth, "first pass depth")
            ->capture_default_str();
        sub->add_option("--out", an_out, "output path")->required();
    }
    an->get_subcommand("attention")->add_option("--prf-encoder", an_prf, "feedback checkpoint")
        ->required();
    an->get_subcommand("highlight")->add_option("--prf-encoder", an_prf, "feedback checkpoint");
    an->get_subcommand("highlight")->add_option("--query-id", an_query_id,
                                                "query to render (default: first)");
    an->get_subcommand("geometry")
        ->add_option("--checkpoints", an_checkpoints, "checkpoint series")
        ->required()
        ->delimiter(',');

    // ablate (also reachable as `analyze ablate`)
    auto make_ablate = [&](CLI::App* parent, const char* name) {
        auto* ab = parent->add_subcommand(name, "accuracy per feedback depth");
        return ab;
    };
    auto* ab = make_ablate(&app, "ablate");
    auto* ab2 = make_ablate(an, "ablate");
    std::string ab_config;
    std::vector<std::size_t> ab_ks;
    for (auto* sub : {ab, ab2}) {
        sub->add_option("--config", ab_config, "run config file")->required();
        sub->add_option("--ks", ab_ks, "feedback depths (default: config prf_ks)")
            ->delimiter(',');
    }

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "run the full workflow");
    std::string pl_config, pl_out;
    pl->add_option("--config", pl_config, "run config file")->required();
    pl->add_option("--out", pl_out, "output directory override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            CommonPaths paths{gen_spec};
            paths.load();
            const auto data = dprf::generate_synthetic(paths.config.synthetic);
            const std::string dir =
                gen_out.empty() ? (paths.out() / "data").string() : gen_out;
            dprf::write_synthetic(data, dir);
            std::cout << "wrote " << data.corpus.size() << " docs, "
                      << data.train_queries.size() + data.dev_queries.size() +
                             data.test_queries.size()
                      << " queries to " << dir << "\n";
            return 0;
        }
        if (*bv) {
            const auto corpus = dprf::load_corpus(bv_corpus);
            std::vector<std::string> texts;
            texts.reserve(corpus.size());
            for (const auto& d : corpus) texts.push_back(d.text);
            const auto vocab = dprf::build_vocab(texts, bv_min_count);
            vocab.save(bv_out);
            std::cout << "vocabulary of " << vocab.size() << " tokens -> " << bv_out << "\n";
            return 0;
        }
        if (*bi) {
            const auto corpus = dprf::load_corpus(bi_corpus);
            const auto vocab = load_vocab_or_die(bi_vocab);
            const auto encoder = dprf::load_checkpoint(bi_encoder);
            const auto index = dprf::build_corpus_index(encoder, corpus, vocab, threads);
            index.save(bi_out);
            std::cout << "indexed " << index.size() << " docs (dim " << index.dim() << ") -> "
                      << bi_out << "\n";
            return 0;
        }
        if (*tr) {
            CommonPaths paths{tr_config};
            paths.load();
            if (threads > 1) paths.config.threads = threads;
            paths.config.finalize();
            return run_train(paths, tr_phase, tr_k);
        }
        if (*re) {
            const auto queries = queries_from(re_queries);
            dprf::RunList run;
            dprf::RetrievalCounters counters;
            if (re_mode == "bm25") {
                if (re_corpus.empty()) throw dprf::RetrievalError("bm25 mode needs --corpus");
                const auto corpus = dprf::load_corpus(re_corpus);
                run = dprf::Bm25Stats::build(corpus).rank(queries, re_depth, {}, re_tag);
            } else {
                if (re_index.empty() || re_vocab.empty() || re_encoder.empty())
                    throw dprf::RetrievalError("dense modes need --index, --vocab, --encoder");
                const auto index = dprf::FlatIndex::load(re_index);
                const auto vocab = load_vocab_or_die(re_vocab);
                const auto encoder = dprf::load_checkpoint(re_encoder);
                if (re_mode == "baseline") {
                    run = dprf::first_pass_run(queries, encoder, vocab, index, re_depth, re_tag,
                                               threads, &counters);
                } else {
                    if (re_prf_encoder.empty() || re_corpus.empty())
                        throw dprf::RetrievalError("prf mode needs --prf-encoder and --corpus");
                    std::map<std::string, std::string> extra;
                    const auto prf_encoder = dprf::load_checkpoint(re_prf_encoder, &extra);
                    std::string tag = re_tag;
                    if (auto it = extra.find("prf_k");
                        it != extra.end() && it->second != std::to_string(re_k))
                        tag += ".trained-k" + it->second;  // cross-k evaluation flag
                    const auto corpus = dprf::load_corpus(re_corpus);
                    const dprf::DocTokens doc_tokens(corpus, vocab);
                    dprf::PrfConfig config{re_k, re_first_depth, re_depth};
                    run = dprf::prf_run(queries, prf_encoder, encoder, vocab, index, doc_tokens,
                                        config, tag, threads, &counters);
                }
                std::cerr << "encoder calls: " << counters.encoder_calls
                          << ", index searches: " << counters.index_searches << "\n";
            }
            dprf::write_run(run, re_out);
            std::cout << "wrote run (" << run.entries.size() << " queries) -> " << re_out << "\n";
            return 0;
        }
        if (*ev) {
            const auto run = dprf::read_run(ev_run);
            const auto qrels = dprf::load_qrels(ev_qrels);
            std::istringstream ss(ev_metrics);
            std::string name;
            while (std::getline(ss, name, ',')) {
                const auto spec = dprf::MetricSpec::parse(name);
                print_report(dprf::evaluate_metric(spec, run, qrels), ev_per_query);
            }
            return 0;
        }
        if (*sig) {
            const auto run_a = dprf::read_run(sig_a);
            const auto run_b = dprf::read_run(sig_b);
            const auto qrels = dprf::load_qrels(sig_qrels);
            const auto spec = dprf::MetricSpec::parse(sig_metric);
            const auto a = evaluate_metric(spec, run_a, qrels);
            const auto b = evaluate_metric(spec, run_b, qrels);
            std::vector<double> va, vb;
            for (const auto& [qid, v] : a.per_query)
                if (auto w = b.value_for(qid)) {
                    va.push_back(v);
                    vb.push_back(*w);
                }
            const auto t = dprf::paired_t_test(va, vb);
            const auto diff = dprf::per_query_diff(run_a, run_b, qrels, spec);
            std::cout << sig_metric << ": t=" << t.t << " df=" << t.df << " p=" << t.p
                      << (t.significant_at_05 ? " (significant at 0.05)" : " (not significant)")
                      << "\nwins=" << diff.wins << " losses=" << diff.losses
                      << " ties=" << diff.ties << " over " << diff.deltas.size() << " queries\n";
            return 0;
        }
        if (*ab || (*an && *ab2)) {
            CommonPaths paths{ab_config};
            paths.load();
            const fs::path out = paths.out();
            const auto corpus = dprf::load_corpus((out / "data" / "corpus.tsv").string());
            const auto queries = queries_from((out / "data" / "queries_test.tsv").string());
            const auto qrels = dprf::load_qrels((out / "data" / "qrels.txt").string());
            const auto vocab = load_vocab_or_die((out / "vocab.txt").string());
            const auto baseline = dprf::load_checkpoint((out / "ckpt" / "baseline.ckpt").string());
            const auto index = dprf::FlatIndex::load((out / "index" / "docs.idx").string());
            const dprf::DocTokens doc_tokens(corpus, vocab);
            const auto ks = ab_ks.empty() ? paths.config.prf_ks : ab_ks;
            std::map<std::size_t, dprf::EncoderParams> loaded;
            std::map<std::size_t, const dprf::EncoderParams*> encoders;
            for (auto k : ks) {
                const auto path = out / "ckpt" / ("prf_k" + std::to_string(k) + ".ckpt");
                loaded.emplace(k, dprf::load_checkpoint(path.string()));
                encoders[k] = &loaded.at(k);
            }
            const auto rows =
                dprf::depth_ablation(baseline, encoders, queries, qrels, vocab, index, doc_tokens,
                                     paths.config.retrieval, threads);
            fs::create_directories(out / "eval");
            dprf::write_ablation_csv(rows, (out / "eval" / "ablation.csv").string(),
                                     "config_hash=" + paths.hash);
            for (const auto& row : rows)
                std::cout << row.label << "\tmrr@10=" << row.mrr10 << "\tndcg@10=" << row.ndcg10
                          << "\tr@1k=" << row.recall1k << "\thole@10=" << row.hole10 << "\n";
            return 0;
        }
        if (*an) {
            const auto corpus = dprf::load_corpus(an_corpus);
            const auto queries = queries_from(an_queries);
            const auto qrels = dprf::load_qrels(an_qrels);
            const auto vocab = load_vocab_or_die(an_vocab);
            const auto baseline = dprf::load_checkpoint(an_baseline);
            const auto index = dprf::FlatIndex::load(an_index);
            const dprf::DocTokens doc_tokens(corpus, vocab);
            const auto fp = dprf::first_pass_run(queries, baseline, vocab, index, an_first_depth,
                                                 "analyze", threads);
            const auto ctx = dprf::make_geometry_context(queries, baseline, vocab, doc_tokens, fp,
                                                         index, qrels, an_k, threads);
            if (*an->get_subcommand("geometry")) {
                const auto records = dprf::embedding_geometry(an_checkpoints, ctx, threads);
                std::ofstream outf(an_out, std::ios::trunc);
                outf << "step,dot_query,dot_relevant,dot_irrelevant\n";
                for (const auto& r : records)
                    outf << r.step << ',' << r.dot_query << ',' << r.dot_relevant << ','
                         << r.dot_irrelevant << '\n';
                std::cout << records.size() << " checkpoints -> " << an_out << "\n";
                return 0;
            }
            const auto prf_encoder = dprf::load_checkpoint(an_prf.empty() ? an_baseline : an_prf);
            if (*an->get_subcommand("attention")) {
                std::ofstream outf(an_out, std::ios::trunc);
                const auto summary = dprf::summarize_group_attention(prf_encoder, ctx, threads);
                outf << json{{"record", "summary"},
                             {"attn_query", summary.query_mean},
                             {"attn_relevant", summary.relevant_mean},
                             {"attn_irrelevant", summary.irrelevant_mean},
                             {"attn_all_docs", summary.all_docs_mean},
                             {"separation_wins", summary.separation_wins},
                             {"separation_total", summary.separation_total}}
                            .dump()
                     << '\n';
                for (std::size_t i = 0; i < ctx.queries.size(); ++i) {
                    const auto attn = dprf::cls_attention(prf_encoder, ctx.prf_inputs[i]);
                    std::vector<dprf::DocGrade> grades;
                    for (const auto& doc_id : ctx.feedback_ids[i])
                        grades.push_back(qrels.judged(ctx.queries[i].query_id, doc_id)
                                             ? dprf::DocGrade{qrels.grade(
                                                   ctx.queries[i].query_id, doc_id)}
                                             : dprf::DocGrade{std::nullopt});
                    const auto ga = dprf::group_attention(attn, ctx.prf_inputs[i], grades,
                                                          ctx.rel_threshold);
                    outf << json{{"record", "query"},
                                 {"query_id", ctx.queries[i].query_id},
                                 {"query_mean", ga.query.mean()},
                                 {"relevant_mean", ga.relevant_docs.mean()},
                                 {"irrelevant_mean", ga.irrelevant_docs.mean()},
                                 {"all_docs_mean", ga.all_docs.mean()}}
                                .dump()
                         << '\n';
                }
                std::cout << ctx.queries.size() << " queries -> " << an_out << "\n";
                return 0;
            }
            // highlight
            std::size_t qi = 0;
            if (!an_query_id.empty()) {
                for (std::size_t i = 0; i < ctx.queries.size(); ++i)
                    if (ctx.queries[i].query_id == an_query_id) qi = i;
            }
            const auto attn = dprf::cls_attention(prf_encoder, ctx.prf_inputs[qi]);
            const auto tokens = dprf::highlight_terms(ctx.prf_inputs[qi], attn, vocab);
            dprf::write_highlight_html(tokens, "query " + ctx.queries[qi].query_id, an_out);
            std::cout << "highlight for " << ctx.queries[qi].query_id << " -> " << an_out << "\n";
            return 0;
        }
        if (*pl) {
            CommonPaths paths{pl_config};
            paths.load();
            if (!pl_out.empty()) paths.config.out_dir = pl_out;
            if (threads > 1) paths.config.threads = threads;
            paths.config.finalize();
            dprf::run_pipeline(paths.config, std::cerr);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
