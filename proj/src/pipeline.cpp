#include "dprf/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "dprf/analysis.hpp"
#include "dprf/bm25.hpp"
#include "dprf/metrics.hpp"
#include "dprf/stats.hpp"
#include "json.hpp"

namespace dprf {

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

nlohmann::json report_json(const MetricReport& report) {
    return {{"metric", report.metric},
            {"mean", report.mean},
            {"evaluated", report.evaluated},
            {"excluded", report.excluded}};
}

}  // namespace

std::string run_pipeline(const RunConfig& config, std::ostream& progress) {
    const std::string hash = config_hash(config);
    const fs::path out(config.out_dir);
    for (const char* sub : {"data", "ckpt", "index", "runs", "logs", "eval", "analysis"})
        fs::create_directories(out / sub);

    write_text(out / "config.resolved.cfg", serialize_run_config(config));
    nlohmann::json meta{{"config_hash", hash}, {"tool", "dprf"}};
    write_text(out / "meta.json", meta.dump(2) + "\n");
    auto tag = [&](const std::string& name) { return "dprf_" + name + "_cfg" + hash.substr(0, 8); };

    progress << "[pipeline] config hash " << hash << "\n";

    progress << "[pipeline] generating synthetic benchmark\n";
    const SyntheticData data = generate_synthetic(config.synthetic);
    write_synthetic(data, (out / "data").string());

    progress << "[pipeline] building vocabulary\n";
    std::vector<std::string> corpus_texts;
    corpus_texts.reserve(data.corpus.size());
    for (const auto& doc : data.corpus) corpus_texts.push_back(doc.text);
    const Vocabulary vocab = build_vocab(corpus_texts, config.vocab_min_count);
    vocab.save((out / "vocab.txt").string());

    EncoderConfig model = config.model;
    model.vocab_size = vocab.size();
    model.validate();

    progress << "[pipeline] training baseline dual encoder (" << config.baseline_train.total_steps
             << " steps)\n";
    const TrainResult baseline = train_baseline(model, config.baseline_train, data.corpus,
                                                data.train_queries, data.dev_queries, data.qrels,
                                                vocab, (out / "logs" / "train_baseline.jsonl").string());
    progress << "[pipeline] baseline best dev MRR@10 " << fmt(baseline.best_dev_metric)
             << " at step " << baseline.best_step << "\n";
    save_checkpoint(baseline.best, (out / "ckpt" / "baseline.ckpt").string(),
                    {{"phase", "baseline"},
                     {"step", std::to_string(baseline.best_step)},
                     {"config_hash", hash}});

    progress << "[pipeline] building document index\n";
    const FlatIndex index = build_corpus_index(baseline.best, data.corpus, vocab, config.threads);
    index.save((out / "index" / "docs.idx").string());
    nlohmann::json index_meta{{"config_hash", hash}, {"docs", index.size()}, {"dim", index.dim()}};
    write_text(out / "index" / "docs.idx.meta.json", index_meta.dump(2) + "\n");

    progress << "[pipeline] first-pass retrieval\n";
    const std::size_t depth = config.retrieval.first_pass_depth;
    const RunList fp_train = first_pass_run(data.train_queries, baseline.best, vocab, index, depth,
                                            tag("baseline_train"), config.threads);
    const RunList fp_dev = first_pass_run(data.dev_queries, baseline.best, vocab, index, depth,
                                          tag("baseline_dev"), config.threads);
    const RunList fp_test = first_pass_run(data.test_queries, baseline.best, vocab, index, depth,
                                           tag("baseline_test"), config.threads);
    write_run(fp_train, (out / "runs" / "baseline_train.trec").string());
    write_run(fp_dev, (out / "runs" / "baseline_dev.trec").string());
    write_run(fp_test, (out / "runs" / "baseline_test.trec").string());

    progress << "[pipeline] bm25 baseline\n";
    const Bm25Stats bm25 = Bm25Stats::build(data.corpus);
    const RunList bm25_test = bm25.rank(data.test_queries, config.retrieval.final_depth, {},
                                        tag("bm25_test"));
    write_run(bm25_test, (out / "runs" / "bm25_test.trec").string());

    const DocTokens doc_tokens(data.corpus, vocab);
    std::map<std::size_t, TrainResult> prf_results;
    std::map<std::size_t, RunList> prf_test_runs;
    for (const std::size_t k : config.prf_ks) {
        TrainConfig prf_config = config.prf_train;
        prf_config.k = k;
        progress << "[pipeline] training feedback encoder k=" << k << " ("
                 << prf_config.total_steps << " steps)\n";
        TrainResult result = train_prf(
            baseline.best, prf_config, index, data.corpus, data.train_queries, data.dev_queries,
            data.qrels, vocab, fp_train, fp_dev,
            (out / "logs" / ("train_prf_k" + std::to_string(k) + ".jsonl")).string());
        progress << "[pipeline] prf k=" << k << " best dev MRR@10 " << fmt(result.best_dev_metric)
                 << " at step " << result.best_step << "\n";
        save_checkpoint(result.best,
                        (out / "ckpt" / ("prf_k" + std::to_string(k) + ".ckpt")).string(),
                        {{"phase", "prf"},
                         {"prf_k", std::to_string(k)},
                         {"step", std::to_string(result.best_step)},
                         {"config_hash", hash}});

        PrfConfig rc = config.retrieval;
        rc.k = k;
        RunList run = prf_run(data.test_queries, result.best, baseline.best, vocab, index,
                              doc_tokens, rc, tag("prf_k" + std::to_string(k) + "_test"),
                              config.threads);
        write_run(run, (out / "runs" / ("prf_k" + std::to_string(k) + "_test.trec")).string());
        prf_test_runs.emplace(k, std::move(run));
        prf_results.emplace(k, std::move(result));
    }

    progress << "[pipeline] evaluating\n";
    nlohmann::json metrics{{"config_hash", hash}};
    auto eval_run = [&](const std::string& name, const RunList& run) {
        nlohmann::json entry;
        entry["mrr@10"] = report_json(mrr_at(run, data.qrels));
        entry["ndcg@10"] = report_json(ndcg_at(run, data.qrels));
        entry["recall@1000"] =
            report_json(recall_at(run, data.qrels, config.retrieval.final_depth));
        entry["hole@10"] = report_json(hole_at(run, data.qrels));
        metrics["runs"][name] = entry;
    };
    eval_run("baseline_test", fp_test);
    eval_run("bm25_test", bm25_test);
    for (const auto& [k, run] : prf_test_runs) eval_run("prf_k" + std::to_string(k) + "_test", run);
    write_text(out / "eval" / "metrics.json", metrics.dump(2) + "\n");

    // Significance of the deepest feedback run against the baseline.
    nlohmann::json significance{{"config_hash", hash}};
    if (!prf_test_runs.empty()) {
        const std::size_t k_max = prf_test_runs.rbegin()->first;
        const RunList& prf_best = prf_test_runs.rbegin()->second;
        for (const char* metric_name : {"ndcg@10", "mrr@10"}) {
            const MetricSpec spec = MetricSpec::parse(metric_name);
            const MetricReport a = evaluate_metric(spec, prf_best, data.qrels);
            const MetricReport b = evaluate_metric(spec, fp_test, data.qrels);
            std::vector<double> va, vb;
            for (const auto& [qid, v] : a.per_query) {
                if (auto w = b.value_for(qid)) {
                    va.push_back(v);
                    vb.push_back(*w);
                }
            }
            const TTestResult t = paired_t_test(va, vb);
            const DiffReport diff = per_query_diff(prf_best, fp_test, data.qrels, spec);
            significance["prf_k" + std::to_string(k_max) + "_vs_baseline"][metric_name] = {
                {"t", t.t},           {"p", t.p},       {"df", t.df},
                {"significant", t.significant_at_05},  {"wins", diff.wins},
                {"losses", diff.losses},               {"ties", diff.ties}};
        }
    }
    write_text(out / "eval" / "significance.json", significance.dump(2) + "\n");

    progress << "[pipeline] depth ablation\n";
    std::map<std::size_t, const EncoderParams*> prf_encoders;
    for (const auto& [k, result] : prf_results) prf_encoders[k] = &result.best;
    const auto ablation = depth_ablation(baseline.best, prf_encoders, data.test_queries,
                                         data.qrels, vocab, index, doc_tokens, config.retrieval,
                                         config.threads);
    write_ablation_csv(ablation, (out / "eval" / "ablation.csv").string(),
                       "config_hash=" + hash);

    progress << "[pipeline] analysis records\n";
    if (!prf_results.empty()) {
        const std::size_t k_max = prf_results.rbegin()->first;
        const TrainResult& result = prf_results.rbegin()->second;
        const GeometryContext test_ctx =
            make_geometry_context(data.test_queries, baseline.best, vocab, doc_tokens, fp_test,
                                  index, data.qrels, k_max, config.threads);

        std::ostringstream attention_lines;
        attention_lines << nlohmann::json{{"record", "header"}, {"config_hash", hash},
                                          {"k", k_max}}.dump()
                        << '\n';
        const GroupAttentionSummary summary =
            summarize_group_attention(result.best, test_ctx, config.threads);
        nlohmann::json srec{{"record", "summary"},
                            {"attn_query", summary.query_mean},
                            {"attn_relevant", summary.relevant_mean},
                            {"attn_irrelevant", summary.irrelevant_mean},
                            {"attn_all_docs", summary.all_docs_mean},
                            {"separation_wins", summary.separation_wins},
                            {"separation_total", summary.separation_total}};
        attention_lines << srec.dump() << '\n';
        for (std::size_t i = 0; i < test_ctx.queries.size(); ++i) {
            const auto attn = cls_attention(result.best, test_ctx.prf_inputs[i]);
            std::vector<DocGrade> grades;
            for (const auto& doc_id : test_ctx.feedback_ids[i]) {
                if (data.qrels.judged(test_ctx.queries[i].query_id, doc_id))
                    grades.push_back({data.qrels.grade(test_ctx.queries[i].query_id, doc_id)});
                else
                    grades.push_back({std::nullopt});
            }
            const GroupAttention ga =
                group_attention(attn, test_ctx.prf_inputs[i], grades, test_ctx.rel_threshold);
            nlohmann::json qrec{{"record", "query"},
                                {"query_id", test_ctx.queries[i].query_id},
                                {"query_mean", ga.query.mean()},
                                {"relevant_mean", ga.relevant_docs.mean()},
                                {"irrelevant_mean", ga.irrelevant_docs.mean()},
                                {"all_docs_mean", ga.all_docs.mean()},
                                {"total_mass", ga.total_mass}};
            attention_lines << qrec.dump() << '\n';
        }
        write_text(out / "analysis" / "attention.jsonl", attention_lines.str());

        // Geometry series over training, from the train log.
        std::ostringstream geometry_csv;
        geometry_csv << "# config_hash=" << hash << '\n'
                     << "step,dot_query,dot_relevant,dot_irrelevant\n";
        for (const auto& rec : result.log)
            if (rec.geometry)
                geometry_csv << rec.step << ',' << fmt(rec.geometry->dot_query) << ','
                             << fmt(rec.geometry->dot_relevant) << ','
                             << fmt(rec.geometry->dot_irrelevant) << '\n';
        write_text(out / "analysis" / "geometry.csv", geometry_csv.str());

        // Term-highlight rendering for the first test query.
        if (!test_ctx.queries.empty()) {
            const auto attn = cls_attention(result.best, test_ctx.prf_inputs[0]);
            const auto tokens = highlight_terms(test_ctx.prf_inputs[0], attn, vocab);
            const std::string title = "query " + test_ctx.queries[0].query_id + " (cfg " +
                                      hash.substr(0, 8) + ")";
            write_highlight_html(
                tokens, title,
                (out / "analysis" / ("highlight_" + test_ctx.queries[0].query_id + ".html")).string());
            std::ostringstream hl;
            for (const auto& tok : tokens)
                hl << nlohmann::json{{"token", tok.token}, {"weight", tok.weight},
                                     {"role", tok.role}}.dump()
                   << '\n';
            write_text(out / "analysis" /
                           ("highlight_" + test_ctx.queries[0].query_id + ".jsonl"),
                       hl.str());
        }
    }

    // Summary table, one row per system.
    std::ostringstream summary;
    summary << "config " << hash << "\n";
    summary << "system          mrr@10   ndcg@10  r@1k     hole@10  avg_rel@k\n";
    for (const auto& row : ablation) {
        summary << row.label;
        for (std::size_t pad = row.label.size(); pad < 16; ++pad) summary << ' ';
        summary << fmt(row.mrr10) << "   " << fmt(row.ndcg10) << "   " << fmt(row.recall1k)
                << "   " << fmt(row.hole10) << "   "
                << (row.avg_rel_at_k ? fmt(*row.avg_rel_at_k) : std::string("-")) << "\n";
    }
    {
        const MetricReport bm25_mrr = mrr_at(bm25_test, data.qrels);
        const MetricReport bm25_ndcg = ndcg_at(bm25_test, data.qrels);
        const MetricReport bm25_recall = recall_at(bm25_test, data.qrels,
                                                   config.retrieval.final_depth);
        const MetricReport bm25_hole = hole_at(bm25_test, data.qrels);
        summary << "bm25            " << fmt(bm25_mrr.mean) << "   " << fmt(bm25_ndcg.mean)
                << "   " << fmt(bm25_recall.mean) << "   " << fmt(bm25_hole.mean) << "   -\n";
    }
    const std::string summary_text = summary.str();
    write_text(out / "eval" / "summary.txt", summary_text);
    progress << summary_text;
    return summary_text;
}

}  // namespace dprf
