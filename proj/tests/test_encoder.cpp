#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dprf/encoder.hpp"
#include "dprf/rng.hpp"

using namespace dprf;

namespace {

using Rows = std::vector<std::vector<double>>;

// Straight-line reference of the documented forward pass: pre-layernorm,
// scaled dot-product attention, tanh feed-forward, final layernorm. Naive
// loops only; written independently of the production path.
struct ReferenceOut {
    std::vector<double> cls;
    Rows last_attn;            // [head][key position], CLS row of last layer
    std::vector<double> ctx0;  // last-layer CLS context before the output projection
};

Rows ref_layer_norm(const Rows& x, const Matrix& gamma, const Matrix& beta) {
    Rows out(x.size(), std::vector<double>(x[0].size()));
    for (std::size_t t = 0; t < x.size(); ++t) {
        const std::size_t d = x[t].size();
        double mean = 0.0;
        for (double v : x[t]) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : x[t]) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j)
            out[t][j] = gamma.data[j] * (x[t][j] - mean) / std::sqrt(var + 1e-5) + beta.data[j];
    }
    return out;
}

Rows ref_affine(const Rows& x, const Matrix& w, const Matrix& b) {
    Rows out(x.size(), std::vector<double>(w.cols, 0.0));
    for (std::size_t t = 0; t < x.size(); ++t)
        for (std::size_t j = 0; j < w.cols; ++j) {
            double acc = b.data[j];
            for (std::size_t i = 0; i < w.rows; ++i) acc += x[t][i] * w.at(i, j);
            out[t][j] = acc;
        }
    return out;
}

ReferenceOut reference_encode(const EncoderParams& p, const std::vector<int>& ids) {
    const auto& cfg = p.config;
    const std::size_t t_len = ids.size(), d = cfg.model_dim, h = cfg.num_heads;
    const std::size_t dh = d / h;

    Rows x(t_len, std::vector<double>(d));
    for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t j = 0; j < d; ++j)
            x[t][j] = p.token_embedding.at(static_cast<std::size_t>(ids[t]), j) +
                      p.position_embedding.at(t, j);

    ReferenceOut out;
    for (std::size_t li = 0; li < cfg.num_layers; ++li) {
        const auto& lp = p.layers[li];
        const Rows a = ref_layer_norm(x, lp.ln1_gamma, lp.ln1_beta);
        const Rows q = ref_affine(a, lp.wq, lp.bq);
        const Rows k = ref_affine(a, lp.wk, lp.bk);
        const Rows v = ref_affine(a, lp.wv, lp.bv);

        Rows ctx(t_len, std::vector<double>(d, 0.0));
        Rows cls_attn(h);
        for (std::size_t hi = 0; hi < h; ++hi) {
            for (std::size_t t = 0; t < t_len; ++t) {
                std::vector<double> scores(t_len);
                for (std::size_t u = 0; u < t_len; ++u) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < dh; ++j)
                        acc += q[t][hi * dh + j] * k[u][hi * dh + j];
                    scores[u] = acc / std::sqrt(static_cast<double>(dh));
                }
                double mx = scores[0];
                for (double s : scores) mx = std::max(mx, s);
                double z = 0.0;
                for (double& s : scores) {
                    s = std::exp(s - mx);
                    z += s;
                }
                for (double& s : scores) s /= z;
                if (t == 0 && li == cfg.num_layers - 1) cls_attn[hi] = scores;
                for (std::size_t u = 0; u < t_len; ++u)
                    for (std::size_t j = 0; j < dh; ++j)
                        ctx[t][hi * dh + j] += scores[u] * v[u][hi * dh + j];
            }
        }
        if (li == cfg.num_layers - 1) {
            out.last_attn = cls_attn;
            out.ctx0 = ctx[0];
        }
        const Rows attn_out = ref_affine(ctx, lp.wo, lp.bo);
        for (std::size_t t = 0; t < t_len; ++t)
            for (std::size_t j = 0; j < d; ++j) x[t][j] += attn_out[t][j];

        const Rows b = ref_layer_norm(x, lp.ln2_gamma, lp.ln2_beta);
        Rows u = ref_affine(b, lp.ff_w1, lp.ff_b1);
        for (auto& row : u)
            for (double& val : row) val = std::tanh(val);
        const Rows ff = ref_affine(u, lp.ff_w2, lp.ff_b2);
        for (std::size_t t = 0; t < t_len; ++t)
            for (std::size_t j = 0; j < d; ++j) x[t][j] += ff[t][j];
    }
    out.cls = ref_layer_norm(x, p.final_gamma, p.final_beta)[0];
    return out;
}

EncoderConfig tiny_config(std::size_t vocab_size = 24) {
    EncoderConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.model_dim = 8;
    cfg.ff_dim = 16;
    cfg.max_len = 16;
    cfg.vocab_size = vocab_size;
    cfg.query_budget = 6;
    return cfg;
}

TokenSequence seq_of(std::vector<int> ids, std::size_t padded_len) {
    TokenSequence seq;
    seq.ids = std::move(ids);
    seq.mask.assign(seq.ids.size(), 1);
    while (seq.ids.size() < padded_len) {
        seq.ids.push_back(Vocabulary::kPad);
        seq.mask.push_back(0);
    }
    return seq;
}

}  // namespace

TEST_CASE("encode is deterministic") {
    const auto params = init_params(tiny_config(), 3);
    const auto seq = seq_of({Vocabulary::kCls, 5, 6, Vocabulary::kSep}, 8);
    const auto a = encode(params, seq);
    const auto b = encode(params, seq);
    CHECK(a == b);  // bitwise
}

TEST_CASE("padding amount does not change the embedding") {
    const auto params = init_params(tiny_config(), 4);
    const std::vector<int> real{Vocabulary::kCls, 7, 9, 4, Vocabulary::kSep};
    const auto short_pad = encode(params, seq_of(real, 6));
    const auto long_pad = encode(params, seq_of(real, 16));
    const auto no_pad = encode(params, seq_of(real, 5));
    REQUIRE(short_pad.size() == long_pad.size());
    for (std::size_t j = 0; j < short_pad.size(); ++j) {
        CHECK(short_pad[j] == doctest::Approx(long_pad[j]).epsilon(1e-9));
        CHECK(short_pad[j] == doctest::Approx(no_pad[j]).epsilon(1e-9));
    }
}

TEST_CASE("tiny model matches the straight-line reference") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto params = init_params(tiny_config(), seed);
        const std::vector<int> ids{Vocabulary::kCls, 10, 11, Vocabulary::kSep};
        const auto got = encode(params, seq_of(ids, 16));
        const auto want = reference_encode(params, ids);
        REQUIRE(got.size() == want.cls.size());
        for (std::size_t j = 0; j < got.size(); ++j)
            CHECK(got[j] == doctest::Approx(want.cls[j]).epsilon(1e-9));
    }

    auto cfg = tiny_config();
    cfg.num_layers = 2;
    const auto params = init_params(cfg, 8);
    const std::vector<int> ids{Vocabulary::kCls, 12, 13, 14, 15, Vocabulary::kSep};
    const auto got = encode(params, seq_of(ids, 16));
    const auto want = reference_encode(params, ids);
    for (std::size_t j = 0; j < got.size(); ++j)
        CHECK(got[j] == doctest::Approx(want.cls[j]).epsilon(1e-9));
}

TEST_CASE("cls attention sums to the head count and matches the reference") {
    Rng seeds(17);
    for (int trial = 0; trial < 20; ++trial) {
        auto cfg = tiny_config();
        cfg.num_layers = 1 + static_cast<std::size_t>(seeds.below(2));
        const auto params = init_params(cfg, seeds.next_u64());
        std::vector<int> ids{Vocabulary::kCls};
        const std::size_t extra = 1 + static_cast<std::size_t>(seeds.below(10));
        for (std::size_t i = 0; i < extra; ++i)
            ids.push_back(4 + static_cast<int>(seeds.below(cfg.vocab_size - 4)));
        ids.push_back(Vocabulary::kSep);

        const auto seq = seq_of(ids, cfg.max_len);
        const auto rec = cls_attention(params, seq);
        REQUIRE(rec.values.size() == cfg.max_len);

        double sum = 0.0;
        for (std::size_t j = 0; j < ids.size(); ++j) sum += rec.values[j];
        CHECK(sum == doctest::Approx(static_cast<double>(cfg.num_heads)).epsilon(1e-9));
        for (std::size_t j = ids.size(); j < cfg.max_len; ++j) CHECK(rec.values[j] == 0.0);

        const auto want = reference_encode(params, ids);
        for (std::size_t j = 0; j < ids.size(); ++j) {
            double expect = 0.0;
            for (std::size_t h = 0; h < cfg.num_heads; ++h) expect += want.last_attn[h][j];
            CHECK(rec.values[j] == doctest::Approx(expect).epsilon(1e-9));
        }
    }
}

TEST_CASE("zero key projection gives uniform attention") {
    auto params = init_params(tiny_config(), 5);
    for (auto& layer : params.layers) {
        layer.wk.fill(0.0);
        layer.bk.fill(0.0);
    }
    const std::vector<int> ids{Vocabulary::kCls, 6, 7, 8, Vocabulary::kSep};
    const auto rec = cls_attention(params, seq_of(ids, 12));
    const double expected = static_cast<double>(params.config.num_heads) /
                            static_cast<double>(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j)
        CHECK(rec.values[j] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("attention rows reconstruct the pre-projection context") {
    const auto params = init_params(tiny_config(), 21);
    const std::vector<int> ids{Vocabulary::kCls, 4, 5, 6, 7, Vocabulary::kSep};
    const auto fwd = encode_forward(params, seq_of(ids, 16));
    const auto& last = fwd.layers.back();
    const std::size_t dh = params.config.head_dim();

    for (std::size_t h = 0; h < params.config.num_heads; ++h) {
        for (std::size_t j = 0; j < dh; ++j) {
            double acc = 0.0;
            for (std::size_t u = 0; u < fwd.seq_len; ++u)
                acc += last.attn[h].at(0, u) * last.v.at(u, h * dh + j);
            CHECK(acc == doctest::Approx(last.ctx.at(0, h * dh + j)).epsilon(1e-9));
        }
    }
    for (std::size_t h = 0; h < params.config.num_heads; ++h) {
        for (std::size_t t = 0; t < fwd.seq_len; ++t) {
            double sum = 0.0;
            for (std::size_t u = 0; u < fwd.seq_len; ++u) {
                CHECK(last.attn[h].at(t, u) >= 0.0);
                sum += last.attn[h].at(t, u);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("k=0 feedback input encodes bit-identically to the query input") {
    auto cfg = tiny_config();
    const auto params = init_params(cfg, 33);
    const std::vector<int> query{5, 9, 13};
    const auto prf = build_prf_input(query, {}, cfg.budget());
    const auto plain = build_query_input(query, cfg.budget());
    const auto a = encode(params, prf);
    const auto b = encode(params, plain);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("input validation") {
    auto cfg = tiny_config();
    const auto params = init_params(cfg, 1);

    TokenSequence no_cls = seq_of({5, 6}, 8);
    CHECK_THROWS_AS(encode(params, no_cls), EncoderError);

    TokenSequence too_long = seq_of(std::vector<int>(cfg.max_len + 1, Vocabulary::kCls),
                                    cfg.max_len + 1);
    CHECK_THROWS_AS(encode(params, too_long), EncoderError);

    TokenSequence bad_id = seq_of({Vocabulary::kCls, static_cast<int>(cfg.vocab_size)}, 8);
    CHECK_THROWS_AS(encode(params, bad_id), EncoderError);

    TokenSequence empty;
    CHECK_THROWS_AS(encode(params, empty), EncoderError);

    TokenSequence gap = seq_of({Vocabulary::kCls, 5, 6, Vocabulary::kSep}, 8);
    gap.mask[2] = 0;
    CHECK_THROWS_AS(encode(params, gap), EncoderError);
}

TEST_CASE("config validation") {
    auto cfg = tiny_config();
    cfg.model_dim = 9;  // not divisible by 2 heads
    CHECK_THROWS_AS(cfg.validate(), EncoderError);
    cfg = tiny_config();
    cfg.vocab_size = 0;
    CHECK_THROWS_AS(cfg.validate(), EncoderError);
    cfg = tiny_config();
    cfg.query_budget = cfg.max_len;
    CHECK_THROWS_AS(cfg.validate(), EncoderError);
}

TEST_CASE("checkpoint round trip is bitwise and rejects corruption") {
    auto cfg = tiny_config();
    cfg.num_layers = 2;
    const auto params = init_params(cfg, 77);
    const auto path = std::filesystem::temp_directory_path() / "dprf_ckpt_test.bin";
    save_checkpoint(params, path.string(), {{"phase", "prf"}, {"prf_k", "3"}, {"step", "120"}});

    std::map<std::string, std::string> extra;
    const auto loaded = load_checkpoint(path.string(), &extra);
    CHECK(loaded.config == params.config);
    CHECK(extra.at("phase") == "prf");
    CHECK(extra.at("prf_k") == "3");
    CHECK(extra.at("step") == "120");

    const auto a = tensor_list(params);
    const auto b = tensor_list(loaded);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i]->data.size() == b[i]->data.size());
        CHECK(std::memcmp(a[i]->data.data(), b[i]->data.data(),
                          a[i]->data.size() * sizeof(double)) == 0);
    }

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
    std::ofstream outf(path, std::ios::binary | std::ios::trunc);
    outf.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    outf.close();
    CHECK_THROWS_AS(load_checkpoint(path.string()), EncoderError);
    std::filesystem::remove(path);
}

TEST_CASE("embedding output shape and finiteness") {
    auto cfg = tiny_config();
    cfg.num_layers = 2;
    const auto params = init_params(cfg, 55);
    const auto emb = encode(params, seq_of({Vocabulary::kCls, 4, Vocabulary::kSep}, 8));
    CHECK(emb.size() == cfg.model_dim);
    for (double v : emb) CHECK(std::isfinite(v));
}
