#include "dprf/encoder.hpp"

#include <zlib.h>

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dprf/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

namespace dprf {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

Map map(Matrix& m) { return Map(m.data.data(), m.rows, m.cols); }
CMap map(const Matrix& m) { return CMap(m.data.data(), m.rows, m.cols); }

// y = gamma .* (x - mean)/sqrt(var + eps) + beta, per row. Caches the
// normalized rows and inverse stds for the backward pass.
void layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                Matrix& out, Matrix& x_hat, std::vector<double>& inv_std) {
    const std::size_t t_len = x.rows, d = x.cols;
    out = Matrix(t_len, d);
    x_hat = Matrix(t_len, d);
    inv_std.assign(t_len, 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
        const double* row = x.row(t);
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kLnEps);
        inv_std[t] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * is;
            x_hat.at(t, j) = xh;
            out.at(t, j) = gamma.data[j] * xh + beta.data[j];
        }
    }
}

// Accumulates dgamma/dbeta and returns dx for the cached normalization.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& x_hat,
                           const std::vector<double>& inv_std, const Matrix& gamma,
                           Matrix& dgamma, Matrix& dbeta) {
    const std::size_t t_len = dy.rows, d = dy.cols;
    Matrix dx(t_len, d);
    for (std::size_t t = 0; t < t_len; ++t) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dyj = dy.at(t, j);
            const double xh = x_hat.at(t, j);
            dgamma.data[j] += dyj * xh;
            dbeta.data[j] += dyj;
            const double dxh = dyj * gamma.data[j];
            m1 += dxh;
            m2 += dxh * xh;
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy.at(t, j) * gamma.data[j];
            dx.at(t, j) = inv_std[t] * (dxh - m1 - x_hat.at(t, j) * m2);
        }
    }
    return dx;
}

// rows of `out` = rows of `in` * W + b
void affine(const Matrix& in, const Matrix& w, const Matrix& b, Matrix& out) {
    out = Matrix(in.rows, w.cols);
    map(out).noalias() = map(in) * map(w);
    map(out).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data.data(), b.cols);
}

void validate_input(const EncoderConfig& cfg, const TokenSequence& input) {
    if (input.ids.size() != input.mask.size())
        throw EncoderError("ids/mask length mismatch");
    if (input.ids.size() > cfg.max_len)
        throw EncoderError("sequence length " + std::to_string(input.ids.size()) +
                           " exceeds max_len " + std::to_string(cfg.max_len));
    if (input.ids.empty() || input.mask[0] == 0)
        throw EncoderError("empty input sequence");
    if (input.ids[0] != Vocabulary::kCls) throw EncoderError("input must start with [CLS]");
    bool seen_pad = false;
    for (std::size_t t = 0; t < input.ids.size(); ++t) {
        if (input.mask[t] == 0) {
            seen_pad = true;
        } else if (seen_pad) {
            throw EncoderError("padding must be a suffix");
        }
        if (input.ids[t] < 0 || static_cast<std::size_t>(input.ids[t]) >= cfg.vocab_size)
            throw EncoderError("token id out of vocabulary range");
    }
}

}  // namespace

void EncoderConfig::validate() const {
    if (num_layers == 0 || num_heads == 0 || model_dim == 0 || ff_dim == 0 ||
        max_len == 0 || vocab_size == 0)
        throw EncoderError("encoder config fields must be positive");
    if (model_dim % num_heads != 0)
        throw EncoderError("model_dim must be divisible by num_heads");
    if (query_budget + 2 > max_len)
        throw EncoderError("query_budget + 2 must fit in max_len");
    if (vocab_size < 4) throw EncoderError("vocabulary lacks special tokens");
}

std::vector<Matrix*> tensor_list(EncoderParams& p) {
    std::vector<Matrix*> list = {&p.token_embedding, &p.position_embedding};
    for (auto& l : p.layers) {
        for (Matrix* m : {&l.ln1_gamma, &l.ln1_beta, &l.wq, &l.bq, &l.wk, &l.bk,
                          &l.wv, &l.bv, &l.wo, &l.bo, &l.ln2_gamma, &l.ln2_beta,
                          &l.ff_w1, &l.ff_b1, &l.ff_w2, &l.ff_b2})
            list.push_back(m);
    }
    list.push_back(&p.final_gamma);
    list.push_back(&p.final_beta);
    return list;
}

std::vector<const Matrix*> tensor_list(const EncoderParams& p) {
    auto mutable_list = tensor_list(const_cast<EncoderParams&>(p));
    return std::vector<const Matrix*>(mutable_list.begin(), mutable_list.end());
}

EncoderParams zeros_like(const EncoderParams& p) {
    EncoderParams z;
    z.config = p.config;
    z.token_embedding = zeros_like(p.token_embedding);
    z.position_embedding = zeros_like(p.position_embedding);
    z.layers.resize(p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& s = p.layers[i];
        auto& d = z.layers[i];
        d.ln1_gamma = zeros_like(s.ln1_gamma);
        d.ln1_beta = zeros_like(s.ln1_beta);
        d.wq = zeros_like(s.wq);
        d.bq = zeros_like(s.bq);
        d.wk = zeros_like(s.wk);
        d.bk = zeros_like(s.bk);
        d.wv = zeros_like(s.wv);
        d.bv = zeros_like(s.bv);
        d.wo = zeros_like(s.wo);
        d.bo = zeros_like(s.bo);
        d.ln2_gamma = zeros_like(s.ln2_gamma);
        d.ln2_beta = zeros_like(s.ln2_beta);
        d.ff_w1 = zeros_like(s.ff_w1);
        d.ff_b1 = zeros_like(s.ff_b1);
        d.ff_w2 = zeros_like(s.ff_w2);
        d.ff_b2 = zeros_like(s.ff_b2);
    }
    z.final_gamma = zeros_like(p.final_gamma);
    z.final_beta = zeros_like(p.final_beta);
    return z;
}

std::size_t parameter_count(const EncoderParams& p) {
    std::size_t n = 0;
    for (const Matrix* m : tensor_list(p)) n += m->size();
    return n;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t d = config.model_dim, f = config.ff_dim;
    EncoderParams p;
    p.config = config;
    p.token_embedding = Matrix(config.vocab_size, d);
    p.position_embedding = Matrix(config.max_len, d);
    p.layers.resize(config.num_layers);
    for (auto& l : p.layers) {
        l.ln1_gamma = Matrix(1, d);
        l.ln1_beta = Matrix(1, d);
        l.wq = Matrix(d, d);
        l.bq = Matrix(1, d);
        l.wk = Matrix(d, d);
        l.bk = Matrix(1, d);
        l.wv = Matrix(d, d);
        l.bv = Matrix(1, d);
        l.wo = Matrix(d, d);
        l.bo = Matrix(1, d);
        l.ln2_gamma = Matrix(1, d);
        l.ln2_beta = Matrix(1, d);
        l.ff_w1 = Matrix(d, f);
        l.ff_b1 = Matrix(1, f);
        l.ff_w2 = Matrix(f, d);
        l.ff_b2 = Matrix(1, d);
        l.ln1_gamma.fill(1.0);
        l.ln2_gamma.fill(1.0);
    }
    p.final_gamma = Matrix(1, d);
    p.final_beta = Matrix(1, d);
    p.final_gamma.fill(1.0);

    Rng rng(seed);
    for (Matrix* m : {&p.token_embedding, &p.position_embedding})
        for (double& v : m->data) v = rng.normal() * kInitStd;
    for (auto& l : p.layers)
        for (Matrix* m : {&l.wq, &l.wk, &l.wv, &l.wo, &l.ff_w1, &l.ff_w2})
            for (double& v : m->data) v = rng.normal() * kInitStd;
    return p;
}

EncoderForward encode_forward(const EncoderParams& params, const TokenSequence& input) {
    const auto& cfg = params.config;
    validate_input(cfg, input);

    EncoderForward fwd;
    fwd.seq_len = input.real_length();
    fwd.ids.assign(input.ids.begin(), input.ids.begin() + fwd.seq_len);

    const std::size_t t_len = fwd.seq_len, d = cfg.model_dim, h = cfg.num_heads;
    const std::size_t dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix x(t_len, d);
    for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t j = 0; j < d; ++j)
            x.at(t, j) = params.token_embedding.at(static_cast<std::size_t>(fwd.ids[t]), j) +
                         params.position_embedding.at(t, j);

    fwd.layers.resize(cfg.num_layers);
    for (std::size_t li = 0; li < cfg.num_layers; ++li) {
        const auto& lp = params.layers[li];
        auto& lc = fwd.layers[li];
        lc.x_in = x;

        layer_norm(lc.x_in, lp.ln1_gamma, lp.ln1_beta, lc.a_norm, lc.a_hat, lc.a_inv_std);
        affine(lc.a_norm, lp.wq, lp.bq, lc.q);
        affine(lc.a_norm, lp.wk, lp.bk, lc.k);
        affine(lc.a_norm, lp.wv, lp.bv, lc.v);

        lc.attn.assign(h, Matrix(t_len, t_len));
        lc.ctx = Matrix(t_len, d);
        for (std::size_t hi = 0; hi < h; ++hi) {
            auto qh = map(lc.q).middleCols(hi * dh, dh);
            auto kh = map(lc.k).middleCols(hi * dh, dh);
            auto vh = map(lc.v).middleCols(hi * dh, dh);
            Map p_map = map(lc.attn[hi]);
            p_map.noalias() = qh * kh.transpose() * scale;
            for (std::size_t t = 0; t < t_len; ++t) {
                double* row = lc.attn[hi].row(t);
                double mx = row[0];
                for (std::size_t j = 1; j < t_len; ++j) mx = std::max(mx, row[j]);
                double sum = 0.0;
                for (std::size_t j = 0; j < t_len; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                const double inv = 1.0 / sum;
                for (std::size_t j = 0; j < t_len; ++j) row[j] *= inv;
            }
            map(lc.ctx).middleCols(hi * dh, dh).noalias() = p_map * vh;
        }

        Matrix attn_out;
        affine(lc.ctx, lp.wo, lp.bo, attn_out);
        lc.x_mid = lc.x_in;
        map(lc.x_mid) += map(attn_out);

        layer_norm(lc.x_mid, lp.ln2_gamma, lp.ln2_beta, lc.b_norm, lc.b_hat, lc.b_inv_std);
        affine(lc.b_norm, lp.ff_w1, lp.ff_b1, lc.u);
        for (double& v : lc.u.data) v = std::tanh(v);
        Matrix ff_out;
        affine(lc.u, lp.ff_w2, lp.ff_b2, ff_out);
        x = lc.x_mid;
        map(x) += map(ff_out);
    }

    layer_norm(x, params.final_gamma, params.final_beta, fwd.y, fwd.y_hat, fwd.y_inv_std);
    // x is recoverable as layers.back() caches plus ff output; keep the final
    // pre-norm activations in y_hat/y_inv_std only, x itself via x_hat.
    return fwd;
}

EmbeddingVector encode(const EncoderParams& params, const TokenSequence& input) {
    return encode_forward(params, input).cls();
}

EmbeddingVector encode(const EncoderParams& params, const PrfInput& input) {
    return encode(params, input.seq);
}

AttentionRecord cls_attention_of(const EncoderForward& fwd, std::size_t padded_len) {
    AttentionRecord rec;
    rec.values.assign(std::max(padded_len, fwd.seq_len), 0.0);
    const auto& last = fwd.layers.back();
    for (const auto& head : last.attn)
        for (std::size_t j = 0; j < fwd.seq_len; ++j) rec.values[j] += head.at(0, j);
    return rec;
}

AttentionRecord cls_attention(const EncoderParams& params, const TokenSequence& input) {
    return cls_attention_of(encode_forward(params, input), input.ids.size());
}

AttentionRecord cls_attention(const EncoderParams& params, const PrfInput& input) {
    return cls_attention(params, input.seq);
}

void encode_backward(const EncoderParams& params, const EncoderForward& fwd,
                     const std::vector<double>& grad_cls, EncoderParams& grads) {
    const auto& cfg = params.config;
    const std::size_t t_len = fwd.seq_len, d = cfg.model_dim, h = cfg.num_heads;
    const std::size_t dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (grad_cls.size() != d) throw EncoderError("grad_cls has wrong dimension");

    Matrix dy(t_len, d);
    for (std::size_t j = 0; j < d; ++j) dy.at(0, j) = grad_cls[j];

    Matrix dx = layer_norm_backward(dy, fwd.y_hat, fwd.y_inv_std, params.final_gamma,
                                    grads.final_gamma, grads.final_beta);

    for (std::size_t li = cfg.num_layers; li-- > 0;) {
        const auto& lp = params.layers[li];
        const auto& lc = fwd.layers[li];
        auto& lg = grads.layers[li];

        // Feed-forward block: x_out = x_mid + W2 tanh(W1 LN2(x_mid) + b1) + b2
        const Matrix& dg = dx;
        map(lg.ff_b2).noalias() += map(dg).colwise().sum();
        map(lg.ff_w2).noalias() += map(lc.u).transpose() * map(dg);
        Matrix du(t_len, cfg.ff_dim);
        map(du).noalias() = map(dg) * map(lp.ff_w2).transpose();
        for (std::size_t i = 0; i < du.data.size(); ++i)
            du.data[i] *= 1.0 - lc.u.data[i] * lc.u.data[i];
        map(lg.ff_b1).noalias() += map(du).colwise().sum();
        map(lg.ff_w1).noalias() += map(lc.b_norm).transpose() * map(du);
        Matrix db(t_len, d);
        map(db).noalias() = map(du) * map(lp.ff_w1).transpose();
        Matrix dmid = layer_norm_backward(db, lc.b_hat, lc.b_inv_std, lp.ln2_gamma,
                                          lg.ln2_gamma, lg.ln2_beta);
        map(dmid) += map(dx);  // residual path

        // Attention block: x_mid = x_in + Wo ctx + bo
        map(lg.bo).noalias() += map(dmid).colwise().sum();
        map(lg.wo).noalias() += map(lc.ctx).transpose() * map(dmid);
        Matrix dctx(t_len, d);
        map(dctx).noalias() = map(dmid) * map(lp.wo).transpose();

        Matrix dq(t_len, d), dk(t_len, d), dv(t_len, d);
        for (std::size_t hi = 0; hi < h; ++hi) {
            auto qh = map(lc.q).middleCols(hi * dh, dh);
            auto kh = map(lc.k).middleCols(hi * dh, dh);
            auto vh = map(lc.v).middleCols(hi * dh, dh);
            auto dctx_h = map(dctx).middleCols(hi * dh, dh);
            const Matrix& p = lc.attn[hi];

            Matrix dp(t_len, t_len);
            map(dp).noalias() = dctx_h * vh.transpose();
            map(dv).middleCols(hi * dh, dh).noalias() += map(p).transpose() * dctx_h;

            Matrix ds(t_len, t_len);
            for (std::size_t t = 0; t < t_len; ++t) {
                const double* prow = p.row(t);
                const double* dprow = dp.row(t);
                double dot = 0.0;
                for (std::size_t j = 0; j < t_len; ++j) dot += prow[j] * dprow[j];
                double* dsrow = ds.row(t);
                for (std::size_t j = 0; j < t_len; ++j)
                    dsrow[j] = prow[j] * (dprow[j] - dot) * scale;
            }
            map(dq).middleCols(hi * dh, dh).noalias() += map(ds) * kh;
            map(dk).middleCols(hi * dh, dh).noalias() += map(ds).transpose() * qh;
        }

        map(lg.bq).noalias() += map(dq).colwise().sum();
        map(lg.wq).noalias() += map(lc.a_norm).transpose() * map(dq);
        map(lg.bk).noalias() += map(dk).colwise().sum();
        map(lg.wk).noalias() += map(lc.a_norm).transpose() * map(dk);
        map(lg.bv).noalias() += map(dv).colwise().sum();
        map(lg.wv).noalias() += map(lc.a_norm).transpose() * map(dv);

        Matrix da(t_len, d);
        map(da).noalias() = map(dq) * map(lp.wq).transpose() +
                            map(dk) * map(lp.wk).transpose() +
                            map(dv) * map(lp.wv).transpose();
        Matrix dxin = layer_norm_backward(da, lc.a_hat, lc.a_inv_std, lp.ln1_gamma,
                                          lg.ln1_gamma, lg.ln1_beta);
        map(dxin) += map(dmid);  // residual path
        dx = std::move(dxin);
    }

    for (std::size_t t = 0; t < t_len; ++t) {
        double* tok_row = grads.token_embedding.row(static_cast<std::size_t>(fwd.ids[t]));
        double* pos_row = grads.position_embedding.row(t);
        const double* dxr = dx.row(t);
        for (std::size_t j = 0; j < d; ++j) {
            tok_row[j] += dxr[j];
            pos_row[j] += dxr[j];
        }
    }
}

namespace {

constexpr const char* kCkptMagic = "DPRFCKPT1";

void header_kv(std::ostringstream& out, const std::string& k, const std::string& v) {
    out << k << ' ' << v << '\n';
}

}  // namespace

void save_checkpoint(const EncoderParams& params, const std::string& path,
                     const std::map<std::string, std::string>& extra) {
    std::ostringstream head;
    head << kCkptMagic << '\n';
    header_kv(head, "num_layers", std::to_string(params.config.num_layers));
    header_kv(head, "num_heads", std::to_string(params.config.num_heads));
    header_kv(head, "model_dim", std::to_string(params.config.model_dim));
    header_kv(head, "ff_dim", std::to_string(params.config.ff_dim));
    header_kv(head, "max_len", std::to_string(params.config.max_len));
    header_kv(head, "vocab_size", std::to_string(params.config.vocab_size));
    header_kv(head, "query_budget", std::to_string(params.config.query_budget));
    header_kv(head, "activation", "tanh");
    header_kv(head, "norm", "pre_layernorm");
    for (const auto& [k, v] : extra) header_kv(head, k, v);
    head << "weights " << parameter_count(params) << '\n';

    std::string buf = head.str();
    for (const Matrix* m : tensor_list(params))
        buf.append(reinterpret_cast<const char*>(m->data.data()), m->data.size() * sizeof(double));
    const auto crc = static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    buf.append(reinterpret_cast<const char*>(&crc), sizeof(crc));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EncoderError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw EncoderError("write failed for '" + path + "'");
}

EncoderParams load_checkpoint(const std::string& path,
                              std::map<std::string, std::string>* extra) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EncoderError("cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 4) throw EncoderError("checkpoint truncated");

    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    const auto crc = static_cast<std::uint32_t>(::crc32(
        0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
    if (crc != stored_crc) throw EncoderError("checksum mismatch: corrupt checkpoint");

    std::istringstream head(buf);
    std::string line;
    if (!std::getline(head, line) || line != kCkptMagic)
        throw EncoderError("bad magic: not a checkpoint");

    EncoderConfig cfg;
    std::size_t weight_count = 0;
    std::map<std::string, std::string> kv;
    while (std::getline(head, line)) {
        const auto sp = line.find(' ');
        if (sp == std::string::npos) throw EncoderError("malformed checkpoint header line");
        const std::string key = line.substr(0, sp);
        const std::string value = line.substr(sp + 1);
        if (key == "weights") {
            weight_count = std::stoull(value);
            break;
        }
        kv[key] = value;
    }
    auto take_num = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw EncoderError(std::string("checkpoint header missing ") + key);
        const std::size_t v = std::stoull(it->second);
        kv.erase(it);
        return v;
    };
    cfg.num_layers = take_num("num_layers");
    cfg.num_heads = take_num("num_heads");
    cfg.model_dim = take_num("model_dim");
    cfg.ff_dim = take_num("ff_dim");
    cfg.max_len = take_num("max_len");
    cfg.vocab_size = take_num("vocab_size");
    cfg.query_budget = take_num("query_budget");
    kv.erase("activation");
    kv.erase("norm");
    if (extra) *extra = kv;

    EncoderParams params = init_params(cfg, 0);
    if (parameter_count(params) != weight_count)
        throw EncoderError("checkpoint weight count mismatch");

    const std::size_t blob_off = static_cast<std::size_t>(head.tellg());
    const std::size_t blob_bytes = weight_count * sizeof(double);
    if (blob_off + blob_bytes + 4 != buf.size())
        throw EncoderError("checkpoint blob size mismatch");
    std::size_t off = blob_off;
    for (Matrix* m : tensor_list(params)) {
        std::memcpy(m->data.data(), buf.data() + off, m->data.size() * sizeof(double));
        off += m->data.size() * sizeof(double);
    }
    return params;
}

}  // namespace dprf
