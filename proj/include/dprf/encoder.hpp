#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dprf/encoder_input.hpp"
#include "dprf/flat_index.hpp"
#include "dprf/matrix.hpp"

namespace dprf {

struct EncoderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EncoderConfig {
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t model_dim = 64;
    std::size_t ff_dim = 128;
    std::size_t max_len = 128;
    std::size_t vocab_size = 0;
    std::size_t query_budget = 24;

    std::size_t head_dim() const { return model_dim / num_heads; }
    InputBudget budget() const { return {max_len, query_budget}; }
    void validate() const;

    bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
    Matrix ln1_gamma, ln1_beta;   // 1 x D
    Matrix wq, wk, wv, wo;        // D x D
    Matrix bq, bk, bv, bo;        // 1 x D
    Matrix ln2_gamma, ln2_beta;   // 1 x D
    Matrix ff_w1;                 // D x F
    Matrix ff_b1;                 // 1 x F
    Matrix ff_w2;                 // F x D
    Matrix ff_b2;                 // 1 x D
};

// Pre-layernorm transformer encoder, tanh feed-forward, learned absolute
// positions, final layernorm; all math in double precision. The sequence
// embedding is the final-layer [CLS] state.
struct EncoderParams {
    EncoderConfig config;
    Matrix token_embedding;     // V x D
    Matrix position_embedding;  // max_len x D
    std::vector<LayerParams> layers;
    Matrix final_gamma, final_beta;  // 1 x D
};

// All weight tensors in the fixed order used by the checkpoint blob.
std::vector<Matrix*> tensor_list(EncoderParams& p);
std::vector<const Matrix*> tensor_list(const EncoderParams& p);

EncoderParams zeros_like(const EncoderParams& p);
std::size_t parameter_count(const EncoderParams& p);

// Weights and embeddings N(0, 0.02); layernorm gammas 1; biases and betas 0.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

// Per-layer activations kept for the backward pass and for attention
// inspection. Tensors span only the real (non-padding) positions; padding
// cannot influence real positions, so trimming keeps outputs bit-identical
// across padding lengths.
struct LayerCache {
    Matrix x_in;      // T x D
    Matrix a_norm;    // LN1 output
    Matrix a_hat;     // LN1 normalized rows before gamma/beta
    std::vector<double> a_inv_std;
    Matrix q, k, v;   // T x D
    std::vector<Matrix> attn;  // per head, T x T softmax rows
    Matrix ctx;       // T x D head contexts before the output projection
    Matrix x_mid;     // after attention residual
    Matrix b_hat;
    std::vector<double> b_inv_std;
    Matrix b_norm;    // LN2 output
    Matrix u;         // T x F tanh activations
};

struct EncoderForward {
    std::size_t seq_len = 0;   // real length
    std::vector<int> ids;      // real tokens only
    std::vector<LayerCache> layers;
    Matrix y_hat;
    std::vector<double> y_inv_std;
    Matrix y;  // T x D final output

    EmbeddingVector cls() const {
        return EmbeddingVector(y.row(0), y.row(0) + y.cols);
    }
};

// Per-token [CLS]-row attention of the last layer, summed over heads; zeros
// at padding positions. Summing over real positions gives num_heads.
struct AttentionRecord {
    std::vector<double> values;
};

EncoderForward encode_forward(const EncoderParams& params, const TokenSequence& input);
EmbeddingVector encode(const EncoderParams& params, const TokenSequence& input);
EmbeddingVector encode(const EncoderParams& params, const PrfInput& input);

AttentionRecord cls_attention(const EncoderParams& params, const TokenSequence& input);
AttentionRecord cls_attention(const EncoderParams& params, const PrfInput& input);
AttentionRecord cls_attention_of(const EncoderForward& fwd, std::size_t padded_len);

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(cls embedding).
void encode_backward(const EncoderParams& params, const EncoderForward& fwd,
                     const std::vector<double>& grad_cls, EncoderParams& grads);

// Checkpoint: text header (magic, hyperparameters, free-form extras, then
// "weights <count>") followed by the raw little-endian float64 blob in
// tensor_list order and a zlib crc32 of all preceding bytes.
void save_checkpoint(const EncoderParams& params, const std::string& path,
                     const std::map<std::string, std::string>& extra = {});
EncoderParams load_checkpoint(const std::string& path,
                              std::map<std::string, std::string>* extra = nullptr);

}  // namespace dprf
