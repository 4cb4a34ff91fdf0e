#pragma once

#include <vector>

#include "coea/matrix.hpp"
#include "coea/params.hpp"
#include "coea/rng.hpp"
#include "coea/types.hpp"

namespace coea {

// Causal self-attention encoder over the filtered long-term sequence with a
// prepended sparse-attribute token. Layer update is LayerNorm(A + H); there is
// no feed-forward sublayer. All arithmetic is f64 so analytic gradients can be
// checked against central finite differences.

struct EncoderShape {
    size_t d = 128;
    size_t layers = 4;
    size_t heads = 4;
    size_t t_max = 50;  // item positions; the position table has t_max+1 rows
    size_t n_age = 7;
    size_t n_gender = 3;
    size_t n_occupation = 21;
    double ln_eps = 1e-5;
};

struct CsaLayerParams {
    std::vector<Matrix> w_q, w_k, w_v;  // per head, each d x d_k
    Matrix w_o;                         // d x d
    Vec ln_gain, ln_bias;               // d
};

struct EncoderParams {
    EncoderShape shape;
    Vocab items;
    Matrix w_emb;       // d x |I|, column j embeds item j; tied output head
    Matrix positions;   // (t_max+1) x d, row 0 is the sparse token position
    Matrix age_emb;     // n_age x d
    Matrix gender_emb;  // n_gender x d
    Matrix occ_emb;     // n_occupation x d
    std::vector<CsaLayerParams> layers;
};

struct LongTermRepresentation {
    UserId user_id;
    Vec u_long;  // dim d
};

// Every trainable tensor in a fixed order shared by params and gradients.
std::vector<ParamView> param_views(EncoderParams& p);

EncoderParams init_encoder(const Vocab& items, const EncoderShape& shape, Rng& rng,
                           double init_scale = 0.02);
// Same shapes as `like`, every tensor zeroed. Gradient / momentum storage.
EncoderParams zeros_like(const EncoderParams& like);

// Embedding lookup. Row 0 = sparse attribute token (sum of age, gender and
// occupation rows) + position 0; row t = item column + position t. Sequences
// longer than t_max keep the most recent t_max items.
Matrix embed_sequence(const FilteredLongSequence& filtered, const UserAttributes& attrs,
                      const EncoderParams& params);

struct CsaLayerCache {
    Matrix h_in;
    std::vector<Matrix> q, k, v;  // per head, S x d_k
    std::vector<Matrix> attn;     // per head, S x S row-softmax weights
    Matrix concat;                // S x d
    Matrix xhat;                  // S x d, normalized pre-gain rows
    Vec istd;                     // S
};

struct EncoderCache {
    std::vector<int> item_rows;  // vocab index per item row (cache row t = item_rows[t-1])
    int age = 0, gender = 0, occupation = 0;
    Matrix input;
    std::vector<CsaLayerCache> layers;
    Matrix output;
};

// One attention layer. Rows attend to positions <= their own (scores at j > i
// are masked to -inf before the softmax).
Matrix causal_attention_forward(const Matrix& h_in, const CsaLayerParams& layer, double ln_eps,
                                CsaLayerCache* cache = nullptr);

// Full forward over all layers. `cache` is required for backprop.
Matrix encoder_forward(const FilteredLongSequence& filtered, const UserAttributes& attrs,
                       const EncoderParams& params, EncoderCache* cache = nullptr);

LongTermRepresentation encode_long_term(const FilteredLongSequence& filtered,
                                        const UserAttributes& attrs,
                                        const EncoderParams& params);

// Backprop d_output (same shape as cache.output) through all layers and the
// embedding lookup, accumulating into `grads` (shaped by zeros_like).
void encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                      const Matrix& d_output, EncoderParams& grads);

struct EncoderExample {
    FilteredLongSequence filtered;
    UserAttributes attrs;
};

// Mean next-item cross-entropy over every predicted position in the batch.
// Row p of the encoder output scores item p (row 0 is the sparse token) via
// the tied embedding matrix; the final row has no target. When `grads` is
// non-null the full analytic gradient is accumulated into it.
double next_item_loss_and_grad(const EncoderParams& params,
                               const std::vector<EncoderExample>& batch, EncoderParams* grads);

struct EncoderTrainConfig {
    size_t steps = 50;  // full-batch gradient steps
    double lr = 0.1;
    double momentum = 0.9;
};

struct TrainTrace {
    std::vector<double> loss;  // loss before each step, plus the final loss
};

// Full-batch gradient descent with momentum. Deterministic given params.
TrainTrace train_encoder(EncoderParams& params, const std::vector<EncoderExample>& batch,
                         const EncoderTrainConfig& cfg);

}  // namespace coea
