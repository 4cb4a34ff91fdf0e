#pragma once

#include <vector>

#include "coea/matrix.hpp"
#include "coea/params.hpp"
#include "coea/rng.hpp"
#include "coea/types.hpp"

namespace coea {

// RQ-VAE over long-term interest vectors: two-layer tanh MLPs on both sides
// of a K_q-level residual quantizer. The index tuple is the user's CSID.

struct RqVaeShape {
    size_t d = 128;            // input dim (u_long)
    size_t d_h = 64;           // MLP hidden width
    size_t d_z = 32;           // latent dim
    size_t levels = 4;         // K_q
    size_t codebook_size = 16; // S_cb
    double beta_c = 0.25;      // commitment weight
};

struct RqVaeParams {
    RqVaeShape shape;
    // Encoder z = W2 tanh(W1 u + b1) + b2; decoder mirrors with V1, c1, V2, c2.
    Matrix w1;  // d_h x d
    Vec b1;     // d_h
    Matrix w2;  // d_z x d_h
    Vec b2;     // d_z
    Matrix v1;  // d_h x d_z
    Vec c1;     // d_h
    Matrix v2;  // d x d_h
    Vec c2;     // d
    std::vector<Matrix> codebooks;  // levels matrices, each S_cb x d_z
};

struct QuantizationResult {
    std::vector<int> indices;    // one per level, each in [0, S_cb)
    Vec zhat;                    // sum of selected codewords
    std::vector<Vec> residuals;  // r^(0..K_q), r^(0) = z
};

using GroupCSID = std::vector<int>;

std::vector<ParamView> rqvae_param_views(RqVaeParams& p);

RqVaeParams init_rqvae(const RqVaeShape& shape, Rng& rng, double init_scale = 0.1);
RqVaeParams rqvae_zeros_like(const RqVaeParams& like);

Vec rqvae_encode(const RqVaeParams& p, const Vec& u);
Vec rqvae_decode(const RqVaeParams& p, const Vec& zhat);

// Per level: argmin Euclidean distance to the current residual, ties broken
// by lowest index; residual recurrence r^(k+1) = r^(k) - q^(k) holds exactly.
QuantizationResult residual_quantize(const Vec& z, const std::vector<Matrix>& codebooks);

struct RqVaeForward {
    Vec u_hat;
    QuantizationResult quant;
};
RqVaeForward rqvae_forward(const RqVaeParams& p, const Vec& u);

GroupCSID assign_csid(const RqVaeParams& p, const Vec& u_long);
std::string csid_to_string(const GroupCSID& csid);  // "i1-i2-...-iKq"
GroupCSID csid_from_string(const std::string& s);

struct RqVaeTrainConfig {
    size_t epochs = 200;
    double lr = 0.01;   // Adam
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

// Mean loss over the batch. `quantized` selects the real VQ path (straight
// through estimator, codebook + commitment terms); when false the quantizer
// is bypassed (zhat := z) which makes the whole map differentiable and
// finite-difference checkable.
double rqvae_loss_and_grad(const RqVaeParams& p, const std::vector<Vec>& batch, bool quantized,
                           RqVaeParams* grads);

struct RqVaeTrainResult {
    RqVaeParams params;
    std::vector<double> loss;  // per epoch, plus final
};

// Codebooks are seeded with S_cb distinct first-pass encoder outputs per
// level; codewords unused for a full epoch are reseeded from a random encoder
// output. Throws DataError when the batch is smaller than the codebook.
RqVaeTrainResult train_rqvae(const std::vector<Vec>& batch, const RqVaeShape& shape,
                             const RqVaeTrainConfig& cfg, Rng& rng);

}  // namespace coea
