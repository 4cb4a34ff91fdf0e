#include "coea/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "coea/errors.hpp"

namespace coea {

namespace {

void gauss_fill(Matrix& m, Rng& rng, double scale) {
    for (double& v : m.raw()) v = rng.next_gaussian() * scale;
}

// y = W x + b, with W rows x cols, x cols, y rows.
Vec affine(const Matrix& w, const Vec& b, const Vec& x) {
    Vec y(w.rows());
    for (size_t i = 0; i < w.rows(); ++i) y[i] = dot(w.row(i), x.data(), w.cols()) + b[i];
    return y;
}

Vec tanh_vec(const Vec& x) {
    Vec y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

struct MlpCache {
    Vec x;   // input
    Vec h;   // tanh activations
    Vec y;   // output
};

MlpCache mlp_forward(const Matrix& w_a, const Vec& b_a, const Matrix& w_b, const Vec& b_b,
                     const Vec& x) {
    MlpCache c;
    c.x = x;
    c.h = tanh_vec(affine(w_a, b_a, x));
    c.y = affine(w_b, b_b, c.h);
    return c;
}

// Backprop dy through y = w_b h + b_b, h = tanh(w_a x + b_a). Returns dx.
Vec mlp_backward(const Matrix& w_a, const Matrix& w_b, const MlpCache& c, const Vec& dy,
                 Matrix& g_wa, Vec& g_ba, Matrix& g_wb, Vec& g_bb) {
    size_t hid = c.h.size();
    Vec dh(hid, 0.0);
    for (size_t i = 0; i < dy.size(); ++i) {
        axpy(dy[i], c.h.data(), g_wb.row(i), hid);
        g_bb[i] += dy[i];
        axpy(dy[i], w_b.row(i), dh.data(), hid);
    }
    Vec dpre(hid);
    for (size_t i = 0; i < hid; ++i) dpre[i] = dh[i] * (1.0 - c.h[i] * c.h[i]);
    Vec dx(c.x.size(), 0.0);
    for (size_t i = 0; i < hid; ++i) {
        axpy(dpre[i], c.x.data(), g_wa.row(i), c.x.size());
        g_ba[i] += dpre[i];
        axpy(dpre[i], w_a.row(i), dx.data(), c.x.size());
    }
    return dx;
}

}  // namespace

std::vector<ParamView> rqvae_param_views(RqVaeParams& p) {
    std::vector<ParamView> v;
    auto add_m = [&](const char* n, Matrix& m) { v.push_back({n, m.data(), m.size()}); };
    auto add_v = [&](const char* n, Vec& x) { v.push_back({n, x.data(), x.size()}); };
    add_m("w1", p.w1);
    add_v("b1", p.b1);
    add_m("w2", p.w2);
    add_v("b2", p.b2);
    add_m("v1", p.v1);
    add_v("c1", p.c1);
    add_m("v2", p.v2);
    add_v("c2", p.c2);
    for (size_t k = 0; k < p.codebooks.size(); ++k)
        v.push_back({"codebook" + std::to_string(k), p.codebooks[k].data(),
                     p.codebooks[k].size()});
    return v;
}

RqVaeParams init_rqvae(const RqVaeShape& shape, Rng& rng, double init_scale) {
    if (shape.levels < 1 || shape.codebook_size < 2)
        throw UsageError("rq-vae needs levels >= 1 and codebook_size >= 2");
    RqVaeParams p;
    p.shape = shape;
    p.w1 = Matrix(shape.d_h, shape.d);
    p.b1.assign(shape.d_h, 0.0);
    p.w2 = Matrix(shape.d_z, shape.d_h);
    p.b2.assign(shape.d_z, 0.0);
    p.v1 = Matrix(shape.d_h, shape.d_z);
    p.c1.assign(shape.d_h, 0.0);
    p.v2 = Matrix(shape.d, shape.d_h);
    p.c2.assign(shape.d, 0.0);
    gauss_fill(p.w1, rng, init_scale);
    gauss_fill(p.w2, rng, init_scale);
    gauss_fill(p.v1, rng, init_scale);
    gauss_fill(p.v2, rng, init_scale);
    p.codebooks.assign(shape.levels, Matrix(shape.codebook_size, shape.d_z));
    for (auto& cb : p.codebooks) gauss_fill(cb, rng, init_scale);
    return p;
}

RqVaeParams rqvae_zeros_like(const RqVaeParams& like) {
    RqVaeParams z = like;
    for (auto& view : rqvae_param_views(z)) std::fill(view.data, view.data + view.size, 0.0);
    return z;
}

Vec rqvae_encode(const RqVaeParams& p, const Vec& u) {
    return mlp_forward(p.w1, p.b1, p.w2, p.b2, u).y;
}

Vec rqvae_decode(const RqVaeParams& p, const Vec& zhat) {
    return mlp_forward(p.v1, p.c1, p.v2, p.c2, zhat).y;
}

QuantizationResult residual_quantize(const Vec& z, const std::vector<Matrix>& codebooks) {
    QuantizationResult out;
    out.residuals.push_back(z);
    out.zhat.assign(z.size(), 0.0);
    Vec r = z;
    for (const auto& cb : codebooks) {
        int best = 0;
        double best_d = l2_distance_sq(r.data(), cb.row(0), r.size());
        for (size_t i = 1; i < cb.rows(); ++i) {
            double d2 = l2_distance_sq(r.data(), cb.row(i), r.size());
            if (d2 < best_d) {  // strict: ties keep the lowest index
                best_d = d2;
                best = static_cast<int>(i);
            }
        }
        out.indices.push_back(best);
        for (size_t j = 0; j < r.size(); ++j) {
            out.zhat[j] += cb(best, j);
            r[j] -= cb(best, j);
        }
        out.residuals.push_back(r);
    }
    return out;
}

RqVaeForward rqvae_forward(const RqVaeParams& p, const Vec& u) {
    RqVaeForward f;
    f.quant = residual_quantize(rqvae_encode(p, u), p.codebooks);
    f.u_hat = rqvae_decode(p, f.quant.zhat);
    return f;
}

GroupCSID assign_csid(const RqVaeParams& p, const Vec& u_long) {
    return residual_quantize(rqvae_encode(p, u_long), p.codebooks).indices;
}

std::string csid_to_string(const GroupCSID& csid) {
    std::ostringstream ss;
    for (size_t i = 0; i < csid.size(); ++i) {
        if (i) ss << '-';
        ss << csid[i];
    }
    return ss.str();
}

GroupCSID csid_from_string(const std::string& s) {
    GroupCSID csid;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t next = s.find('-', pos);
        std::string tok = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
            throw DataError("malformed csid: " + s);
        csid.push_back(std::stoi(tok));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (csid.empty()) throw DataError("malformed csid: " + s);
    return csid;
}

double rqvae_loss_and_grad(const RqVaeParams& p, const std::vector<Vec>& batch, bool quantized,
                           RqVaeParams* grads) {
    if (batch.empty()) throw DataError("rq-vae loss needs a non-empty batch");
    double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const Vec& u : batch) {
        MlpCache enc = mlp_forward(p.w1, p.b1, p.w2, p.b2, u);
        const Vec& z = enc.y;

        QuantizationResult q;
        Vec zhat;
        if (quantized) {
            q = residual_quantize(z, p.codebooks);
            zhat = q.zhat;
        } else {
            zhat = z;
        }

        MlpCache dec = mlp_forward(p.v1, p.c1, p.v2, p.c2, zhat);
        double recon = l2_distance_sq(u.data(), dec.y.data(), u.size());
        loss += recon * inv_n;

        Vec dz(z.size(), 0.0);
        if (quantized) {
            for (size_t k = 0; k < p.codebooks.size(); ++k) {
                const Vec& r = q.residuals[k];
                const Matrix& cb = p.codebooks[k];
                int idx = q.indices[k];
                double cb_term = 0.0;
                for (size_t j = 0; j < z.size(); ++j) {
                    double diff = r[j] - cb(idx, j);
                    cb_term += diff * diff;
                    if (grads) {
                        grads->codebooks[k](idx, j) += 2.0 * (cb(idx, j) - r[j]) * inv_n;
                        dz[j] += 2.0 * p.shape.beta_c * diff * inv_n;
                    }
                }
                loss += (1.0 + p.shape.beta_c) * cb_term * inv_n;
            }
        }

        if (grads) {
            Vec dy(u.size());
            for (size_t j = 0; j < u.size(); ++j) dy[j] = 2.0 * (dec.y[j] - u[j]) * inv_n;
            Vec dzhat = mlp_backward(p.v1, p.v2, dec, dy, grads->v1, grads->c1, grads->v2,
                                     grads->c2);
            // Straight-through: the recon gradient passes the quantizer unchanged.
            for (size_t j = 0; j < z.size(); ++j) dz[j] += dzhat[j];
            mlp_backward(p.w1, p.w2, enc, dz, grads->w1, grads->b1, grads->w2, grads->b2);
        }
    }
    return loss;
}

RqVaeTrainResult train_rqvae(const std::vector<Vec>& batch, const RqVaeShape& shape,
                             const RqVaeTrainConfig& cfg, Rng& rng) {
    if (batch.size() < shape.codebook_size)
        throw DataError("cannot initialize codebooks: " + std::to_string(batch.size()) +
                        " samples < codebook size " + std::to_string(shape.codebook_size));
    RqVaeTrainResult res;
    res.params = init_rqvae(shape, rng);
    RqVaeParams& p = res.params;

    // First pass: seed every level's codebook with distinct encoder outputs.
    std::vector<Vec> zs;
    zs.reserve(batch.size());
    for (const Vec& u : batch) zs.push_back(rqvae_encode(p, u));
    for (auto& cb : p.codebooks) {
        auto picks = rng.sample_without_replacement(zs.size(), shape.codebook_size);
        for (size_t i = 0; i < picks.size(); ++i)
            std::copy(zs[picks[i]].begin(), zs[picks[i]].end(), cb.row(i));
    }

    AdamState adam;
    AdamConfig acfg{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    auto pv = rqvae_param_views(p);
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        RqVaeParams grads = rqvae_zeros_like(p);
        double loss = rqvae_loss_and_grad(p, batch, true, &grads);
        res.loss.push_back(loss);
        adam.step(pv, rqvae_param_views(grads), acfg);

        // Reseed codewords untouched for a whole epoch.
        std::vector<std::vector<char>> used(shape.levels,
                                            std::vector<char>(shape.codebook_size, 0));
        std::vector<Vec> epoch_zs;
        epoch_zs.reserve(batch.size());
        for (const Vec& u : batch) {
            Vec z = rqvae_encode(p, u);
            auto q = residual_quantize(z, p.codebooks);
            for (size_t k = 0; k < q.indices.size(); ++k) used[k][q.indices[k]] = 1;
            epoch_zs.push_back(std::move(z));
        }
        for (size_t k = 0; k < shape.levels; ++k)
            for (size_t i = 0; i < shape.codebook_size; ++i)
                if (!used[k][i]) {
                    const Vec& z = epoch_zs[rng.bounded(epoch_zs.size())];
                    std::copy(z.begin(), z.end(), p.codebooks[k].row(i));
                }
    }
    res.loss.push_back(rqvae_loss_and_grad(p, batch, true, nullptr));
    return res;
}

}  // namespace coea
