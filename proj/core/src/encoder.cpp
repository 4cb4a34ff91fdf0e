#include "coea/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "coea/errors.hpp"

namespace coea {

namespace {

void check_shape(const EncoderShape& s) {
    if (s.d == 0 || s.layers == 0 || s.heads == 0) throw UsageError("encoder dims must be positive");
    if (s.d % s.heads != 0) throw UsageError("encoder d must be divisible by the head count");
}

void gauss_fill(Matrix& m, Rng& rng, double scale) {
    for (double& v : m.raw()) v = rng.next_gaussian() * scale;
}

int attr_row(int value, size_t table_rows, const char* what) {
    if (value < 0 || static_cast<size_t>(value) >= table_rows)
        throw DataError(std::string(what) + " index out of range: " + std::to_string(value));
    return value;
}

}  // namespace

std::vector<ParamView> param_views(EncoderParams& p) {
    std::vector<ParamView> views;
    auto add_m = [&](const std::string& name, Matrix& m) {
        views.push_back({name, m.data(), m.size()});
    };
    auto add_v = [&](const std::string& name, Vec& v) {
        views.push_back({name, v.data(), v.size()});
    };
    add_m("w_emb", p.w_emb);
    add_m("positions", p.positions);
    add_m("age_emb", p.age_emb);
    add_m("gender_emb", p.gender_emb);
    add_m("occ_emb", p.occ_emb);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        std::string base = "layer" + std::to_string(l) + ".";
        for (size_t a = 0; a < layer.w_q.size(); ++a) {
            std::string head = "h" + std::to_string(a);
            add_m(base + "w_q." + head, layer.w_q[a]);
            add_m(base + "w_k." + head, layer.w_k[a]);
            add_m(base + "w_v." + head, layer.w_v[a]);
        }
        add_m(base + "w_o", layer.w_o);
        add_v(base + "ln_gain", layer.ln_gain);
        add_v(base + "ln_bias", layer.ln_bias);
    }
    return views;
}

EncoderParams init_encoder(const Vocab& items, const EncoderShape& shape, Rng& rng,
                           double init_scale) {
    check_shape(shape);
    if (items.size() == 0) throw UsageError("encoder needs a non-empty item vocabulary");
    EncoderParams p;
    p.shape = shape;
    p.items = items;
    size_t d = shape.d, d_k = d / shape.heads;
    p.w_emb = Matrix(d, items.size());
    p.positions = Matrix(shape.t_max + 1, d);
    p.age_emb = Matrix(shape.n_age, d);
    p.gender_emb = Matrix(shape.n_gender, d);
    p.occ_emb = Matrix(shape.n_occupation, d);
    gauss_fill(p.w_emb, rng, init_scale);
    gauss_fill(p.positions, rng, init_scale);
    gauss_fill(p.age_emb, rng, init_scale);
    gauss_fill(p.gender_emb, rng, init_scale);
    gauss_fill(p.occ_emb, rng, init_scale);
    p.layers.resize(shape.layers);
    for (auto& layer : p.layers) {
        layer.w_q.assign(shape.heads, Matrix(d, d_k));
        layer.w_k.assign(shape.heads, Matrix(d, d_k));
        layer.w_v.assign(shape.heads, Matrix(d, d_k));
        for (size_t a = 0; a < shape.heads; ++a) {
            gauss_fill(layer.w_q[a], rng, init_scale);
            gauss_fill(layer.w_k[a], rng, init_scale);
            gauss_fill(layer.w_v[a], rng, init_scale);
        }
        layer.w_o = Matrix(d, d);
        gauss_fill(layer.w_o, rng, init_scale);
        layer.ln_gain.assign(d, 1.0);
        layer.ln_bias.assign(d, 0.0);
    }
    return p;
}

EncoderParams zeros_like(const EncoderParams& like) {
    EncoderParams z = like;
    for (auto& view : param_views(z)) std::fill(view.data, view.data + view.size, 0.0);
    return z;
}

Matrix embed_sequence(const FilteredLongSequence& filtered, const UserAttributes& attrs,
                      const EncoderParams& params) {
    const auto& s = params.shape;
    size_t t = filtered.items.size();
    size_t skip = t > s.t_max ? t - s.t_max : 0;  // keep the most recent t_max
    t -= skip;
    Matrix x(t + 1, s.d);
    int age = attr_row(attrs.age_bucket, s.n_age, "age bucket");
    int gen = attr_row(static_cast<int>(attrs.gender), s.n_gender, "gender");
    int occ = attr_row(attrs.occupation, s.n_occupation, "occupation");
    for (size_t j = 0; j < s.d; ++j)
        x(0, j) = params.age_emb(age, j) + params.gender_emb(gen, j) + params.occ_emb(occ, j) +
                  params.positions(0, j);
    for (size_t p = 1; p <= t; ++p) {
        int col = params.items.require(filtered.items[skip + p - 1]);
        for (size_t j = 0; j < s.d; ++j)
            x(p, j) = params.w_emb(j, col) + params.positions(p, j);
    }
    return x;
}

Matrix causal_attention_forward(const Matrix& h_in, const CsaLayerParams& layer, double ln_eps,
                                CsaLayerCache* cache) {
    if (!all_finite(h_in)) throw DataError("attention input contains non-finite values");
    size_t n = h_in.rows(), d = h_in.cols();
    size_t heads = layer.w_q.size();
    size_t d_k = layer.w_q[0].cols();
    double scale = 1.0 / std::sqrt(static_cast<double>(d_k));

    Matrix concat(n, d);
    std::vector<Matrix> qs(heads), ks(heads), vs(heads), attns(heads);
    for (size_t a = 0; a < heads; ++a) {
        Matrix& q = qs[a];
        Matrix& k = ks[a];
        Matrix& v = vs[a];
        matmul(h_in, layer.w_q[a], q);
        matmul(h_in, layer.w_k[a], k);
        matmul(h_in, layer.w_v[a], v);
        // Masked row softmax: row i sees columns 0..i only.
        Matrix w(n, n);
        for (size_t i = 0; i < n; ++i) {
            double mx = -1e300;
            for (size_t j = 0; j <= i; ++j) {
                w(i, j) = dot(q.row(i), k.row(j), d_k) * scale;
                mx = std::max(mx, w(i, j));
            }
            double z = 0.0;
            for (size_t j = 0; j <= i; ++j) {
                w(i, j) = std::exp(w(i, j) - mx);
                z += w(i, j);
            }
            for (size_t j = 0; j <= i; ++j) w(i, j) /= z;
        }
        for (size_t i = 0; i < n; ++i) {
            double* out = concat.row(i) + a * d_k;
            for (size_t j = 0; j <= i; ++j) axpy(w(i, j), v.row(j), out, d_k);
        }
        attns[a] = std::move(w);
    }

    Matrix r(n, d);
    matmul(concat, layer.w_o, r);
    for (size_t i = 0; i < n; ++i) axpy(1.0, h_in.row(i), r.row(i), d);

    Matrix out(n, d), xhat(n, d);
    Vec istd(n);
    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < d; ++j) mean += r(i, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) {
            double c = r(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        istd[i] = 1.0 / std::sqrt(var + ln_eps);
        for (size_t j = 0; j < d; ++j) {
            xhat(i, j) = (r(i, j) - mean) * istd[i];
            out(i, j) = layer.ln_gain[j] * xhat(i, j) + layer.ln_bias[j];
        }
    }

    if (cache) {
        cache->h_in = h_in;
        cache->q = std::move(qs);
        cache->k = std::move(ks);
        cache->v = std::move(vs);
        cache->attn = std::move(attns);
        cache->concat = std::move(concat);
        cache->xhat = std::move(xhat);
        cache->istd = std::move(istd);
    }
    return out;
}

Matrix encoder_forward(const FilteredLongSequence& filtered, const UserAttributes& attrs,
                       const EncoderParams& params, EncoderCache* cache) {
    Matrix h = embed_sequence(filtered, attrs, params);
    if (cache) {
        const auto& s = params.shape;
        size_t t = h.rows() - 1;
        size_t skip = filtered.items.size() - t;
        cache->item_rows.clear();
        for (size_t i = 0; i < t; ++i)
            cache->item_rows.push_back(params.items.require(filtered.items[skip + i]));
        cache->age = attrs.age_bucket;
        cache->gender = static_cast<int>(attrs.gender);
        cache->occupation = attrs.occupation;
        cache->input = h;
        cache->layers.resize(params.layers.size());
        (void)s;
    }
    for (size_t l = 0; l < params.layers.size(); ++l)
        h = causal_attention_forward(h, params.layers[l], params.shape.ln_eps,
                                     cache ? &cache->layers[l] : nullptr);
    if (cache) cache->output = h;
    return h;
}

LongTermRepresentation encode_long_term(const FilteredLongSequence& filtered,
                                        const UserAttributes& attrs,
                                        const EncoderParams& params) {
    Matrix h = encoder_forward(filtered, attrs, params);
    LongTermRepresentation rep;
    rep.user_id = filtered.user_id;
    const double* last = h.row(h.rows() - 1);
    rep.u_long.assign(last, last + h.cols());
    return rep;
}

namespace {

// LayerNorm backward for one layer. d_out is consumed; returns d on h_in.
Matrix attention_backward(const CsaLayerParams& layer, const CsaLayerCache& cache,
                          const Matrix& d_out, CsaLayerParams& g) {
    size_t n = d_out.rows(), d = d_out.cols();
    size_t heads = layer.w_q.size();
    size_t d_k = layer.w_q[0].cols();
    double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    double inv_d = 1.0 / static_cast<double>(d);

    // Through gain/bias and the normalization.
    Matrix d_r(n, d);
    for (size_t i = 0; i < n; ++i) {
        double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
        for (size_t j = 0; j < d; ++j) {
            double dx = d_out(i, j) * layer.ln_gain[j];
            g.ln_gain[j] += d_out(i, j) * cache.xhat(i, j);
            g.ln_bias[j] += d_out(i, j);
            d_r(i, j) = dx;
            m1 += dx;
            m2 += dx * cache.xhat(i, j);
        }
        m1 *= inv_d;
        m2 *= inv_d;
        for (size_t j = 0; j < d; ++j)
            d_r(i, j) = cache.istd[i] * (d_r(i, j) - m1 - cache.xhat(i, j) * m2);
    }

    // Residual: d_r feeds both the attention branch and h_in directly.
    Matrix d_h = d_r;

    // A = concat * W_O
    Matrix d_concat(n, d);
    matmul_nt(d_r, layer.w_o, d_concat);
    matmul_tn(cache.concat, d_r, g.w_o, true);

    for (size_t a = 0; a < heads; ++a) {
        const Matrix& q = cache.q[a];
        const Matrix& k = cache.k[a];
        const Matrix& v = cache.v[a];
        const Matrix& w = cache.attn[a];

        // Slice this head's columns from d_concat.
        Matrix d_o(n, d_k);
        for (size_t i = 0; i < n; ++i) {
            const double* src = d_concat.row(i) + a * d_k;
            std::copy(src, src + d_k, d_o.row(i));
        }

        Matrix d_w(n, n), d_v(n, d_k);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j <= i; ++j) {
                d_w(i, j) = dot(d_o.row(i), v.row(j), d_k);
                axpy(w(i, j), d_o.row(i), d_v.row(j), d_k);
            }

        // Row softmax backward over the unmasked prefix.
        Matrix d_s(n, n);
        for (size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (size_t j = 0; j <= i; ++j) acc += w(i, j) * d_w(i, j);
            for (size_t j = 0; j <= i; ++j) d_s(i, j) = w(i, j) * (d_w(i, j) - acc);
        }

        Matrix d_q(n, d_k), d_kk(n, d_k);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j <= i; ++j) {
                axpy(d_s(i, j) * scale, k.row(j), d_q.row(i), d_k);
                axpy(d_s(i, j) * scale, q.row(i), d_kk.row(j), d_k);
            }

        matmul_tn(cache.h_in, d_q, g.w_q[a], true);
        matmul_tn(cache.h_in, d_kk, g.w_k[a], true);
        matmul_tn(cache.h_in, d_v, g.w_v[a], true);

        Matrix tmp(n, d);
        matmul_nt(d_q, layer.w_q[a], tmp);
        for (size_t i = 0; i < n * d; ++i) d_h.data()[i] += tmp.data()[i];
        matmul_nt(d_kk, layer.w_k[a], tmp);
        for (size_t i = 0; i < n * d; ++i) d_h.data()[i] += tmp.data()[i];
        matmul_nt(d_v, layer.w_v[a], tmp);
        for (size_t i = 0; i < n * d; ++i) d_h.data()[i] += tmp.data()[i];
    }
    return d_h;
}

}  // namespace

void encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                      const Matrix& d_output, EncoderParams& grads) {
    Matrix d_h = d_output;
    for (size_t l = params.layers.size(); l-- > 0;)
        d_h = attention_backward(params.layers[l], cache.layers[l], d_h, grads.layers[l]);

    // Embedding rows.
    size_t d = params.shape.d;
    for (size_t j = 0; j < d; ++j) {
        grads.age_emb(cache.age, j) += d_h(0, j);
        grads.gender_emb(cache.gender, j) += d_h(0, j);
        grads.occ_emb(cache.occupation, j) += d_h(0, j);
        grads.positions(0, j) += d_h(0, j);
    }
    for (size_t p = 1; p < d_h.rows(); ++p) {
        int col = cache.item_rows[p - 1];
        for (size_t j = 0; j < d; ++j) {
            grads.w_emb(j, col) += d_h(p, j);
            grads.positions(p, j) += d_h(p, j);
        }
    }
}

double next_item_loss_and_grad(const EncoderParams& params,
                               const std::vector<EncoderExample>& batch, EncoderParams* grads) {
    size_t total_targets = 0;
    for (const auto& ex : batch)
        total_targets += std::min(ex.filtered.items.size(), params.shape.t_max);
    if (total_targets == 0) throw DataError("empty effective dataset: no sequence has any item");
    double inv_n = 1.0 / static_cast<double>(total_targets);

    size_t vocab = params.items.size();
    double loss = 0.0;
    for (const auto& ex : batch) {
        size_t t = std::min(ex.filtered.items.size(), params.shape.t_max);
        if (t == 0) continue;
        EncoderCache cache;
        Matrix h = encoder_forward(ex.filtered, ex.attrs, params, grads ? &cache : nullptr);

        // Rows 0..t-1 predict items 0..t-1 of the (possibly truncated) window.
        Matrix d_h(h.rows(), h.cols());
        for (size_t p = 0; p < t; ++p) {
            const double* hp = h.row(p);
            Vec z(vocab);
            double mx = -1e300;
            for (size_t c = 0; c < vocab; ++c) {
                double s = 0.0;
                for (size_t j = 0; j < params.shape.d; ++j) s += hp[j] * params.w_emb(j, c);
                z[c] = s;
                mx = std::max(mx, s);
            }
            double lse = 0.0;
            for (size_t c = 0; c < vocab; ++c) lse += std::exp(z[c] - mx);
            lse = mx + std::log(lse);
            int target = grads ? cache.item_rows[p]
                               : params.items.require(
                                     ex.filtered.items[ex.filtered.items.size() - t + p]);
            loss += (lse - z[target]) * inv_n;
            if (grads) {
                for (size_t c = 0; c < vocab; ++c) {
                    double dz = std::exp(z[c] - lse) * inv_n;
                    if (static_cast<int>(c) == target) dz -= inv_n;
                    // Tied output head: dW_emb column c, d_h row p.
                    for (size_t j = 0; j < params.shape.d; ++j) {
                        grads->w_emb(j, c) += dz * hp[j];
                        d_h(p, j) += dz * params.w_emb(j, c);
                    }
                }
            }
        }
        if (grads) encoder_backward(params, cache, d_h, *grads);
    }
    return loss;
}

TrainTrace train_encoder(EncoderParams& params, const std::vector<EncoderExample>& batch,
                         const EncoderTrainConfig& cfg) {
    TrainTrace trace;
    EncoderParams velocity = zeros_like(params);
    auto pv = param_views(params);
    auto vv = param_views(velocity);
    for (size_t step = 0; step < cfg.steps; ++step) {
        EncoderParams grads = zeros_like(params);
        double loss = next_item_loss_and_grad(params, batch, &grads);
        trace.loss.push_back(loss);
        auto gv = param_views(grads);
        for (size_t i = 0; i < pv.size(); ++i) {
            for (size_t j = 0; j < pv[i].size; ++j) {
                vv[i].data[j] = cfg.momentum * vv[i].data[j] - cfg.lr * gv[i].data[j];
                pv[i].data[j] += vv[i].data[j];
            }
        }
    }
    trace.loss.push_back(next_item_loss_and_grad(params, batch, nullptr));
    return trace;
}

}  // namespace coea
