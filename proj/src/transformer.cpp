// Forward and backward passes of the causal Transformer. Hand-derived
// backprop; checked against central finite differences in the test suite.

#include <cmath>
#include <stdexcept>

#include "ramm/generator.hpp"

namespace ramm {

void GeneratorConfig::validate() const {
  if (text_vocab_size <= 0 || codebook_size <= 0)
    throw std::invalid_argument("generator config: vocabulary not set");
  if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || max_seq_len <= 0)
    throw std::invalid_argument("generator config: non-positive dimension");
  if (d_model % n_heads != 0)
    throw std::invalid_argument(
        "generator config: d_model must be divisible by n_heads");
  if (!(p_infill >= 0.0 && p_infill <= 1.0))
    throw std::invalid_argument("generator config: p_infill must be in [0,1]");
  if (!(span_frac > 0.0 && span_frac <= 1.0))
    throw std::invalid_argument("generator config: span_frac must be in (0,1]");
}

GeneratorParams GeneratorParams::init(const GeneratorConfig& config,
                                      Rng& rng) {
  config.validate();
  const int d = config.d_model;
  auto randn = [&rng](Eigen::Index rows, Eigen::Index cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
  };
  GeneratorParams p;
  p.config = config;
  p.tok_emb = randn(config.vocab_size(), d, 0.02);
  p.pos_emb = randn(config.max_seq_len, d, 0.02);
  const double resid_scale = 0.02 / std::sqrt(2.0 * config.n_layers);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerParams lp;
    lp.ln1_g = Eigen::VectorXd::Ones(d);
    lp.ln1_b = Eigen::VectorXd::Zero(d);
    lp.w_qkv = randn(d, 3 * d, 0.02);
    lp.b_qkv = Eigen::VectorXd::Zero(3 * d);
    lp.w_o = randn(d, d, resid_scale);
    lp.b_o = Eigen::VectorXd::Zero(d);
    lp.ln2_g = Eigen::VectorXd::Ones(d);
    lp.ln2_b = Eigen::VectorXd::Zero(d);
    lp.w_fc = randn(d, 4 * d, 0.02);
    lp.b_fc = Eigen::VectorXd::Zero(4 * d);
    lp.w_pr = randn(4 * d, d, resid_scale);
    lp.b_pr = Eigen::VectorXd::Zero(d);
    p.layers.push_back(std::move(lp));
  }
  p.lnf_g = Eigen::VectorXd::Ones(d);
  p.lnf_b = Eigen::VectorXd::Zero(d);
  return p;
}

GeneratorParams GeneratorParams::zeros_like(const GeneratorParams& other) {
  GeneratorParams p;
  p.config = other.config;
  p.tok_emb = Eigen::MatrixXd::Zero(other.tok_emb.rows(), other.tok_emb.cols());
  p.pos_emb = Eigen::MatrixXd::Zero(other.pos_emb.rows(), other.pos_emb.cols());
  for (const LayerParams& ol : other.layers) {
    LayerParams lp;
    lp.ln1_g = Eigen::VectorXd::Zero(ol.ln1_g.size());
    lp.ln1_b = Eigen::VectorXd::Zero(ol.ln1_b.size());
    lp.w_qkv = Eigen::MatrixXd::Zero(ol.w_qkv.rows(), ol.w_qkv.cols());
    lp.b_qkv = Eigen::VectorXd::Zero(ol.b_qkv.size());
    lp.w_o = Eigen::MatrixXd::Zero(ol.w_o.rows(), ol.w_o.cols());
    lp.b_o = Eigen::VectorXd::Zero(ol.b_o.size());
    lp.ln2_g = Eigen::VectorXd::Zero(ol.ln2_g.size());
    lp.ln2_b = Eigen::VectorXd::Zero(ol.ln2_b.size());
    lp.w_fc = Eigen::MatrixXd::Zero(ol.w_fc.rows(), ol.w_fc.cols());
    lp.b_fc = Eigen::VectorXd::Zero(ol.b_fc.size());
    lp.w_pr = Eigen::MatrixXd::Zero(ol.w_pr.rows(), ol.w_pr.cols());
    lp.b_pr = Eigen::VectorXd::Zero(ol.b_pr.size());
    p.layers.push_back(std::move(lp));
  }
  p.lnf_g = Eigen::VectorXd::Zero(other.lnf_g.size());
  p.lnf_b = Eigen::VectorXd::Zero(other.lnf_b.size());
  return p;
}

std::vector<TensorView> tensor_views(GeneratorParams& p) {
  std::vector<TensorView> views;
  auto add = [&views](const std::string& name, auto& tensor) {
    views.push_back({name, tensor.data(), static_cast<size_t>(tensor.size())});
  };
  add("tok_emb", p.tok_emb);
  add("pos_emb", p.pos_emb);
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const std::string base = "layer" + std::to_string(l) + ".";
    LayerParams& lp = p.layers[l];
    add(base + "ln1_g", lp.ln1_g);
    add(base + "ln1_b", lp.ln1_b);
    add(base + "w_qkv", lp.w_qkv);
    add(base + "b_qkv", lp.b_qkv);
    add(base + "w_o", lp.w_o);
    add(base + "b_o", lp.b_o);
    add(base + "ln2_g", lp.ln2_g);
    add(base + "ln2_b", lp.ln2_b);
    add(base + "w_fc", lp.w_fc);
    add(base + "b_fc", lp.b_fc);
    add(base + "w_pr", lp.w_pr);
    add(base + "b_pr", lp.b_pr);
  }
  add("lnf_g", p.lnf_g);
  add("lnf_b", p.lnf_b);
  return views;
}

namespace {

constexpr double kLnEps = 1e-5;

struct LnCache {
  Eigen::MatrixXd xhat;     // normalized input
  Eigen::VectorXd inv_std;  // per row
};

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& g,
                           const Eigen::VectorXd& b, LnCache* cache) {
  const Eigen::Index T = x.rows(), d = x.cols();
  Eigen::MatrixXd out(T, d);
  if (cache) {
    cache->xhat.resize(T, d);
    cache->inv_std.resize(T);
  }
  for (Eigen::Index i = 0; i < T; ++i) {
    double mean = x.row(i).mean();
    double var = (x.row(i).array() - mean).square().mean();
    double inv_std = 1.0 / std::sqrt(var + kLnEps);
    Eigen::RowVectorXd xhat = (x.row(i).array() - mean) * inv_std;
    out.row(i) = (xhat.array() * g.transpose().array()).matrix() +
                 b.transpose();
    if (cache) {
      cache->xhat.row(i) = xhat;
      cache->inv_std(i) = inv_std;
    }
  }
  return out;
}

void layer_norm_backward(const Eigen::MatrixXd& dy, const LnCache& cache,
                         const Eigen::VectorXd& g, Eigen::MatrixXd& dx,
                         Eigen::VectorXd& dg, Eigen::VectorXd& db) {
  const Eigen::Index T = dy.rows(), d = dy.cols();
  dx.resize(T, d);
  for (Eigen::Index i = 0; i < T; ++i) {
    Eigen::RowVectorXd dxhat =
        (dy.row(i).array() * g.transpose().array()).matrix();
    double m1 = dxhat.mean();
    double m2 = (dxhat.array() * cache.xhat.row(i).array()).mean();
    dx.row(i) = cache.inv_std(i) *
                (dxhat.array() - m1 - cache.xhat.row(i).array() * m2).matrix();
    dg += (dy.row(i).array() * cache.xhat.row(i).array()).matrix().transpose();
    db += dy.row(i).transpose();
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

struct LayerCache {
  LnCache ln1, ln2;
  Eigen::MatrixXd x_in;    // block input
  Eigen::MatrixXd a;       // ln1 output
  Eigen::MatrixXd qkv;     // T x 3d
  std::vector<Eigen::MatrixXd> attn;  // per head, T x T row-softmax (strict upper zero)
  Eigen::MatrixXd heads;   // concatenated attention outputs, T x d
  Eigen::MatrixXd x_mid;   // after attention residual
  Eigen::MatrixXd b;       // ln2 output
  Eigen::MatrixXd h;       // pre-gelu, T x 4d
  Eigen::MatrixXd g;       // gelu(h)
};

}  // namespace

struct ForwardCache {
  Eigen::MatrixXd x0;
  std::vector<LayerCache> layers;
  LnCache lnf;
  Eigen::MatrixXd y;  // final layer-norm output
};

ForwardCache* new_forward_cache() { return new ForwardCache(); }
void free_forward_cache(ForwardCache* c) { delete c; }

Eigen::MatrixXd generator_forward(const GeneratorParams& params,
                                  const std::vector<int>& tokens,
                                  ForwardCache* cache) {
  const GeneratorConfig& cfg = params.config;
  const int T = static_cast<int>(tokens.size());
  if (T == 0) throw std::invalid_argument("forward: empty token sequence");
  if (T > cfg.max_seq_len)
    throw std::length_error("forward: sequence length " + std::to_string(T) +
                            " exceeds max_seq_len " +
                            std::to_string(cfg.max_seq_len));
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Eigen::MatrixXd x(T, d);
  for (int i = 0; i < T; ++i) {
    const int t = tokens[i];
    if (t < 0 || t >= cfg.vocab_size())
      throw std::invalid_argument("forward: unknown token id " +
                                  std::to_string(t));
    x.row(i) = params.tok_emb.row(t) + params.pos_emb.row(i);
  }
  if (cache) {
    cache->x0 = x;
    cache->layers.assign(static_cast<size_t>(cfg.n_layers), LayerCache{});
  }

  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& lp = params.layers[l];
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x_in = x;

    LnCache ln1_local;
    Eigen::MatrixXd a =
        layer_norm(x, lp.ln1_g, lp.ln1_b, lc ? &lc->ln1 : &ln1_local);
    Eigen::MatrixXd qkv =
        (a * lp.w_qkv).rowwise() + lp.b_qkv.transpose();

    Eigen::MatrixXd heads(T, d);
    std::vector<Eigen::MatrixXd> attn_store;
    for (int h = 0; h < H; ++h) {
      auto q = qkv.middleCols(h * dh, dh);
      auto k = qkv.middleCols(d + h * dh, dh);
      auto v = qkv.middleCols(2 * d + h * dh, dh);
      Eigen::MatrixXd s = (q * k.transpose()) * scale;
      Eigen::MatrixXd p = Eigen::MatrixXd::Zero(T, T);
      for (int i = 0; i < T; ++i) {
        // Causal: row i attends to positions 0..i only. The softmax and
        // the value mix below read nothing past i, so later tokens cannot
        // perturb earlier logits even at the bit level.
        auto row = s.row(i).head(i + 1);
        double mx = row.maxCoeff();
        Eigen::RowVectorXd e = (row.array() - mx).exp();
        p.row(i).head(i + 1) = e / e.sum();
        heads.row(i).segment(h * dh, dh).noalias() =
            p.row(i).head(i + 1) * v.topRows(i + 1);
      }
      if (lc) attn_store.push_back(std::move(p));
    }
    Eigen::MatrixXd attn_out = (heads * lp.w_o).rowwise() + lp.b_o.transpose();
    Eigen::MatrixXd x_mid = x + attn_out;

    LnCache ln2_local;
    Eigen::MatrixXd b =
        layer_norm(x_mid, lp.ln2_g, lp.ln2_b, lc ? &lc->ln2 : &ln2_local);
    Eigen::MatrixXd hmat = (b * lp.w_fc).rowwise() + lp.b_fc.transpose();
    Eigen::MatrixXd g = hmat.unaryExpr([](double v) { return gelu(v); });
    Eigen::MatrixXd mlp_out = (g * lp.w_pr).rowwise() + lp.b_pr.transpose();
    Eigen::MatrixXd x_next = x_mid + mlp_out;

    if (lc) {
      lc->a = std::move(a);
      lc->qkv = std::move(qkv);
      lc->attn = std::move(attn_store);
      lc->heads = std::move(heads);
      lc->x_mid = x_mid;
      lc->b = std::move(b);
      lc->h = std::move(hmat);
      lc->g = std::move(g);
    }
    x = std::move(x_next);
  }

  LnCache lnf_local;
  Eigen::MatrixXd y =
      layer_norm(x, params.lnf_g, params.lnf_b, cache ? &cache->lnf : &lnf_local);
  if (cache) cache->y = y;
  return y * params.tok_emb.transpose();
}

void generator_backward(const GeneratorParams& params,
                        const std::vector<int>& tokens,
                        const ForwardCache& cache,
                        const Eigen::MatrixXd& dlogits,
                        GeneratorParams& grads) {
  const GeneratorConfig& cfg = params.config;
  const int T = static_cast<int>(tokens.size());
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (dlogits.rows() != T || dlogits.cols() != cfg.vocab_size())
    throw std::invalid_argument("backward: dlogits shape mismatch");

  // logits = y * E^T (tied embeddings).
  Eigen::MatrixXd dy = dlogits * params.tok_emb;
  grads.tok_emb.noalias() += dlogits.transpose() * cache.y;

  Eigen::MatrixXd dx;
  layer_norm_backward(dy, cache.lnf, params.lnf_g, dx, grads.lnf_g,
                      grads.lnf_b);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerParams& lp = params.layers[l];
    const LayerCache& lc = cache.layers[l];
    LayerParams& gl = grads.layers[l];

    // MLP branch: x_next = x_mid + gelu(ln2(x_mid) W_fc + b) W_pr + b.
    Eigen::MatrixXd dmlp = dx;  // residual passthrough handled below
    Eigen::MatrixXd dg = dmlp * lp.w_pr.transpose();
    gl.w_pr.noalias() += lc.g.transpose() * dmlp;
    gl.b_pr += dmlp.colwise().sum().transpose();
    Eigen::MatrixXd dh_mat =
        dg.array() * lc.h.unaryExpr([](double v) { return gelu_grad(v); }).array();
    Eigen::MatrixXd db_mat = dh_mat * lp.w_fc.transpose();
    gl.w_fc.noalias() += lc.b.transpose() * dh_mat;
    gl.b_fc += dh_mat.colwise().sum().transpose();
    Eigen::MatrixXd dx_mid_from_ln;
    layer_norm_backward(db_mat, lc.ln2, lp.ln2_g, dx_mid_from_ln, gl.ln2_g,
                        gl.ln2_b);
    Eigen::MatrixXd dx_mid = dx + dx_mid_from_ln;

    // Attention branch: x_mid = x_in + heads W_o + b.
    Eigen::MatrixXd dattn = dx_mid;
    Eigen::MatrixXd dheads = dattn * lp.w_o.transpose();
    gl.w_o.noalias() += lc.heads.transpose() * dattn;
    gl.b_o += dattn.colwise().sum().transpose();

    Eigen::MatrixXd dqkv = Eigen::MatrixXd::Zero(T, 3 * d);
    for (int h = 0; h < H; ++h) {
      auto q = lc.qkv.middleCols(h * dh, dh);
      auto k = lc.qkv.middleCols(d + h * dh, dh);
      auto v = lc.qkv.middleCols(2 * d + h * dh, dh);
      const Eigen::MatrixXd& p = lc.attn[h];
      auto dout = dheads.middleCols(h * dh, dh);

      Eigen::MatrixXd dp = dout * v.transpose();       // only lower part used
      dqkv.middleCols(2 * d + h * dh, dh).noalias() +=
          p.transpose() * dout;                        // dV
      Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(T, T);
      for (int i = 0; i < T; ++i) {
        auto prow = p.row(i).head(i + 1);
        auto dprow = dp.row(i).head(i + 1);
        double dot = (prow.array() * dprow.array()).sum();
        ds.row(i).head(i + 1) =
            (prow.array() * (dprow.array() - dot)).matrix() * scale;
      }
      dqkv.middleCols(h * dh, dh).noalias() += ds * k;             // dQ
      dqkv.middleCols(d + h * dh, dh).noalias() += ds.transpose() * q;  // dK
    }
    Eigen::MatrixXd da = dqkv * lp.w_qkv.transpose();
    gl.w_qkv.noalias() += lc.a.transpose() * dqkv;
    gl.b_qkv += dqkv.colwise().sum().transpose();

    Eigen::MatrixXd dx_in_from_ln;
    layer_norm_backward(da, lc.ln1, lp.ln1_g, dx_in_from_ln, gl.ln1_g,
                        gl.ln1_b);
    dx = dx_mid + dx_in_from_ln;
  }

  for (int i = 0; i < T; ++i) {
    grads.tok_emb.row(tokens[i]) += dx.row(i);
    grads.pos_emb.row(i) += dx.row(i);
  }
}

}  // namespace ramm
