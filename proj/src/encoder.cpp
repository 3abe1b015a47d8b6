#include "ramm/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ramm/binary_io.hpp"
#include "ramm/checkpoint.hpp"
#include "ramm/rng.hpp"

namespace ramm {

namespace {

constexpr double kNormEps = 1e-12;

Eigen::VectorXd l2_normalize(const Eigen::VectorXd& z) {
  double n = z.norm();
  if (!(n > kNormEps))
    throw std::runtime_error("encoder: zero-norm embedding");
  return z / n;
}

// Mean-pooled table rows -> linear map. Rows are summed in sorted order so
// a token permutation yields a bit-identical embedding. Returns the
// pre-normalization vector and optionally the pooled mean (for gradients).
Eigen::VectorXd tower_forward(const TowerParams& tower,
                              const std::vector<int>& rows,
                              Eigen::VectorXd* pooled_out = nullptr) {
  if (rows.empty())
    throw std::invalid_argument("encoder: empty token list");
  std::vector<int> sorted = rows;
  std::sort(sorted.begin(), sorted.end());
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(tower.table.cols());
  for (int r : sorted) {
    if (r < 0 || r >= tower.table.rows())
      throw std::invalid_argument("encoder: token id " + std::to_string(r) +
                                  " outside table");
    pooled += tower.table.row(r);
  }
  pooled /= static_cast<double>(rows.size());
  if (pooled_out) *pooled_out = pooled;
  return tower.w * pooled + tower.b;
}

std::vector<int> text_rows(const std::vector<int>& tokens) {
  std::vector<int> rows;
  rows.reserve(tokens.size());
  for (int t : tokens) rows.push_back(t - kNumReservedIds);
  return rows;
}

}  // namespace

double relevance(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("relevance: dimension mismatch (" +
                                std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()) + ")");
  return a.values.dot(b.values);
}

Embedding embed_text(const std::vector<int>& tokens,
                     const DualEncoderParams& params) {
  return {l2_normalize(tower_forward(params.text, text_rows(tokens)))};
}

Embedding embed_image(const std::vector<int>& codes,
                      const DualEncoderParams& params) {
  return {l2_normalize(tower_forward(params.image, codes))};
}

namespace {

// Backward through normalize(W * pooled + b) given d(embedding).
void tower_backward(const TowerParams& tower, const std::vector<int>& rows,
                    const Eigen::VectorXd& pooled, const Eigen::VectorXd& z,
                    const Eigen::VectorXd& e, const Eigen::VectorXd& de,
                    TowerParams& grads) {
  double n = z.norm();
  Eigen::VectorXd dz = (de - e * e.dot(de)) / n;
  grads.w += dz * pooled.transpose();
  grads.b += dz;
  Eigen::VectorXd dpooled = tower.w.transpose() * dz;
  double inv = 1.0 / static_cast<double>(rows.size());
  for (int r : rows) grads.table.row(r) += inv * dpooled.transpose();
}

TowerParams zero_like(const TowerParams& t) {
  return {Eigen::MatrixXd::Zero(t.table.rows(), t.table.cols()),
          Eigen::MatrixXd::Zero(t.w.rows(), t.w.cols()),
          Eigen::VectorXd::Zero(t.b.size())};
}

}  // namespace

double contrastive_loss_and_grads(const DualEncoderParams& params,
                                  const std::vector<ContrastivePair>& batch,
                                  EncoderGrads* grads) {
  const int B = static_cast<int>(batch.size());
  if (B < 2)
    throw std::invalid_argument(
        "contrastive loss undefined for batch_size < 2");
  const int d = static_cast<int>(params.text.w.rows());
  const double tau = params.temperature;

  Eigen::MatrixXd T(B, d), V(B, d);           // unit embeddings
  Eigen::MatrixXd Tz(B, d), Vz(B, d);         // pre-normalization
  Eigen::MatrixXd Tp(B, params.text.table.cols()),
      Vp(B, params.image.table.cols());       // pooled means
  std::vector<std::vector<int>> trows(B), vrows(B);
  for (int i = 0; i < B; ++i) {
    trows[i] = text_rows(batch[i].text_tokens);
    vrows[i] = batch[i].image_codes;
    Eigen::VectorXd pooled;
    Eigen::VectorXd z = tower_forward(params.text, trows[i], &pooled);
    Tz.row(i) = z.transpose();
    Tp.row(i) = pooled.transpose();
    T.row(i) = l2_normalize(z).transpose();
    z = tower_forward(params.image, vrows[i], &pooled);
    Vz.row(i) = z.transpose();
    Vp.row(i) = pooled.transpose();
    V.row(i) = l2_normalize(z).transpose();
  }

  Eigen::MatrixXd U = T * V.transpose();  // cosine similarities
  Eigen::MatrixXd S = U / tau;

  // Symmetric cross-entropy against the diagonal.
  auto log_softmax_rows = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m;
    for (int i = 0; i < m.rows(); ++i) {
      double mx = m.row(i).maxCoeff();
      double lse = std::log((m.row(i).array() - mx).exp().sum()) + mx;
      out.row(i).array() -= lse;
    }
    return out;
  };
  Eigen::MatrixXd ls_rows = log_softmax_rows(S);
  Eigen::MatrixXd ls_cols = log_softmax_rows(S.transpose());
  double loss = 0;
  for (int i = 0; i < B; ++i) loss -= 0.5 * (ls_rows(i, i) + ls_cols(i, i));
  loss /= B;

  if (!grads) return loss;

  // dL/dS: softmax minus one-hot for both directions, halved and averaged.
  Eigen::MatrixXd P_rows = ls_rows.array().exp();
  Eigen::MatrixXd P_cols = ls_cols.array().exp();
  Eigen::MatrixXd dS =
      0.5 / B * (P_rows + P_cols.transpose() -
                 2.0 * Eigen::MatrixXd::Identity(B, B));

  grads->text = zero_like(params.text);
  grads->image = zero_like(params.image);
  grads->temperature = -(dS.array() * S.array()).sum() / tau;

  Eigen::MatrixXd dT = dS * V / tau;
  Eigen::MatrixXd dV = dS.transpose() * T / tau;
  for (int i = 0; i < B; ++i) {
    tower_backward(params.text, trows[i], Tp.row(i).transpose(),
                   Tz.row(i).transpose(), T.row(i).transpose(),
                   dT.row(i).transpose(), grads->text);
    tower_backward(params.image, vrows[i], Vp.row(i).transpose(),
                   Vz.row(i).transpose(), V.row(i).transpose(),
                   dV.row(i).transpose(), grads->image);
  }
  return loss;
}

namespace {

template <class M>
struct AdamState {
  M m, v;
  explicit AdamState(const M& shape)
      : m(M::Zero(shape.rows(), shape.cols())),
        v(M::Zero(shape.rows(), shape.cols())) {}
};

template <class M>
void adam_update(M& param, const M& grad, AdamState<M>& st, double lr,
                 double b1, double b2, double eps, int64_t t) {
  st.m = b1 * st.m + (1 - b1) * grad;
  st.v = (b2 * st.v.array() + (1 - b2) * grad.array().square()).matrix();
  double bc1 = 1 - std::pow(b1, static_cast<double>(t));
  double bc2 = 1 - std::pow(b2, static_cast<double>(t));
  param.array() -=
      lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + eps);
}

}  // namespace

DualEncoderParams train_dual_encoder(const std::vector<ContrastivePair>& pairs,
                                     const DualEncoderConfig& config,
                                     EncoderTrainLog* log) {
  if (config.batch_size < 2)
    throw std::invalid_argument(
        "train_dual_encoder: batch_size < 2 makes the contrastive loss "
        "undefined");
  if (static_cast<int>(pairs.size()) < config.batch_size)
    throw std::invalid_argument("train_dual_encoder: fewer pairs than one batch");

  // Table sizes from the data: text ids are absolute, image codes raw.
  int max_text_row = 0, max_code = 0;
  for (const auto& p : pairs) {
    if (p.text_tokens.empty() || p.image_codes.empty())
      throw std::invalid_argument("train_dual_encoder: empty pair side");
    for (int t : p.text_tokens)
      max_text_row = std::max(max_text_row, t - kNumReservedIds);
    for (int c : p.image_codes) max_code = std::max(max_code, c);
  }

  Rng rng(rng_mix(config.seed, 0xe2c0de2));
  auto randn_mat = [&](int rows, int cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
  };

  DualEncoderParams params;
  params.config = config;
  params.temperature = config.temperature_init;
  params.text.table = randn_mat(max_text_row + 1, config.hidden, 0.1);
  params.text.w = randn_mat(config.dim, config.hidden, 0.1);
  params.text.b = Eigen::VectorXd::Zero(config.dim);
  params.image.table = randn_mat(max_code + 1, config.hidden, 0.1);
  params.image.w = randn_mat(config.dim, config.hidden, 0.1);
  params.image.b = Eigen::VectorXd::Zero(config.dim);

  AdamState<Eigen::MatrixXd> s_tt(params.text.table), s_tw(params.text.w),
      s_it(params.image.table), s_iw(params.image.w);
  AdamState<Eigen::VectorXd> s_tb(params.text.b), s_ib(params.image.b);
  double tau_m = 0, tau_v = 0;

  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int64_t t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0;
    int n_batches = 0;
    for (size_t start = 0; start + config.batch_size <= order.size();
         start += config.batch_size) {
      std::vector<ContrastivePair> batch;
      for (int j = 0; j < config.batch_size; ++j)
        batch.push_back(pairs[order[start + j]]);
      EncoderGrads grads;
      double loss = contrastive_loss_and_grads(params, batch, &grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_dual_encoder: non-finite loss");
      epoch_loss += loss;
      ++n_batches;
      ++t;
      adam_update(params.text.table, grads.text.table, s_tt, config.lr,
                  config.adam_beta1, config.adam_beta2, 1e-8, t);
      adam_update(params.text.w, grads.text.w, s_tw, config.lr,
                  config.adam_beta1, config.adam_beta2, 1e-8, t);
      adam_update(params.text.b, grads.text.b, s_tb, config.lr,
                  config.adam_beta1, config.adam_beta2, 1e-8, t);
      adam_update(params.image.table, grads.image.table, s_it, config.lr,
                  config.adam_beta1, config.adam_beta2, 1e-8, t);
      adam_update(params.image.w, grads.image.w, s_iw, config.lr,
                  config.adam_beta1, config.adam_beta2, 1e-8, t);
      adam_update(params.image.b, grads.image.b, s_ib, config.lr,
                  config.adam_beta1, config.adam_beta2, 1e-8, t);
      // Scalar Adam step for the trainable temperature, then clamp.
      tau_m = config.adam_beta1 * tau_m + (1 - config.adam_beta1) * grads.temperature;
      tau_v = config.adam_beta2 * tau_v +
              (1 - config.adam_beta2) * grads.temperature * grads.temperature;
      double bc1 = 1 - std::pow(config.adam_beta1, static_cast<double>(t));
      double bc2 = 1 - std::pow(config.adam_beta2, static_cast<double>(t));
      params.temperature -=
          config.lr * (tau_m / bc1) / (std::sqrt(tau_v / bc2) + 1e-8);
      params.temperature = std::min(config.temperature_max,
                                    std::max(config.temperature_min,
                                             params.temperature));
    }
    if (log) log->loss_per_epoch.push_back(epoch_loss / std::max(1, n_batches));
  }
  return params;
}

Embedding FrozenEncoder::embed_text_str(const std::string& text) const {
  return embed_text(vocab.encode(text), params);
}

Embedding FrozenEncoder::embed_image_pixels(
    const Image& img, const std::vector<int>& kept_patches) const {
  std::vector<int> codes = codebook.tokenize(img);
  if (!kept_patches.empty()) {
    std::vector<int> kept;
    for (int idx : kept_patches) {
      if (idx < 0 || idx >= static_cast<int>(codes.size()))
        throw std::invalid_argument("kept_patches index out of range");
      kept.push_back(codes[idx]);
    }
    codes = std::move(kept);
  }
  return embed_image(codes, params);
}

Embedding FrozenEncoder::embed_document(const Document& doc) const {
  validate_document(doc);
  // Concatenate same-kind segments before encoding: one text vector, one
  // image vector.
  std::string text;
  std::vector<int> codes;
  for (const Segment& seg : doc.segments) {
    if (seg.kind == SegmentKind::text) {
      if (!text.empty()) text += ' ';
      text += seg.text;
    } else {
      std::vector<int> c = codebook.tokenize(seg.pixels);
      if (!seg.kept_patches.empty()) {
        std::vector<int> kept;
        for (int idx : seg.kept_patches) {
          if (idx < 0 || idx >= static_cast<int>(c.size()))
            throw std::invalid_argument("kept_patches index out of range");
          kept.push_back(c[idx]);
        }
        c = std::move(kept);
      }
      codes.insert(codes.end(), c.begin(), c.end());
    }
  }
  const bool has_text = !text.empty();
  const bool has_image = !codes.empty();
  if (has_text && !has_image) return embed_text(vocab.encode(text), params);
  if (!has_text && has_image) return embed_image(codes, params);
  Embedding t = embed_text(vocab.encode(text), params);
  Embedding v = embed_image(codes, params);
  Eigen::VectorXd avg = 0.5 * (t.values + v.values);
  return {l2_normalize(avg)};
}

namespace {

void write_tower(BinWriter& w, const TowerParams& t) {
  w.mat(t.table);
  w.mat(t.w);
  w.vec(t.b);
}
TowerParams read_tower(BinReader& r) {
  TowerParams t;
  t.table = r.mat();
  t.w = r.mat();
  t.b = r.vec();
  return t;
}

}  // namespace

void write_encoder_section(CheckpointFile& ck, const DualEncoderParams& p) {
  ck.set("denc", [&](BinWriter& w) {
    write_tower(w, p.text);
    write_tower(w, p.image);
    w.f64(p.temperature);
    w.u64(static_cast<uint64_t>(p.config.dim));
    w.u64(static_cast<uint64_t>(p.config.hidden));
  });
}

DualEncoderParams read_encoder_section(const CheckpointFile& ck) {
  BinReader r = ck.reader("denc");
  DualEncoderParams p;
  p.text = read_tower(r);
  p.image = read_tower(r);
  p.temperature = r.f64();
  p.config.dim = static_cast<int>(r.u64());
  p.config.hidden = static_cast<int>(r.u64());
  return p;
}

void DualEncoderParams::save(const std::string& path) const {
  CheckpointFile ck;
  write_encoder_section(ck, *this);
  ck.save(path);
}

DualEncoderParams DualEncoderParams::load(const std::string& path) {
  return read_encoder_section(CheckpointFile::load(path));
}

}  // namespace ramm
