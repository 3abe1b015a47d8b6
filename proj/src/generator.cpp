#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ramm/generator.hpp"

namespace ramm {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp();
  return e / e.sum();
}

Eigen::VectorXd position_nll(const Eigen::MatrixXd& logits,
                             const std::vector<int>& tokens) {
  const int T = static_cast<int>(tokens.size());
  if (logits.rows() != T)
    throw std::invalid_argument("position_nll: logits/token length mismatch");
  Eigen::VectorXd nll = Eigen::VectorXd::Zero(T);
  for (int t = 0; t + 1 < T; ++t) {
    double mx = logits.row(t).maxCoeff();
    double lse = std::log((logits.row(t).array() - mx).exp().sum()) + mx;
    nll(t) = lse - logits(t, tokens[t + 1]);
  }
  return nll;
}

LossBreakdown sequence_loss(const Eigen::MatrixXd& logits,
                            const TokenStream& stream, double alpha) {
  validate_stream(stream);
  Eigen::VectorXd nll = position_nll(logits, stream.tokens);
  LossBreakdown out;
  out.alpha = alpha;
  double main_sum = 0, retr_sum = 0;
  for (int t = 0; t + 1 < stream.size(); ++t) {
    if (stream.roles[t + 1] == Role::main) {
      main_sum += nll(t);
      ++out.main_targets;
    } else {
      retr_sum += nll(t);
      ++out.retr_targets;
    }
  }
  out.main = out.main_targets > 0 ? main_sum / out.main_targets : 0.0;
  out.retr = out.retr_targets > 0 ? retr_sum / out.retr_targets : 0.0;
  out.total = out.main + alpha * out.retr;
  return out;
}

Eigen::MatrixXd loss_dlogits(const Eigen::MatrixXd& logits,
                             const TokenStream& stream, double w_main,
                             double w_retr) {
  const int T = stream.size();
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(T, logits.cols());
  for (int t = 0; t + 1 < T; ++t) {
    const double w =
        stream.roles[t + 1] == Role::main ? w_main : w_retr;
    if (w == 0.0) continue;
    Eigen::VectorXd p = softmax(logits.row(t).transpose());
    dlogits.row(t) = (w * p).transpose();
    dlogits(t, stream.tokens[t + 1]) -= w;
  }
  return dlogits;
}

std::pair<double, long> sequence_nll(const Eigen::MatrixXd& logits,
                                     const TokenStream& stream,
                                     const VocabLayout& layout,
                                     NllFilter filter, bool main_only) {
  Eigen::VectorXd nll = position_nll(logits, stream.tokens);
  double sum = 0;
  long count = 0;
  for (int t = 0; t + 1 < stream.size(); ++t) {
    if (main_only && stream.roles[t + 1] != Role::main) continue;
    const int target = stream.tokens[t + 1];
    if (filter == NllFilter::text_targets && !layout.is_text(target)) continue;
    if (filter == NllFilter::image_targets && !layout.is_image(target))
      continue;
    sum += nll(t);
    ++count;
  }
  return {sum, count};
}

namespace {

// Maximal runs of content tokens (no structural markers inside).
std::vector<std::pair<int, int>> content_runs(const std::vector<int>& tokens,
                                              const VocabLayout& layout) {
  std::vector<std::pair<int, int>> runs;
  int start = -1;
  for (int i = 0; i <= static_cast<int>(tokens.size()); ++i) {
    const bool content = i < static_cast<int>(tokens.size()) &&
                         layout.is_content(tokens[i]);
    if (content && start < 0) start = i;
    if (!content && start >= 0) {
      runs.emplace_back(start, i);
      start = -1;
    }
  }
  return runs;
}

}  // namespace

TokenStream to_infill_instance(const TokenStream& stream, Rng& rng,
                               double p_infill, double span_frac,
                               const VocabLayout& layout) {
  for (Role r : stream.roles)
    if (r != Role::main)
      throw std::invalid_argument(
          "to_infill_instance: expected a main-only document stream");
  if (!rng.bernoulli(p_infill)) return stream;

  const auto runs = content_runs(stream.tokens, layout);
  int longest = 0;
  for (auto [b, e] : runs) longest = std::max(longest, e - b);
  if (longest < 1) return stream;  // nothing maskable

  const int max_span = static_cast<int>(
      std::ceil(span_frac * static_cast<double>(stream.size())));
  int span_len =
      static_cast<int>(rng.uniform_int(1, std::max(1, max_span)));
  // The sampled length is clamped to the longest content run so a valid
  // start always exists.
  span_len = std::min(span_len, longest);

  std::vector<int> starts;
  for (auto [b, e] : runs)
    for (int s = b; s + span_len <= e; ++s) starts.push_back(s);
  const int start = starts[rng.below(starts.size())];

  TokenStream out;
  out.main_begin = 0;
  for (int i = 0; i < start; ++i) out.push(stream.tokens[i], Role::main);
  out.push(kMaskId, Role::main);
  for (int i = start + span_len; i < stream.size(); ++i)
    out.push(stream.tokens[i], Role::main);
  out.push(kInfillId, Role::main);
  for (int i = start; i < start + span_len; ++i)
    out.push(stream.tokens[i], Role::main);
  return out;
}

TokenStream reconstruct_from_infill(const TokenStream& stream) {
  auto mask_it =
      std::find(stream.tokens.begin(), stream.tokens.end(), kMaskId);
  if (mask_it == stream.tokens.end()) return stream;
  const int mask_pos = static_cast<int>(mask_it - stream.tokens.begin());
  auto infill_it =
      std::find(stream.tokens.begin() + mask_pos, stream.tokens.end(),
                kInfillId);
  if (infill_it == stream.tokens.end())
    throw std::invalid_argument(
        "reconstruct_from_infill: <mask> without <infill>");
  const int infill_pos = static_cast<int>(infill_it - stream.tokens.begin());

  TokenStream out;
  out.main_begin = 0;
  for (int i = 0; i < mask_pos; ++i) out.push(stream.tokens[i], Role::main);
  for (int i = infill_pos + 1; i < stream.size(); ++i)
    out.push(stream.tokens[i], Role::main);
  for (int i = mask_pos + 1; i < infill_pos; ++i)
    out.push(stream.tokens[i], Role::main);
  return out;
}

namespace {

int sample_from_logits(const Eigen::VectorXd& logits,
                       const std::vector<int>& allowed,
                       const SamplingConfig& sampling, Rng& rng) {
  if (allowed.empty())
    throw std::logic_error("sampling: empty allowed token set");
  if (sampling.temperature <= 0.0) {
    // Argmax decoding; ties resolved toward the lowest id.
    int best = allowed[0];
    for (int id : allowed)
      if (logits(id) > logits(best)) best = id;
    return best;
  }
  Eigen::VectorXd scaled(allowed.size());
  for (size_t i = 0; i < allowed.size(); ++i)
    scaled(static_cast<Eigen::Index>(i)) =
        logits(allowed[i]) / sampling.temperature;
  Eigen::VectorXd probs = softmax(scaled);

  std::vector<int> order(allowed.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs(a) != probs(b)) return probs(a) > probs(b);
    return allowed[a] < allowed[b];
  });
  // Smallest prefix reaching the nucleus mass.
  double cum = 0;
  size_t keep = order.size();
  for (size_t i = 0; i < order.size(); ++i) {
    cum += probs(order[i]);
    if (cum >= sampling.top_p) {
      keep = i + 1;
      break;
    }
  }
  double mass = 0;
  for (size_t i = 0; i < keep; ++i) mass += probs(order[i]);
  double u = rng.uniform_real() * mass;
  double acc = 0;
  for (size_t i = 0; i < keep; ++i) {
    acc += probs(order[i]);
    if (u < acc) return allowed[order[i]];
  }
  return allowed[order[keep - 1]];
}

}  // namespace

std::vector<int> sample_continuation(const GeneratorParams& params,
                                     const std::vector<int>& prompt,
                                     const SamplingConfig& sampling,
                                     ContinuationKind kind,
                                     int n_image_tokens, Rng& rng) {
  const VocabLayout layout = params.config.layout();
  std::vector<int> tokens = prompt;
  std::vector<int> out;

  std::vector<int> text_ids, image_ids;
  for (int id = layout.text_base(); id < layout.image_base(); ++id)
    text_ids.push_back(id);
  for (int id = layout.image_base(); id < layout.total(); ++id)
    image_ids.push_back(id);
  std::vector<int> text_or_eos = text_ids;
  text_or_eos.push_back(kEosId);

  int budget;
  if (kind == ContinuationKind::image_span) {
    budget = n_image_tokens + 1;  // the closing '>' included
  } else if (kind == ContinuationKind::image_fill) {
    budget = n_image_tokens;
  } else {
    budget = sampling.max_new;
  }
  if (static_cast<int>(prompt.size()) + budget > params.config.max_seq_len)
    throw std::length_error("sample_continuation: prompt + max_new overflows max_seq_len");

  for (int step = 0; step < budget; ++step) {
    Eigen::MatrixXd logits = generator_forward(params, tokens);
    Eigen::VectorXd last = logits.row(logits.rows() - 1).transpose();

    int next;
    if (kind == ContinuationKind::image_span ||
        kind == ContinuationKind::image_fill) {
      if (step < n_image_tokens) {
        next = sample_from_logits(last, image_ids, sampling, rng);
      } else {
        next = kImgEndId;  // grammar: the span closes deterministically
      }
    } else {
      next = sample_from_logits(last, text_or_eos, sampling, rng);
      if (next == kEosId) break;
    }
    out.push_back(next);
    tokens.push_back(next);
  }
  return out;
}

Eigen::VectorXd next_token_distribution(const GeneratorParams& params,
                                        const std::vector<int>& tokens) {
  Eigen::MatrixXd logits = generator_forward(params, tokens);
  return softmax(logits.row(logits.rows() - 1).transpose());
}

}  // namespace ramm
