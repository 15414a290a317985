#include "omni/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "omni/error.hpp"

namespace omni {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

void check_width(const FeatureMatrix& logits, std::size_t vocab) {
  if (logits.rows() > 0 && logits.cols() != vocab + 1) {
    throw DimensionError("ctc: logits are " + std::to_string(logits.cols()) + " wide, expected K+1 = " +
                         std::to_string(vocab + 1));
  }
}

}  // namespace

UnitSequence collapse(const Alignment& alignment) {
  std::vector<std::size_t> out;
  std::size_t prev = alignment.blank();
  bool have_prev = false;
  for (std::size_t tok : alignment.tokens) {
    if (tok > alignment.vocab) {
      throw IndexError("collapse: token " + std::to_string(tok) + " outside vocabulary of " +
                       std::to_string(alignment.vocab));
    }
    if (!(have_prev && tok == prev) && tok != alignment.blank()) out.push_back(tok);
    prev = tok;
    have_prev = true;
  }
  return UnitSequence(std::move(out), alignment.vocab);
}

std::size_t required_frames(const UnitSequence& target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

double ctc_neg_log_likelihood(const FeatureMatrix& logits, const UnitSequence& target, FeatureMatrix* grad) {
  const std::size_t vocab = target.vocab();
  check_width(logits, vocab);
  const std::size_t T = logits.rows();
  const std::size_t U = target.size();
  if (required_frames(target) > T) {
    throw InfeasibleTargetError("ctc: target of " + std::to_string(U) + " units needs " +
                                std::to_string(required_frames(target)) + " frames, logits have " +
                                std::to_string(T));
  }
  const std::size_t width = vocab + 1;
  const std::size_t blank = vocab;
  if (grad) *grad = FeatureMatrix(T, width);
  if (T == 0) return 0.0;  // empty target, empty alignment: probability one

  // Log-softmax per frame.
  FeatureMatrix logp(T, width);
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = logits.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < width; ++k) logp.at(t, k) = row[k] - lse;
  }

  // Blank-interleaved target: b y1 b y2 ... yU b.
  const std::size_t S = 2 * U + 1;
  std::vector<std::size_t> ext(S, blank);
  for (std::size_t u = 0; u < U; ++u) ext[2 * u + 1] = target[u];
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kNegInf);
  alpha[0] = logp.at(0, ext[0]);
  if (S > 1) alpha[1] = logp.at(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (can_skip(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      if (a != kNegInf) alpha[t * S + s] = a + logp.at(t, ext[s]);
    }
  }
  double log_p = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[(T - 1) * S + S - 2]);
  if (log_p == kNegInf) {
    throw InfeasibleTargetError("ctc: target has zero probability under the given logits");
  }
  if (!grad) return -log_p;

  std::vector<double> beta(T * S, kNegInf);
  beta[(T - 1) * S + S - 1] = logp.at(T - 1, ext[S - 1]);
  if (S > 1) beta[(T - 1) * S + S - 2] = logp.at(T - 1, ext[S - 2]);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && can_skip(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2]);
      if (b != kNegInf) beta[t * S + s] = b + logp.at(t, ext[s]);
    }
  }

  // d(-log P)/dz_tk = softmax_tk - (1/P) * sum_{s: ext[s]=k} alpha_t(s) beta_t(s) / y_tk
  std::vector<double> occ(width);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(occ.begin(), occ.end(), kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const double ab = alpha[t * S + s] + beta[t * S + s];
      if (ab != kNegInf) occ[ext[s]] = log_add(occ[ext[s]], ab - logp.at(t, ext[s]));
    }
    for (std::size_t k = 0; k < width; ++k) {
      const double posterior = occ[k] == kNegInf ? 0.0 : std::exp(occ[k] - log_p);
      grad->at(t, k) = std::exp(logp.at(t, k)) - posterior;
    }
  }
  return -log_p;
}

Tensor ctc_loss(const Tensor& logits, const UnitSequence& target) {
  FeatureMatrix grad;
  const double loss = ctc_neg_log_likelihood(to_matrix(logits), target, &grad);
  std::vector<double> g(grad.data().begin(), grad.data().end());
  return Tensor::make_op({}, {loss}, {logits}, [g = std::move(g)](Tensor::BackwardContext& c) {
    const double s = c.grad_out[0];
    for (std::size_t i = 0; i < g.size(); ++i) c.in_grad[0][i] += s * g[i];
  });
}

Alignment best_path(const FeatureMatrix& logits) {
  Alignment a;
  a.vocab = logits.cols() == 0 ? 0 : logits.cols() - 1;
  a.tokens.reserve(logits.rows());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto row = logits.row(t);
    a.tokens.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return a;
}

}  // namespace omni
