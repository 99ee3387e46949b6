// SPDX-License-Identifier: Apache-2.0

#include "avdet/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace avdet {

namespace {

void check_sizes(const std::vector<Real>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("metrics: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw EmptyInputError("metrics: no samples");
}

}  // namespace

Confusion confusion_matrix(const std::vector<Real>& scores, const std::vector<int>& labels) {
  check_sizes(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool fake = labels[i] != 0;
    const bool pred_fake = scores[i] >= 0.5;
    if (fake && pred_fake) ++c.tp;
    if (fake && !pred_fake) ++c.fn;
    if (!fake && pred_fake) ++c.fp;
    if (!fake && !pred_fake) ++c.tn;
  }
  return c;
}

Real accuracy(const std::vector<Real>& scores, const std::vector<int>& labels) {
  const Confusion c = confusion_matrix(scores, labels);
  return static_cast<Real>(c.tp + c.tn) / static_cast<Real>(scores.size());
}

Real auc_score(const std::vector<Real>& scores, const std::vector<int>& labels) {
  check_sizes(scores, labels);
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += (l != 0);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw EmptyInputError("auc: undefined without both classes (" + std::to_string(n_pos) +
                          " fake, " + std::to_string(n_neg) + " real)");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks: every member of a tie group gets the mean of the ranks the
  // group spans (1-based). Rank sums of half-integers are exact in doubles
  // at any realistic set size.
  Real pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const Real midrank = static_cast<Real>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) pos_rank_sum += midrank;
    }
    i = j;
  }
  const Real n_pos_r = static_cast<Real>(n_pos);
  return (pos_rank_sum - n_pos_r * (n_pos_r + 1) / 2.0) /
         (n_pos_r * static_cast<Real>(n_neg));
}

Metrics compute_metrics(const std::vector<Real>& scores, const std::vector<int>& labels) {
  Metrics m;
  m.confusion = confusion_matrix(scores, labels);
  m.acc = accuracy(scores, labels);
  bool has_pos = false, has_neg = false;
  for (int l : labels) (l != 0 ? has_pos : has_neg) = true;
  if (has_pos && has_neg) m.auc = auc_score(scores, labels);
  return m;
}

}  // namespace avdet
