// SPDX-License-Identifier: Apache-2.0
//
// Binary classification metrics. Labels are 1 for fake, 0 for real; scores
// are P(fake). AUC uses the Mann-Whitney rank statistic with midrank tie
// correction, which equals all-pairs counting with ties worth one half.

#pragma once

#include <optional>
#include <vector>

#include "avdet/error.hpp"
#include "avdet/types.hpp"

namespace avdet {

struct Confusion {
  Index tp = 0;  // fake predicted fake
  Index tn = 0;  // real predicted real
  Index fp = 0;
  Index fn = 0;
};

/// Prediction threshold is 0.5; a score of exactly 0.5 counts as fake.
Confusion confusion_matrix(const std::vector<Real>& scores, const std::vector<int>& labels);

Real accuracy(const std::vector<Real>& scores, const std::vector<int>& labels);

/// Throws EmptyInputError unless both classes are present.
Real auc_score(const std::vector<Real>& scores, const std::vector<int>& labels);

struct Metrics {
  Real acc = 0;
  std::optional<Real> auc;  // absent when only one class was scored
  Confusion confusion;
};

Metrics compute_metrics(const std::vector<Real>& scores, const std::vector<int>& labels);

}  // namespace avdet
