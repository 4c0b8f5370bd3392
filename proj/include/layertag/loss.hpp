// Copyright 2026 The LayerTag Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>

#include "layertag/error.hpp"
#include "layertag/representation.hpp"

namespace layertag::training {

// Mean binary cross-entropy on sigmoid(logits) over every (sample, class)
// entry. Writes d(loss)/d(logits) when dlogits is non-null.
template <typename T>
T bce_with_logits(const Mat<T>& logits, const Mat<T>& targets, Mat<T>* dlogits = nullptr) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw InvalidInput("logits and targets differ in shape");
  }
  const T count = static_cast<T>(logits.size());
  if (dlogits != nullptr) dlogits->resize(logits.rows(), logits.cols());
  T total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const T z = logits(i, j);
      const T y = targets(i, j);
      // log(1 + exp(-|z|)) + max(z, 0) - z*y, stable for large |z|.
      total += std::log1p(std::exp(-std::abs(z))) + std::max(z, T{0}) - z * y;
      if (dlogits != nullptr) {
        const T s = static_cast<T>(1) / (static_cast<T>(1) + std::exp(-z));
        (*dlogits)(i, j) = (s - y) / count;
      }
    }
  }
  return total / count;
}

}  // namespace layertag::training
