#pragma once

#include <span>
#include <vector>

#include "npclust/model.hpp"

namespace npc {

struct ContingencyTable {
  std::vector<std::vector<long>> counts;  // pred x truth
  std::vector<long> row_sums;
  std::vector<long> col_sums;
  long total = 0;
};

// Labels are compacted first, so any non-negative values are accepted.
ContingencyTable contingency(std::span<const int> pred, std::span<const int> truth);

// Minimum-cost perfect assignment on a square matrix: result[row] = column.
std::vector<int> hungarian(const Matrix& cost);

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth);
double nmi(std::span<const int> pred, std::span<const int> truth);
double ari(std::span<const int> pred, std::span<const int> truth);

// Mean silhouette with Euclidean distances; points in singleton clusters score 0.
double silhouette(const FeatureMatrix& data, std::span<const int> labels, int threads = 1);

}  // namespace npc
