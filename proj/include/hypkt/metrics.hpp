#pragma once

#include <vector>

namespace hypkt::toolkit {

// Probability that a random positive outranks a random negative, ties 1/2.
// Exact pair counting up to 10^4 samples, rank-sum above.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);
double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels);
double auc_rank_sum(const std::vector<double>& scores, const std::vector<int>& labels);

double acc(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);

// Accuracy of always predicting the more frequent label.
double majority_rate(const std::vector<int>& labels);

}  // namespace hypkt::toolkit
