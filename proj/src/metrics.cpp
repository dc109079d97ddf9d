#include "hypkt/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "hypkt/error.hpp"

namespace hypkt::toolkit {

namespace {

constexpr std::size_t kExactLimit = 10000;

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw Error(Errc::shape_mismatch, "scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                                          std::to_string(labels.size()) + ")");
  }
  if (scores.empty()) throw Error(Errc::invalid_argument, "metric over empty input");
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(Errc::invalid_argument, "labels must be 0 or 1");
  }
}

std::pair<std::size_t, std::size_t> class_counts(const std::vector<int>& labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(Errc::invalid_argument, "auc needs both classes present");
  return {pos, neg};
}

}  // namespace

double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const auto [pos, neg] = class_counts(labels);
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auc_rank_sum(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const auto [pos, neg] = class_counts(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks (1-based) over tie groups.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  return scores.size() <= kExactLimit ? auc_pairwise(scores, labels) : auc_rank_sum(scores, labels);
}

double acc(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  check_inputs(scores, labels);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] >= threshold ? 1 : 0;
    if (pred == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

double majority_rate(const std::vector<int>& labels) {
  if (labels.empty()) throw Error(Errc::invalid_argument, "majority rate of empty labels");
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n = static_cast<double>(labels.size());
  return std::max(pos, n - pos) / n;
}

}  // namespace hypkt::toolkit
