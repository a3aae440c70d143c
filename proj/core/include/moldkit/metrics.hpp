#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace moldkit {

// Non-interpolated average precision: the mean, over positives, of the
// precision at each positive's rank. Scores are ranked descending; equal
// scores keep their input order. Throws UndefinedMetric without at least one
// positive and one negative label.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// Fraction of samples where [score >= threshold] equals the label.
double accuracy(std::span<const double> scores, std::span<const int> labels,
                double threshold = 0.5);

struct SubsetResult {
  std::string name;
  double accuracy = 0.0;
  double average_precision = 0.0;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
};

struct EvalReport {
  std::vector<SubsetResult> subsets;
  double mean_accuracy = 0.0;
  double mean_ap = 0.0;
};

SubsetResult evaluate_subset(std::string name, std::span<const double> scores,
                             std::span<const int> labels, double threshold = 0.5);

// Unweighted arithmetic means over subsets.
EvalReport aggregate(std::vector<SubsetResult> subsets);

// Groups samples by subset tag (first-appearance order) and aggregates.
EvalReport evaluate_by_subset(std::span<const double> scores, std::span<const int> labels,
                              std::span<const std::string> subsets, double threshold = 0.5);

void to_json(nlohmann::json& j, const SubsetResult& r);
void from_json(const nlohmann::json& j, SubsetResult& r);
void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

// One-row table: Method, then "<subset> ACC" / "<subset> AP" per subset, then
// "Mean ACC" / "Mean AP". Values are percentages with one decimal.
std::string report_to_csv(const EvalReport& report, const std::string& method);

}  // namespace moldkit
