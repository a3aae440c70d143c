#include "moldkit/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "moldkit/error.hpp"

namespace moldkit {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("scores and labels differ in length (" +
                                std::to_string(scores.size()) + " vs " +
                                std::to_string(labels.size()) + ")");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
  }
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0 || positives == labels.size()) {
    throw UndefinedMetric("average precision needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return total / static_cast<double>(positives);
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_lengths(scores, labels);
  if (scores.empty()) throw std::invalid_argument("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(scores[i] >= threshold) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

SubsetResult evaluate_subset(std::string name, std::span<const double> scores,
                             std::span<const int> labels, double threshold) {
  SubsetResult r;
  r.name = std::move(name);
  r.accuracy = accuracy(scores, labels, threshold);
  r.average_precision = average_precision(scores, labels);
  r.n_fake = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.n_real = labels.size() - r.n_fake;
  return r;
}

EvalReport aggregate(std::vector<SubsetResult> subsets) {
  if (subsets.empty()) throw std::invalid_argument("aggregate needs at least one subset");
  EvalReport report;
  for (const auto& s : subsets) {
    report.mean_accuracy += s.accuracy;
    report.mean_ap += s.average_precision;
  }
  report.mean_accuracy /= static_cast<double>(subsets.size());
  report.mean_ap /= static_cast<double>(subsets.size());
  report.subsets = std::move(subsets);
  return report;
}

EvalReport evaluate_by_subset(std::span<const double> scores, std::span<const int> labels,
                              std::span<const std::string> subsets, double threshold) {
  check_lengths(scores, labels);
  if (subsets.size() != scores.size()) {
    throw std::invalid_argument("subset tags and scores differ in length");
  }
  std::vector<std::string> names;
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> groups;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(subsets[i]);
    if (inserted) names.push_back(subsets[i]);
    it->second.first.push_back(scores[i]);
    it->second.second.push_back(labels[i]);
  }
  std::vector<SubsetResult> results;
  for (const auto& name : names) {
    const auto& [s, y] = groups.at(name);
    results.push_back(evaluate_subset(name, s, y, threshold));
  }
  return aggregate(std::move(results));
}

void to_json(nlohmann::json& j, const SubsetResult& r) {
  j = {{"name", r.name},
       {"accuracy", r.accuracy},
       {"average_precision", r.average_precision},
       {"n_real", r.n_real},
       {"n_fake", r.n_fake}};
}

void from_json(const nlohmann::json& j, SubsetResult& r) {
  j.at("name").get_to(r.name);
  j.at("accuracy").get_to(r.accuracy);
  j.at("average_precision").get_to(r.average_precision);
  j.at("n_real").get_to(r.n_real);
  j.at("n_fake").get_to(r.n_fake);
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"subsets", r.subsets}, {"mean_accuracy", r.mean_accuracy}, {"mean_ap", r.mean_ap}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  j.at("subsets").get_to(r.subsets);
  j.at("mean_accuracy").get_to(r.mean_accuracy);
  j.at("mean_ap").get_to(r.mean_ap);
}

std::string report_to_csv(const EvalReport& report, const std::string& method) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return std::string(buf);
  };
  std::string header = "Method";
  std::string row = method;
  for (const auto& s : report.subsets) {
    header += "," + s.name + " ACC," + s.name + " AP";
    row += "," + pct(s.accuracy) + "," + pct(s.average_precision);
  }
  header += ",Mean ACC,Mean AP\n";
  row += "," + pct(report.mean_accuracy) + "," + pct(report.mean_ap) + "\n";
  return header + row;
}

}  // namespace moldkit
