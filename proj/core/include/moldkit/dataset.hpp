#pragma once

#include <string>
#include <vector>

#include "moldkit/backbone.hpp"

namespace moldkit {

// Feature stacks with binary labels (1 = fake) and optional subset tags.
struct LabeledSet {
  std::vector<LayerFeatureSet> features;
  std::vector<int> labels;
  std::vector<std::string> subsets;  // empty, or one tag per sample

  std::size_t size() const { return features.size(); }
  bool empty() const { return features.empty(); }

  void push_back(LayerFeatureSet f, int label, std::string subset = {}) {
    features.push_back(std::move(f));
    labels.push_back(label);
    subsets.push_back(std::move(subset));
  }

  // Throws std::invalid_argument on unequal lengths, non-binary labels or
  // feature stacks that are not [layers, dim].
  void validate(std::size_t layers, std::size_t dim) const;

  // Subset tag of sample i, "all" when untagged.
  std::string subset_of(std::size_t i) const;
};

}  // namespace moldkit
