#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "finegrain/dataset.h"

namespace finegrain {

// Binary decision tree over attribute labels. Each internal node tests one
// attribute; leaves are good (1) or bad (0).
class DecisionTreeTarget {
 public:
  struct Node;
  using Child = std::variant<bool, std::unique_ptr<Node>>;
  struct Node {
    std::string attribute;
    Child on_true;
    Child on_false;
  };

  static DecisionTreeTarget leaf(bool good);
  static DecisionTreeTarget node(std::string attribute, DecisionTreeTarget on_true,
                                 DecisionTreeTarget on_false);

  // Grammar (whitespace-insensitive, parentheses optional):
  //   tree := "good" | "bad" | "if" NAME "then" tree "else" tree | "(" tree ")"
  // Errors report line and column.
  static DecisionTreeTarget parse(std::string_view text);

  // good iff photorealistic AND visually_compelling AND NOT chaotic, tested
  // in that order.
  static DecisionTreeTarget default_tree();

  DecisionTreeTarget(const DecisionTreeTarget& other);
  DecisionTreeTarget& operator=(const DecisionTreeTarget& other);
  DecisionTreeTarget(DecisionTreeTarget&&) noexcept = default;
  DecisionTreeTarget& operator=(DecisionTreeTarget&&) noexcept = default;

  const Child& root() const { return root_; }

  // Distinct attributes referenced anywhere in the tree, in first-visit order.
  std::vector<std::string> attributes() const;

  // Throws unless every referenced attribute is in `attribute_names`.
  void check_attributes(const std::vector<std::string>& attribute_names) const;

  std::string to_string() const;

 private:
  explicit DecisionTreeTarget(Child root) : root_(std::move(root)) {}
  Child root_;
};

bool evaluate_tree(const DecisionTreeTarget& tree, const FeedbackVector& feedback);

LabelMap label_dataset_with_tree(const Dataset& dataset, const DecisionTreeTarget& tree,
                                 const FeedbackMap& feedback);

// Phi coefficient (Pearson correlation of two binary variables); 0 when the
// attribute column is constant.
double phi_coefficient(const std::vector<bool>& x, const std::vector<bool>& y);

// Attributes sorted by descending |phi| with the target (ties by name); the
// signed coefficient is reported.
std::vector<std::pair<std::string, double>> rank_attributes_by_target_correlation(
    const FeedbackMap& feedback, const LabelMap& target);

}  // namespace finegrain
