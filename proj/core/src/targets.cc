#include "finegrain/targets.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "finegrain/error.h"

namespace finegrain {
namespace {

using Node = DecisionTreeTarget::Node;
using Child = DecisionTreeTarget::Child;

Child clone(const Child& child) {
  if (const bool* leaf = std::get_if<bool>(&child)) return *leaf;
  const Node& n = *std::get<std::unique_ptr<Node>>(child);
  auto copy = std::make_unique<Node>();
  copy->attribute = n.attribute;
  copy->on_true = clone(n.on_true);
  copy->on_false = clone(n.on_false);
  return copy;
}

struct Token {
  std::string text;
  int line;
  int column;
};

class TreeParser {
 public:
  explicit TreeParser(std::string_view text) { tokenize(text); }

  Child parse_all() {
    Child root = parse_tree();
    if (pos_ < tokens_.size()) fail(tokens_[pos_], "unexpected trailing token '" + tokens_[pos_].text + "'");
    return root;
  }

 private:
  void tokenize(std::string_view text) {
    int line = 1;
    int column = 1;
    std::size_t i = 0;
    while (i < text.size()) {
      char c = text[i];
      if (c == '#') {
        while (i < text.size() && text[i] != '\n') ++i;
        continue;
      }
      if (c == '\n') {
        ++line;
        column = 1;
        ++i;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++column;
        ++i;
        continue;
      }
      if (c == '(' || c == ')') {
        tokens_.push_back({std::string(1, c), line, column});
        ++column;
        ++i;
        continue;
      }
      Token tok{"", line, column};
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) && text[i] != '(' &&
             text[i] != ')' && text[i] != '#') {
        tok.text += text[i];
        ++column;
        ++i;
      }
      tokens_.push_back(std::move(tok));
    }
    end_line_ = line;
    end_column_ = column;
  }

  [[noreturn]] void fail(const Token& at, const std::string& message) const {
    throw Error(ErrorKind::kParse, "tree " + std::to_string(at.line) + ":" + std::to_string(at.column) + ": " + message);
  }

  const Token& next(const char* expected) {
    if (pos_ >= tokens_.size()) {
      Token eof{"", end_line_, end_column_};
      fail(eof, std::string("unexpected end of input, expected ") + expected);
    }
    return tokens_[pos_++];
  }

  void expect(const char* keyword) {
    const Token& tok = next(keyword);
    if (tok.text != keyword) fail(tok, std::string("expected '") + keyword + "', found '" + tok.text + "'");
  }

  Child parse_tree() {
    const Token& tok = next("'if', 'good', 'bad' or '('");
    if (tok.text == "good") return true;
    if (tok.text == "bad") return false;
    if (tok.text == "(") {
      Child inner = parse_tree();
      expect(")");
      return inner;
    }
    if (tok.text != "if") fail(tok, "expected 'if', 'good', 'bad' or '(', found '" + tok.text + "'");
    const Token& name = next("an attribute name");
    if (name.text == "then" || name.text == "else" || name.text == "if" || name.text == "good" ||
        name.text == "bad" || name.text == ")") {
      fail(name, "expected an attribute name, found '" + name.text + "'");
    }
    auto node = std::make_unique<Node>();
    node->attribute = name.text;
    expect("then");
    node->on_true = parse_tree();
    expect("else");
    node->on_false = parse_tree();
    return node;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int end_line_ = 1;
  int end_column_ = 1;
};

void collect(const Child& child, std::vector<std::string>& out) {
  if (std::holds_alternative<bool>(child)) return;
  const Node& n = *std::get<std::unique_ptr<Node>>(child);
  if (std::find(out.begin(), out.end(), n.attribute) == out.end()) out.push_back(n.attribute);
  collect(n.on_true, out);
  collect(n.on_false, out);
}

void render(const Child& child, std::string& out) {
  if (const bool* leaf = std::get_if<bool>(&child)) {
    out += *leaf ? "good" : "bad";
    return;
  }
  const Node& n = *std::get<std::unique_ptr<Node>>(child);
  out += "(if " + n.attribute + " then ";
  render(n.on_true, out);
  out += " else ";
  render(n.on_false, out);
  out += ")";
}

}  // namespace

DecisionTreeTarget DecisionTreeTarget::leaf(bool good) { return DecisionTreeTarget(Child(good)); }

DecisionTreeTarget DecisionTreeTarget::node(std::string attribute, DecisionTreeTarget on_true,
                                            DecisionTreeTarget on_false) {
  auto n = std::make_unique<Node>();
  n->attribute = std::move(attribute);
  n->on_true = std::move(on_true.root_);
  n->on_false = std::move(on_false.root_);
  return DecisionTreeTarget(Child(std::move(n)));
}

DecisionTreeTarget DecisionTreeTarget::parse(std::string_view text) {
  return DecisionTreeTarget(TreeParser(text).parse_all());
}

DecisionTreeTarget DecisionTreeTarget::default_tree() {
  return node("photorealistic",
              node("visually_compelling", node("chaotic", leaf(false), leaf(true)), leaf(false)),
              leaf(false));
}

DecisionTreeTarget::DecisionTreeTarget(const DecisionTreeTarget& other) : root_(clone(other.root_)) {}

DecisionTreeTarget& DecisionTreeTarget::operator=(const DecisionTreeTarget& other) {
  if (this != &other) root_ = clone(other.root_);
  return *this;
}

std::vector<std::string> DecisionTreeTarget::attributes() const {
  std::vector<std::string> out;
  collect(root_, out);
  return out;
}

void DecisionTreeTarget::check_attributes(const std::vector<std::string>& attribute_names) const {
  for (const std::string& a : attributes()) {
    if (std::find(attribute_names.begin(), attribute_names.end(), a) == attribute_names.end()) {
      throw Error(ErrorKind::kUnknownName, "tree references unknown attribute '" + a + "'");
    }
  }
}

std::string DecisionTreeTarget::to_string() const {
  std::string out;
  render(root_, out);
  return out;
}

bool evaluate_tree(const DecisionTreeTarget& tree, const FeedbackVector& feedback) {
  const Child* current = &tree.root();
  while (true) {
    if (const bool* leaf = std::get_if<bool>(current)) return *leaf;
    const Node& n = *std::get<std::unique_ptr<Node>>(*current);
    auto it = feedback.attribute_labels.find(n.attribute);
    if (it == feedback.attribute_labels.end()) {
      throw Error(ErrorKind::kMissing, "feedback lacks tree attribute '" + n.attribute + "'");
    }
    current = it->second ? &n.on_true : &n.on_false;
  }
}

LabelMap label_dataset_with_tree(const Dataset& dataset, const DecisionTreeTarget& tree,
                                 const FeedbackMap& feedback) {
  LabelMap labels;
  for (const Example& ex : dataset.examples) {
    auto it = feedback.find(ex.example_id);
    if (it == feedback.end()) throw Error(ErrorKind::kMissing, "no feedback for example " + ex.example_id);
    labels[ex.example_id] = evaluate_tree(tree, it->second);
  }
  return labels;
}

double phi_coefficient(const std::vector<bool>& x, const std::vector<bool>& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::kDimensionMismatch, "phi: length mismatch");
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i]) {
      (y[i] ? n11 : n10) += 1;
    } else {
      (y[i] ? n01 : n00) += 1;
    }
  }
  double denom = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00);
  if (denom == 0.0) return 0.0;
  return (n11 * n00 - n10 * n01) / std::sqrt(denom);
}

std::vector<std::pair<std::string, double>> rank_attributes_by_target_correlation(
    const FeedbackMap& feedback, const LabelMap& target) {
  if (target.size() < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two examples");
  std::vector<bool> y;
  std::set<std::string> names;
  bool any_true = false;
  bool any_false = false;
  for (const auto& [id, label] : target) {
    y.push_back(label);
    (label ? any_true : any_false) = true;
    auto it = feedback.find(id);
    if (it == feedback.end()) throw Error(ErrorKind::kMissing, "no feedback for example " + id);
    for (const auto& [name, v] : it->second.attribute_labels) names.insert(name);
  }
  if (!any_true || !any_false) throw Error(ErrorKind::kDegenerate, "target is constant; correlation undefined");

  std::vector<std::pair<std::string, double>> ranked;
  for (const std::string& name : names) {
    std::vector<bool> x;
    x.reserve(y.size());
    for (const auto& [id, label] : target) {
      const auto& labels = feedback.at(id).attribute_labels;
      auto it = labels.find(name);
      if (it == labels.end()) throw Error(ErrorKind::kMissing, "example " + id + " lacks attribute '" + name + "'");
      x.push_back(it->second);
    }
    ranked.emplace_back(name, phi_coefficient(x, y));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return std::abs(a.second) > std::abs(b.second);
  });
  return ranked;
}

}  // namespace finegrain
