#include "finegrain/oracles.h"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "json.hpp"

#include "finegrain/config.h"
#include "finegrain/error.h"
#include "finegrain/io.h"

namespace finegrain {

using nlohmann::json;

double normalize_yes_no(const YesNoScores& scores) {
  if (!std::isfinite(scores.yes_logit) || !std::isfinite(scores.no_logit)) {
    throw Error(ErrorKind::kNumerical, "yes/no logits must be finite");
  }
  // Logistic of the logit difference, evaluated on the side that cannot
  // overflow.
  double d = scores.yes_logit - scores.no_logit;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  double e = std::exp(d);
  return e / (1.0 + e);
}

std::string_view category_name(AlignmentCategory category) {
  switch (category) {
    case AlignmentCategory::kObjectNoun: return "object_noun";
    case AlignmentCategory::kAttributeAdjective: return "attribute_adjective";
    case AlignmentCategory::kActionVerb: return "action_verb";
    case AlignmentCategory::kRelation: return "relation";
  }
  return "object_noun";
}

AlignmentCategory parse_category(std::string_view name) {
  for (AlignmentCategory c : kAllAlignmentCategories) {
    if (category_name(c) == name) return c;
  }
  throw Error(ErrorKind::kUnknownName, "unknown alignment category '" + std::string(name) + "'");
}

std::vector<std::string> tokenize_question(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : text) {
    auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) || c == '\'' || c == '-') {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  // Possessive suffixes carry no category signal.
  for (std::string& t : tokens) {
    if (t.size() > 2 && t.compare(t.size() - 2, 2, "'s") == 0) t.resize(t.size() - 2);
  }
  return tokens;
}

Lexicon Lexicon::parse(std::string_view text) {
  Lexicon lexicon;
  std::string section;
  int line_no = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      if (section != "relations" && section != "adjectives" && section != "verbs" &&
          section != "not_verbs") {
        throw Error(ErrorKind::kParse, "lexicon line " + std::to_string(line_no) +
                                           ": unknown section [" + section + "]");
      }
      continue;
    }
    std::vector<std::string> tokens = tokenize_question(line);
    if (tokens.empty()) continue;
    if (section == "relations") {
      lexicon.relations.push_back(std::move(tokens));
    } else if (section.empty()) {
      throw Error(ErrorKind::kParse, "lexicon line " + std::to_string(line_no) + ": term outside a section");
    } else {
      if (tokens.size() != 1) {
        throw Error(ErrorKind::kParse, "lexicon line " + std::to_string(line_no) + ": expected a single word");
      }
      std::set<std::string>& target = section == "adjectives" ? lexicon.adjectives
                                      : section == "verbs"    ? lexicon.verbs
                                                              : lexicon.not_verbs;
      target.insert(tokens[0]);
    }
  }
  return lexicon;
}

Lexicon Lexicon::load(const std::filesystem::path& path) { return parse(read_file(path)); }

const Lexicon& Lexicon::builtin() {
  static const Lexicon lexicon = parse(builtin_lexicon_text());
  return lexicon;
}

namespace {

bool contains_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) != tokens.end();
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_one_of(const std::string& s, std::initializer_list<std::string_view> words) {
  return std::find(words.begin(), words.end(), s) != words.end();
}

bool is_progressive(const std::string& word, const Lexicon& lexicon) {
  return word.size() > 4 && ends_with(word, "ing") && !lexicon.not_verbs.count(word);
}

bool has_adjective_suffix(const std::string& word) {
  if (word.size() < 6) return false;
  for (std::string_view suffix : {"ful", "ous", "ive", "less", "ish", "able", "ible"}) {
    if (ends_with(word, suffix)) return true;
  }
  return false;
}

bool is_relation(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  for (const auto& phrase : lexicon.relations) {
    if (contains_phrase(tokens, phrase)) return true;
  }
  return false;
}

bool is_action(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (is_progressive(tokens[i], lexicon)) return true;
  }
  // Do-support ("does the dog swim?") and bare verb forms anywhere after the
  // first word.
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (lexicon.verbs.count(tokens[i])) return true;
  }
  return false;
}

bool is_attribute(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  if (tokens.size() >= 2 && (tokens[0] == "what" || tokens[0] == "which") &&
      is_one_of(tokens[1], {"color", "colour", "colors", "colours", "shape", "size", "material",
                            "pattern", "texture"})) {
    return true;
  }
  if (tokens.size() >= 2 && tokens[0] == "how" && !is_one_of(tokens[1], {"many", "much"})) {
    return true;
  }
  for (const std::string& t : tokens) {
    if (lexicon.adjectives.count(t)) return true;
  }
  // Copular predicate: "is the <noun> <word>?" with an adjective-shaped word.
  if (tokens.size() >= 4 && is_one_of(tokens[0], {"is", "are", "was", "were"}) &&
      is_one_of(tokens[1], {"the", "this", "that", "these", "those"}) &&
      has_adjective_suffix(tokens.back())) {
    return true;
  }
  return false;
}

}  // namespace

AlignmentCategory categorize_question(const AlignmentQuestion& question, const Lexicon& lexicon) {
  std::vector<std::string> tokens = tokenize_question(question.question_text);
  if (tokens.empty()) return AlignmentCategory::kObjectNoun;
  if (is_relation(tokens, lexicon)) return AlignmentCategory::kRelation;
  if (is_action(tokens, lexicon)) return AlignmentCategory::kActionVerb;
  if (is_attribute(tokens, lexicon)) return AlignmentCategory::kAttributeAdjective;
  return AlignmentCategory::kObjectNoun;
}

std::map<AlignmentCategory, double> alignment_scores(const std::vector<AlignmentQuestion>& questions,
                                                     const Lexicon& lexicon) {
  std::map<AlignmentCategory, double> sums;
  std::map<AlignmentCategory, std::size_t> counts;
  for (const AlignmentQuestion& q : questions) {
    if (!(q.yes_probability >= 0.0 && q.yes_probability <= 1.0)) {
      throw Error(ErrorKind::kInvalidArgument, "yes_probability outside [0,1] for '" + q.question_text + "'");
    }
    AlignmentCategory c = categorize_question(q, lexicon);
    sums[c] += q.yes_probability;
    ++counts[c];
  }
  std::map<AlignmentCategory, double> out;
  for (AlignmentCategory c : kAllAlignmentCategories) {
    out[c] = counts[c] == 0 ? 1.0 : sums[c] / static_cast<double>(counts[c]);
  }
  return out;
}

std::map<std::string, std::vector<AlignmentQuestion>> parse_question_scores(std::string_view text) {
  std::map<std::string, std::vector<AlignmentQuestion>> out;
  int line = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line;
    if (trim(raw).empty()) continue;
    try {
      json j = json::parse(raw);
      AlignmentQuestion q;
      q.question_text = j.at("question_text").get<std::string>();
      q.expected_answer = j.value("expected_answer", "");
      q.yes_probability = j.at("yes_probability").get<double>();
      if (!(q.yes_probability >= 0.0 && q.yes_probability <= 1.0)) {
        throw Error(ErrorKind::kInvalidArgument, "yes_probability outside [0,1]");
      }
      out[j.at("example_id").get<std::string>()].push_back(std::move(q));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(line) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

AgreementMatrix attribute_agreement_matrix(const FeedbackMap& labels,
                                           const std::vector<std::string>& attributes) {
  if (labels.empty()) throw Error(ErrorKind::kMissing, "agreement matrix needs at least one example");
  const std::size_t m = attributes.size();
  std::vector<std::vector<bool>> columns(m);
  for (const auto& [id, fv] : labels) {
    for (std::size_t i = 0; i < m; ++i) {
      auto it = fv.attribute_labels.find(attributes[i]);
      if (it == fv.attribute_labels.end()) {
        throw Error(ErrorKind::kMissing, "example " + id + " lacks attribute '" + attributes[i] + "'");
      }
      columns[i].push_back(it->second);
    }
  }
  const auto n = static_cast<double>(labels.size());
  AgreementMatrix matrix{attributes, std::vector<double>(m * m, 1.0)};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      std::size_t same = 0;
      for (std::size_t k = 0; k < columns[i].size(); ++k) same += columns[i][k] == columns[j][k];
      double v = static_cast<double>(same) / n;
      matrix.values[i * m + j] = v;
      matrix.values[j * m + i] = v;
    }
  }
  return matrix;
}

}  // namespace finegrain
