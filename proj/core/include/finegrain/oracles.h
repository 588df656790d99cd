#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "finegrain/dataset.h"

namespace finegrain {

struct YesNoScores {
  double yes_logit = 0.0;
  double no_logit = 0.0;
};

// Two-way softmax, P(yes). Stable for arbitrarily large finite logits.
double normalize_yes_no(const YesNoScores& scores);

enum class AlignmentCategory { kObjectNoun, kAttributeAdjective, kActionVerb, kRelation };

inline constexpr std::array<AlignmentCategory, 4> kAllAlignmentCategories = {
    AlignmentCategory::kObjectNoun, AlignmentCategory::kAttributeAdjective,
    AlignmentCategory::kActionVerb, AlignmentCategory::kRelation};

std::string_view category_name(AlignmentCategory category);
AlignmentCategory parse_category(std::string_view name);

struct AlignmentQuestion {
  std::string question_text;
  std::string expected_answer;
  double yes_probability = 1.0;
};

// Word lists driving the categorizer. Text format: sections "[relations]",
// "[adjectives]", "[verbs]" and "[not_verbs]", one term per line, '#'
// comments. Relation terms may span several words ("in front of").
struct Lexicon {
  std::vector<std::vector<std::string>> relations;  // tokenized phrases
  std::set<std::string> adjectives;
  std::set<std::string> verbs;
  // Words ending in "-ing" that are not progressive verbs ("building").
  std::set<std::string> not_verbs;

  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::filesystem::path& path);
  // The lexicon compiled into the library (same contents as the bundled
  // data/lexicon.txt).
  static const Lexicon& builtin();
};

std::string_view builtin_lexicon_text();

// Lower-cased word tokens; punctuation other than apostrophes and hyphens is
// a separator.
std::vector<std::string> tokenize_question(std::string_view text);

// Ordered rules, first match wins: relation cue, progressive or do-support
// verb, copular or lexicon adjective, then object (existential and fallback).
AlignmentCategory categorize_question(const AlignmentQuestion& question,
                                      const Lexicon& lexicon = Lexicon::builtin());

// Mean yes-probability per category; categories without questions map to 1.
std::map<AlignmentCategory, double> alignment_scores(const std::vector<AlignmentQuestion>& questions,
                                                     const Lexicon& lexicon = Lexicon::builtin());

// Question-score file: one {"example_id","question_text","expected_answer",
// "yes_probability"} record per line. Grouped by example id.
std::map<std::string, std::vector<AlignmentQuestion>> parse_question_scores(std::string_view text);

// Row-major square matrix: entry (i, j) is the fraction of examples on which
// attributes i and j carry the same label.
struct AgreementMatrix {
  std::vector<std::string> attributes;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * attributes.size() + j]; }
};

AgreementMatrix attribute_agreement_matrix(const FeedbackMap& labels,
                                           const std::vector<std::string>& attributes);

}  // namespace finegrain
