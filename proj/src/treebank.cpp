#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "adscreen/text.hpp"

namespace adscreen {

namespace {

struct Rule {
  std::regex re;
  std::string repl;
};

const std::vector<Rule>& punct_rules() {
  // Order matters: ellipses before the final-period rule, specials before
  // the generic contraction pass so "'tis" is not mangled by quote handling.
  static const std::vector<Rule> rules = {
      {std::regex(R"(([:,])([^\d]))"), " $1 $2"},
      {std::regex(R"(([:,])$)"), " $1 "},
      {std::regex(R"(\.\.\.)"), " ... "},
      {std::regex(R"(([;@#$%&]))"), " $1 "},
      // Sentence-final period, possibly followed by closing brackets/quotes.
      {std::regex(R"(([^\.])(\.)([\]\)}>"']*)\s*$)"), "$1 $2$3 "},
      {std::regex(R"(([?!]))"), " $1 "},
      {std::regex(R"(([\]\[\(\)\{\}<>]))"), " $1 "},
      {std::regex(R"(--)"), " -- "},
      {std::regex(R"(("))"), " $1 "},
      // Trailing apostrophe (possessive plural), not part of a contraction.
      {std::regex(R"(([^'\s])'(\s|$))"), "$1 ' $2"},
  };
  return rules;
}

const std::vector<Rule>& special_rules() {
  static const std::vector<Rule> rules = {
      {std::regex(R"(\b(can)(not)\b)", std::regex::icase), "$1 $2"},
      {std::regex(R"(\b(gim)(me)\b)", std::regex::icase), "$1 $2"},
      {std::regex(R"(\b(gon)(na)\b)", std::regex::icase), "$1 $2"},
      {std::regex(R"(\b(got)(ta)\b)", std::regex::icase), "$1 $2"},
      {std::regex(R"(\b(lem)(me)\b)", std::regex::icase), "$1 $2"},
      {std::regex(R"(\b(wan)(na)\b)", std::regex::icase), "$1 $2"},
      {std::regex(R"(\b(d')(ye)\b)", std::regex::icase), "$1 $2"},
      {std::regex(R"(\b(more)('n)\b)", std::regex::icase), "$1 $2"},
      {std::regex(R"((^|\s)('t)(is|was)\b)", std::regex::icase), "$1$2 $3"},
  };
  return rules;
}

const std::regex& contraction_re() {
  static const std::regex re(R"((\w)('ll|'re|'ve|n't|'s|'m|'d)\b)", std::regex::icase);
  return re;
}

}  // namespace

std::vector<std::string> tokenize_treebank(const std::string& text) {
  std::string s = text;
  for (const auto& r : punct_rules()) s = std::regex_replace(s, r.re, r.repl);
  for (const auto& r : special_rules()) s = std::regex_replace(s, r.re, r.repl);
  // Two passes resolve stacked contractions ("she'd've" -> she 'd 've).
  s = std::regex_replace(s, contraction_re(), "$1 $2");
  s = std::regex_replace(s, contraction_re(), "$1 $2");

  std::vector<std::string> tokens;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace adscreen
