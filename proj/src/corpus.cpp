#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nbl/corpus.hpp"

namespace nbl {

namespace {

std::string strip_label(const std::string& raw) {
  std::size_t cut = raw.find_first_of("-=");
  return cut == std::string::npos || cut == 0 ? raw : raw.substr(0, cut);
}

// recursive-descent s-expression parser over one line
struct BracketParser {
  const std::string& s;
  std::size_t pos = 0, line = 0;
  GoldSentence out;

  explicit BracketParser(const std::string& text, std::size_t line_no)
      : s(text), line(line_no) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("line " + std::to_string(line) + ": " + what);
  }
  void skip_ws() {
    while (pos < s.size() && std::isspace((unsigned char)s[pos])) ++pos;
  }
  std::string atom() {
    std::size_t b = pos;
    while (pos < s.size() && !std::isspace((unsigned char)s[pos]) &&
           s[pos] != '(' && s[pos] != ')')
      ++pos;
    if (pos == b) fail("expected a token or label");
    return s.substr(b, pos - b);
  }
  // returns the [begin, end) token range covered by this node
  std::pair<std::size_t, std::size_t> node() {
    skip_ws();
    if (pos >= s.size() || s[pos] != '(') fail("unbalanced brackets");
    ++pos;
    skip_ws();
    std::string label = strip_label(atom());
    skip_ws();
    std::size_t begin = out.tokens.size();
    bool leaf = pos < s.size() && s[pos] != '(';
    if (leaf) {
      out.tokens.push_back(atom());
      out.tags.push_back(label);
    } else {
      while (true) {
        skip_ws();
        if (pos >= s.size()) fail("unbalanced brackets");
        if (s[pos] == ')') break;
        node();
      }
    }
    skip_ws();
    if (pos >= s.size() || s[pos] != ')') fail("unbalanced brackets");
    ++pos;
    std::size_t end = out.tokens.size();
    if (!leaf) out.spans.push_back({begin, end, label});
    return {begin, end};
  }
  GoldSentence parse() {
    node();
    skip_ws();
    if (pos != s.size()) fail("trailing text after the tree");
    // parents before children: i ascending, then wider spans first
    std::sort(out.spans.begin(), out.spans.end(),
              [](const LabeledSpan& a, const LabeledSpan& b) {
                return a.i != b.i ? a.i < b.i : a.j > b.j;
              });
    return std::move(out);
  }
};

const std::set<std::string>& punct_tags() {
  static const std::set<std::string> t = {"#", "$",  "''", "(", ")",
                                          ",", ".",  ":",  "``"};
  return t;
}

}  // namespace

std::size_t Vocab::encode(const std::string& w) const {
  auto it = index.find(w);
  return it == index.end() ? unk : it->second;
}

const std::string& Vocab::decode(std::size_t i) const {
  if (i >= words.size()) throw std::out_of_range("Vocab: bad index");
  return words[i];
}

std::vector<GoldSentence> read_bracketed_treebank(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<GoldSentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      std::cerr << path << ": line " << line_no << " empty, skipped\n";
      continue;
    }
    out.push_back(BracketParser(line, line_no).parse());
  }
  return out;
}

std::string serialize_tree(const GoldSentence& s) {
  // spans are properly nested; emit recursively from the sorted list
  std::function<std::string(std::size_t, std::size_t, std::size_t&)> emit =
      [&](std::size_t i, std::size_t j, std::size_t& next) -> std::string {
    std::string body;
    std::size_t t = i;
    while (t < j) {
      // the next span starting at t and contained in (i, j), if any
      const LabeledSpan* inner = nullptr;
      for (std::size_t k = next; k < s.spans.size(); ++k) {
        if (s.spans[k].i < t) continue;
        if (s.spans[k].i > t || s.spans[k].j > j) break;
        inner = &s.spans[k];
        next = k + 1;
        break;
      }
      if (!body.empty()) body += " ";
      if (inner) {
        std::size_t save = next;
        body += "(" + inner->label + " " +
                emit(inner->i, inner->j, save) + ")";
        next = save;
        t = inner->j;
      } else {
        body += "(" + s.tags[t] + " " + s.tokens[t] + ")";
        ++t;
      }
    }
    return body;
  };
  if (s.spans.empty() || s.spans[0].i != 0 || s.spans[0].j != s.tokens.size())
    throw std::invalid_argument("serialize_tree: no covering span");
  std::size_t next = 1;
  return "(" + s.spans[0].label + " " +
         emit(0, s.tokens.size(), next) + ")";
}

bool strip_punctuation(GoldSentence& s) {
  std::size_t n = s.tokens.size();
  std::vector<bool> drop(n, false);
  for (std::size_t t = 0; t < n; ++t)
    drop[t] = punct_tags().count(s.tags[t]) > 0;
  std::vector<std::size_t> new_at(n + 1, 0);  // old -> count kept before
  for (std::size_t t = 0; t < n; ++t)
    new_at[t + 1] = new_at[t] + (drop[t] ? 0 : 1);
  std::size_t kept = new_at[n];
  if (kept < 2) return false;

  if (!s.heads.empty()) {
    std::vector<std::size_t> heads(kept);
    for (std::size_t t = 0; t < n; ++t) {
      if (drop[t]) continue;
      std::size_t h = s.heads[t];  // 1-based, 0 = root
      while (h != 0 && drop[h - 1]) h = s.heads[h - 1];
      heads[new_at[t]] = h == 0 ? 0 : new_at[h - 1] + 1;
    }
    s.heads = std::move(heads);
  }

  std::vector<LabeledSpan> spans;
  for (const auto& sp : s.spans) {
    LabeledSpan r{new_at[sp.i], new_at[sp.j], sp.label};
    if (r.j - r.i >= 2) spans.push_back(r);
  }
  spans.erase(std::unique(spans.begin(), spans.end(),
                          [](const LabeledSpan& a, const LabeledSpan& b) {
                            return a.i == b.i && a.j == b.j;
                          }),
              spans.end());
  s.spans = std::move(spans);

  std::vector<std::string> tokens, tags;
  for (std::size_t t = 0; t < n; ++t) {
    if (drop[t]) continue;
    tokens.push_back(s.tokens[t]);
    tags.push_back(s.tags[t]);
  }
  s.tokens = std::move(tokens);
  s.tags = std::move(tags);
  return true;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences,
                  std::size_t cap) {
  if (sentences.empty()) throw std::invalid_argument("build_vocab: no data");
  std::unordered_map<std::string, std::size_t> freq, first;
  std::size_t order = 0;
  for (const auto& s : sentences)
    for (const auto& w : s) {
      if (!freq.count(w)) first[w] = order++;
      ++freq[w];
    }
  std::vector<std::string> types;
  for (const auto& [w, f] : freq) types.push_back(w);
  std::sort(types.begin(), types.end(),
            [&](const std::string& a, const std::string& b) {
              if (freq[a] != freq[b]) return freq[a] > freq[b];
              return first[a] < first[b];
            });
  if (types.size() > cap) types.resize(cap);
  Vocab v;
  v.words = std::move(types);
  v.words.push_back("<unk>");
  v.unk = v.words.size() - 1;
  for (std::size_t k = 0; k < v.words.size(); ++k) v.index[v.words[k]] = k;
  return v;
}

void write_vocab(const std::string& path, const Vocab& v) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (const auto& w : v.words) os << w << "\n";
}

Vocab read_vocab(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  Vocab v;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) v.words.push_back(line);
  if (v.words.empty()) throw std::runtime_error(path + ": empty vocabulary");
  v.unk = v.words.size() - 1;
  for (std::size_t k = 0; k < v.words.size(); ++k) v.index[v.words[k]] = k;
  return v;
}

void read_conll(const std::string& path, std::vector<GoldSentence>& sents) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::vector<std::size_t> heads;
  std::size_t sent = 0;
  auto flush = [&]() {
    if (heads.empty()) return;
    if (sent >= sents.size())
      throw std::runtime_error("conll sentence " + std::to_string(sent) +
                               ": no matching treebank sentence");
    if (heads.size() != sents[sent].tokens.size())
      throw std::runtime_error(
          "conll sentence " + std::to_string(sent) + ": " +
          std::to_string(heads.size()) + " tokens vs " +
          std::to_string(sents[sent].tokens.size()) + " in the treebank");
    sents[sent].heads = heads;
    heads.clear();
    ++sent;
  };
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      flush();
      continue;
    }
    std::istringstream ls(line);
    std::vector<std::string> cols;
    std::string c;
    while (ls >> c) cols.push_back(c);
    if (cols.size() < 3)
      throw std::runtime_error("conll sentence " + std::to_string(sent) +
                               ": too few columns");
    const std::string& h = cols.size() >= 7 ? cols[6] : cols.back();
    heads.push_back(std::stoul(h));
  }
  flush();
}

std::vector<std::vector<std::string>> read_plain_text(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::string>> out;
  std::string line, w;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    while (ls >> w) toks.push_back(w);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& lengths, std::size_t batch_size,
    std::size_t max_len, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> eligible;
  for (std::size_t k = 0; k < lengths.size(); ++k)
    if (lengths[k] >= 2 && lengths[k] <= max_len) eligible.push_back(k);
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + epoch);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  std::stable_sort(eligible.begin(), eligible.end(),
                   [&](std::size_t a, std::size_t b) {
                     return lengths[a] < lengths[b];
                   });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t k = 0; k < eligible.size(); k += batch_size)
    batches.emplace_back(
        eligible.begin() + long(k),
        eligible.begin() + long(std::min(k + batch_size, eligible.size())));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace nbl
