#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace nbl {

struct Vocab {
  std::vector<std::string> words;  // index -> word, UNK last
  std::unordered_map<std::string, std::size_t> index;
  std::size_t unk = 0;

  std::size_t size() const { return words.size(); }
  std::size_t encode(const std::string& w) const;
  const std::string& decode(std::size_t i) const;
};

struct LabeledSpan {
  std::size_t i = 0, j = 0;  // [i, j), j - i >= 2 after preprocessing
  std::string label;
};

struct GoldSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;       // POS, parallel to tokens
  std::vector<LabeledSpan> spans;      // non-preterminal constituents
  std::vector<std::size_t> heads;      // 1-based head per token, 0 = root
};

// One PTB s-expression per line; label suffixes stripped at the first
// '-' or '='. Empty lines are skipped with a warning on stderr.
// Unbalanced input throws with the offending line number.
std::vector<GoldSentence> read_bracketed_treebank(const std::string& path);

// Rebuild an s-expression from spans/tags/tokens (round-trip check and
// debug output). Spans must be properly nested.
std::string serialize_tree(const GoldSentence& s);

// PTB punctuation tag set {#, $, '', (, ), ,, ., :, ``}. Removes the
// tokens, remaps spans (dropping those reduced below width 2), and
// reattaches heads through removed tokens transitively. Returns false
// when fewer than 2 tokens remain (sentence excluded).
bool strip_punctuation(GoldSentence& s);

// Cap most-frequent surface forms, ties by first occurrence, plus UNK.
Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences,
                  std::size_t cap = 10000);

// One word per line in index order (UNK last); used so parse/eval runs
// see the same encoding the checkpoint was trained with.
void write_vocab(const std::string& path, const Vocab& v);
Vocab read_vocab(const std::string& path);

// Blank-line-separated blocks; per token the head column holds the
// 1-based head index with 0 = root (CoNLL column 7 when present, else
// the last column). Heads are aligned onto `sents` by order; a token
// count mismatch throws naming the sentence index.
void read_conll(const std::string& path, std::vector<GoldSentence>& sents);

// Plain tokenized text, one sentence per line.
std::vector<std::vector<std::string>> read_plain_text(const std::string& path);

// Batches of sentence indices: lengths outside [2, max_len] excluded,
// similar lengths grouped, order shuffled deterministically per
// (seed, epoch).
std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& lengths, std::size_t batch_size,
    std::size_t max_len, std::uint64_t seed, std::size_t epoch);

}  // namespace nbl
