#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nbl/corpus.hpp"

namespace nbl {

using Span = std::pair<std::size_t, std::size_t>;

// Sentence-level unlabeled F1 after removing trivial spans (width 1 and
// the whole-sentence span). Both empty -> 1, exactly one empty -> 0.
double sentence_f1(const std::vector<Span>& pred,
                   const std::vector<Span>& gold, std::size_t l);

// Per-sentence attachment scores; heads are 1-based with 0 = root.
// first = UDAS, second = UUAS (root counted as the unordered pair {0, t}).
std::pair<double, double> attachment_scores(
    const std::vector<std::size_t>& pred,
    const std::vector<std::size_t>& gold);

// Corpus-level token tally for attachment scores.
struct AttachmentTally {
  std::size_t correct_directed = 0, correct_undirected = 0, total = 0;
  void add(const std::vector<std::size_t>& pred,
           const std::vector<std::size_t>& gold);
  double udas() const { return total ? double(correct_directed) / double(total) : 0.0; }
  double uuas() const { return total ? double(correct_undirected) / double(total) : 0.0; }
};

// Micro (corpus-level) recall per gold label over non-trivial spans;
// labels absent from the gold corpus are omitted.
struct LabelTally {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // hit, gold
  void add(const std::vector<Span>& pred,
           const std::vector<LabeledSpan>& gold, std::size_t l);
  std::map<std::string, double> recalls() const;
};

struct EvalReport {
  double f1_mean = 0.0, f1_std = 0.0;
  double udas = 0.0, uuas = 0.0, ppl = 0.0;
  std::map<std::string, double> label_recall;
};

// Mean and population std of F1 across seeds; other scores averaged.
EvalReport aggregate_runs(const std::vector<EvalReport>& runs);

// Table-2-style "60.4 ± 1.6" (values on a 0-100 scale, one decimal).
std::string format_mean_std(double mean, double sd);

// CSV with header exactly: f1_mean,f1_std,udas,uuas,ppl
void write_report_csv(const std::string& path, const EvalReport& r);

// Aligned text table including the per-label recall breakdown.
std::string report_table(const EvalReport& r);

}  // namespace nbl
