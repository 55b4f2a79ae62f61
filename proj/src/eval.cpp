#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nbl/eval.hpp"

namespace nbl {

namespace {

std::set<Span> nontrivial(const std::vector<Span>& spans, std::size_t l) {
  std::set<Span> out;
  for (const auto& s : spans) {
    if (s.first >= s.second || s.second > l)
      throw std::out_of_range("span (" + std::to_string(s.first) + ", " +
                              std::to_string(s.second) +
                              ") out of range for length " +
                              std::to_string(l));
    if (s.second - s.first < 2) continue;
    if (s.first == 0 && s.second == l) continue;
    out.insert(s);
  }
  return out;
}

}  // namespace

double sentence_f1(const std::vector<Span>& pred,
                   const std::vector<Span>& gold, std::size_t l) {
  std::set<Span> p = nontrivial(pred, l), g = nontrivial(gold, l);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : p) hit += g.count(s);
  double prec = double(hit) / double(p.size());
  double rec = double(hit) / double(g.size());
  return prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
}

void AttachmentTally::add(const std::vector<std::size_t>& pred,
                          const std::vector<std::size_t>& gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("attachment_scores: length mismatch");
  std::set<std::pair<std::size_t, std::size_t>> gold_pairs;
  for (std::size_t t = 0; t < gold.size(); ++t)
    gold_pairs.insert({std::min(t + 1, gold[t]), std::max(t + 1, gold[t])});
  for (std::size_t t = 0; t < pred.size(); ++t) {
    ++total;
    if (pred[t] == gold[t]) ++correct_directed;
    if (gold_pairs.count(
            {std::min(t + 1, pred[t]), std::max(t + 1, pred[t])}))
      ++correct_undirected;
  }
}

std::pair<double, double> attachment_scores(
    const std::vector<std::size_t>& pred,
    const std::vector<std::size_t>& gold) {
  AttachmentTally t;
  t.add(pred, gold);
  return {t.udas(), t.uuas()};
}

void LabelTally::add(const std::vector<Span>& pred,
                     const std::vector<LabeledSpan>& gold, std::size_t l) {
  std::set<Span> p = nontrivial(pred, l);
  for (const auto& g : gold) {
    if (g.j - g.i < 2 || (g.i == 0 && g.j == l)) continue;
    auto& [hit, n] = counts[g.label];
    ++n;
    if (p.count({g.i, g.j})) ++hit;
  }
}

std::map<std::string, double> LabelTally::recalls() const {
  std::map<std::string, double> out;
  for (const auto& [label, c] : counts)
    if (c.second > 0) out[label] = double(c.first) / double(c.second);
  return out;
}

EvalReport aggregate_runs(const std::vector<EvalReport>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");
  EvalReport out;
  double sum = 0.0, sum2 = 0.0;
  for (const auto& r : runs) {
    sum += r.f1_mean;
    sum2 += r.f1_mean * r.f1_mean;
    out.udas += r.udas;
    out.uuas += r.uuas;
    out.ppl += r.ppl;
    for (const auto& [label, rec] : r.label_recall)
      out.label_recall[label] += rec / double(runs.size());
  }
  double n = double(runs.size());
  out.f1_mean = sum / n;
  out.f1_std = std::sqrt(std::max(0.0, sum2 / n - out.f1_mean * out.f1_mean));
  out.udas /= n;
  out.uuas /= n;
  out.ppl /= n;
  return out;
}

std::string format_mean_std(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f ± %.1f", mean, sd);
  return buf;
}

void write_report_csv(const std::string& path, const EvalReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "f1_mean,f1_std,udas,uuas,ppl\n";
  os << r.f1_mean << "," << r.f1_std << "," << r.udas << "," << r.uuas << ","
     << r.ppl << "\n";
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-12s %s\n", "F1",
                format_mean_std(100.0 * r.f1_mean, 100.0 * r.f1_std).c_str());
  os << buf;
  std::snprintf(buf, sizeof buf, "%-12s %.1f\n", "UDAS", 100.0 * r.udas);
  os << buf;
  std::snprintf(buf, sizeof buf, "%-12s %.1f\n", "UUAS", 100.0 * r.uuas);
  os << buf;
  std::snprintf(buf, sizeof buf, "%-12s %.1f\n", "ppl", r.ppl);
  os << buf;
  for (const auto& [label, rec] : r.label_recall) {
    std::snprintf(buf, sizeof buf, "recall %-5s %.1f\n", label.c_str(),
                  100.0 * rec);
    os << buf;
  }
  return os.str();
}

}  // namespace nbl
