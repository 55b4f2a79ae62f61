// Acceptance suite: one [PASS]/[FAIL] line per criterion. Criterion 6
// is a soft check (reported, never fails the run). Run a subset with
// `acceptance 1 4 5`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nbl/corpus.hpp"
#include "nbl/decode.hpp"
#include "nbl/eval.hpp"
#include "nbl/grammar.hpp"
#include "nbl/inside.hpp"
#include "nbl/neural.hpp"
#include "nbl/train.hpp"

#ifndef NBL_BIN_DIR
#define NBL_BIN_DIR "."
#endif
#ifndef NBL_DATA_DIR
#define NBL_DATA_DIR "data"
#endif

using namespace nbl;
using Clock = std::chrono::steady_clock;

namespace {

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

SymbolInventory tiny_inventory(std::size_t n_N, std::size_t n_P,
                               std::size_t v) {
  SymbolInventory inv;
  inv.n_N = n_N;
  inv.n_P = n_P;
  for (std::size_t i = 0; i < v; ++i)
    inv.vocab.push_back("w" + std::to_string(i));
  inv.check();
  return inv;
}

std::vector<std::vector<std::size_t>> all_sentences(std::size_t l,
                                                    std::size_t v) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(l, 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = 0;
    while (i < l && ++cur[i] == v) cur[i++] = 0;
    if (i == l) break;
  }
  return out;
}

double nbl_ll(const NblParams& p, const std::vector<std::size_t>& w) {
  NblInputs in = wrap_params(p, w, false);
  return inside_nbl(in, nullptr)->value.data[0];
}

// ---------------------------------------------------- criterion 1

bool crit1_oracle_equivalence(std::string& detail) {
  const BindingMode modes[] = {BindingMode::D_with_C, BindingMode::D_alone,
                               BindingMode::D_with_Wq, BindingMode::D_with_B};
  SymbolInventory inv = tiny_inventory(2, 3, 5);
  std::vector<std::vector<std::size_t>> sents;
  for (std::size_t l = 2; l <= 4; ++l)
    for (auto& s : all_sentences(l, 5)) sents.push_back(s);

  std::mt19937 rng(11);
  std::uniform_int_distribution<std::size_t> word(0, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    NblParams p = make_random_nbl(inv, 4, modes[trial % 4], rng);
    DenseLpcfg gd = expand_nbl_to_dense(p);
    ZhuParams zp = make_random_zhu(inv, rng);
    DenseLpcfg zd = expand_zhu_to_dense(zp);
    for (const auto& w : sents) {
      double ref = inside_naive(gd, w).log_likelihood;
      worst = std::max(
          {worst, std::abs(inside_eisner_satta(gd, w).log_likelihood - ref),
           std::abs(nbl_ll(p, w) - ref)});
      double zref = inside_naive(zd, w).log_likelihood;
      worst = std::max(
          {worst, std::abs(inside_eisner_satta(zd, w).log_likelihood - zref),
           std::abs(inside_zhu(zp, w, ZhuCaching::C1_1).log_likelihood - zref),
           std::abs(inside_zhu(zp, w, ZhuCaching::C1_2).log_likelihood -
                    zref)});
    }
    // brute force: exhaustive for l <= 3, five random sentences at l = 4
    // (a full l = 4 sweep of tree enumeration would blow the time budget)
    std::vector<std::vector<std::size_t>> bf;
    for (std::size_t l = 2; l <= 3; ++l)
      for (auto& s : all_sentences(l, 5)) bf.push_back(s);
    for (int i = 0; i < 5; ++i)
      bf.push_back({word(rng), word(rng), word(rng), word(rng)});
    for (const auto& w : bf) {
      worst = std::max(
          {worst, std::abs(inside_brute_force(gd, w).log_likelihood -
                           inside_naive(gd, w).log_likelihood),
           std::abs(inside_brute_force(zd, w).log_likelihood -
                    inside_naive(zd, w).log_likelihood)});
    }
  }
  detail = "max |dll| " + fmt(worst) +
           " over 20 grammars x 775 sentences (brute force exhaustive l<=3, "
           "sampled l=4)";
  return worst <= 1e-9;
}

// ---------------------------------------------------- criterion 2

double model_ll(const Model& m, const std::vector<std::size_t>& w) {
  GlobalDists g = compute_global_distributions(m);
  NblInputs in = sentence_inputs(m, g, w);
  return inside_nbl(in, nullptr)->value.data[0];
}

bool crit2_gradients(std::string& detail) {
  const BindingMode modes[] = {BindingMode::D_with_C, BindingMode::D_alone,
                               BindingMode::D_with_Wq, BindingMode::D_with_B};
  std::vector<std::size_t> sentence = {1, 0, 3};
  double worst = 0.0;
  std::size_t n_checked = 0;
  for (int bi = 0; bi < 4; ++bi) {
    ModelConfig mc;
    mc.embed_dim = 6;
    mc.n_N = 2;
    mc.n_P = 3;
    mc.d_H = 3;
    mc.vocab = 5;
    mc.binding = modes[bi];
    mc.seed = 3 + std::size_t(bi);
    Model m = init_model(mc);

    GlobalDists g = compute_global_distributions(m);
    NblInputs in = sentence_inputs(m, g, sentence);
    ad::NodePtr ll = inside_nbl(in, nullptr);
    ad::backward(ll);
    std::vector<Array> analytic;
    for (auto& [name, node] : m.weights) analytic.push_back(node->ensure_grad());

    const double eps = 1e-4;
    for (std::size_t k = 0; k < m.weights.size(); ++k) {
      Array& val = m.weights[k].second->value;
      for (std::size_t c = 0; c < val.data.size(); ++c) {
        double saved = val.data[c];
        val.data[c] = saved + eps;
        double hi = model_ll(m, sentence);
        val.data[c] = saved - eps;
        double lo = model_ll(m, sentence);
        val.data[c] = saved;
        double fd = (hi - lo) / (2 * eps);
        double an = analytic[k].data[c];
        double rel = std::abs(fd - an) /
                     std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, rel);
        ++n_checked;
      }
    }
  }
  detail = "max rel err " + fmt(worst) + " over " +
           std::to_string(n_checked) + " coordinates (all 4 bindings)";
  return worst <= 1e-4;
}

// ---------------------------------------------------- criterion 3

struct Posterior {
  std::map<std::pair<std::size_t, std::size_t>, double> span;
  Array arc, root;
};

void collect_internal(const LexTreePtr& t,
                      std::vector<std::pair<std::size_t, std::size_t>>& out) {
  if (t->is_leaf()) return;
  out.emplace_back(t->span_begin(), t->span_end());
  collect_internal(t->left, out);
  collect_internal(t->right, out);
}

Posterior enumerate_posterior(const NblParams& p,
                              const std::vector<std::size_t>& w) {
  std::size_t l = w.size();
  auto trees = enumerate_lexicalized_trees(l, p.inv);
  std::vector<double> lps;
  double z = kNegInf;
  for (const auto& t : trees) {
    double lp = tree_log_probability(p, t, w);
    lps.push_back(lp);
    if (lp > z)
      z = lp + std::log1p(std::exp(z - lp));
    else if (std::isfinite(lp))
      z = z + std::log1p(std::exp(lp - z));
  }
  Posterior post;
  post.arc = Array({l, l});
  post.root = Array({l});
  for (std::size_t i = 0; i < trees.size(); ++i) {
    if (!std::isfinite(lps[i])) continue;
    double pw = std::exp(lps[i] - z);
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    collect_internal(trees[i], spans);
    for (auto s : spans) post.span[s] += pw;
    DependencySet d = extract_dependencies(trees[i]);
    post.root.data[d.root] += pw;
    for (auto [h, q] : d.arcs) post.arc.data[h * l + q] += pw;
  }
  return post;
}

bool crit3_marginals(std::string& detail) {
  SymbolInventory inv = tiny_inventory(2, 3, 5);
  std::mt19937 rng(23);
  std::uniform_int_distribution<std::size_t> word(0, 4);
  double worst_inv = 0.0, worst_enum = 0.0;
  for (std::size_t l = 2; l <= 6; ++l) {
    NblParams p = make_random_nbl(inv, 3, BindingMode::D_with_C, rng);
    std::vector<std::size_t> w(l);
    for (auto& x : w) x = word(rng);

    SpanMarginals mu = span_marginals(p, w);
    worst_inv = std::max(worst_inv, std::abs(mu.at(0, l) - 1.0));
    double total = 0.0;
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = i + 2; j <= l; ++j) total += mu.at(i, j);
    worst_inv = std::max(worst_inv, std::abs(total - double(l - 1)));

    ArcMarginals am = arc_marginals(p, w);
    double rsum = 0.0;
    for (double r : am.root.data) rsum += r;
    worst_inv = std::max(worst_inv, std::abs(rsum - 1.0));
    for (std::size_t q = 0; q < l; ++q) {
      double mass = am.root.data[q];
      for (std::size_t h = 0; h < l; ++h) mass += am.arc.data[h * l + q];
      worst_inv = std::max(worst_inv, std::abs(mass - 1.0));
    }

    if (l <= 4) {
      Posterior post = enumerate_posterior(p, w);
      for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = i + 2; j <= l; ++j) {
          auto it = post.span.find({i, j});
          double want = it == post.span.end() ? 0.0 : it->second;
          worst_enum = std::max(worst_enum, std::abs(mu.at(i, j) - want));
        }
      for (std::size_t i = 0; i < l * l; ++i)
        worst_enum =
            std::max(worst_enum, std::abs(am.arc.data[i] - post.arc.data[i]));
      for (std::size_t i = 0; i < l; ++i)
        worst_enum = std::max(worst_enum,
                              std::abs(am.root.data[i] - post.root.data[i]));
    }
  }
  detail = "invariants off by " + fmt(worst_inv) + ", enumeration off by " +
           fmt(worst_enum) + " (l<=4)";
  return worst_inv <= 1e-6 && worst_enum <= 1e-6;
}

// ---------------------------------------------------- criterion 4

double bench_once(const std::string& variant, std::size_t l, std::size_t m,
                  std::size_t d_h, std::mt19937& rng) {
  SymbolInventory inv = tiny_inventory(std::max<std::size_t>(1, m / 2),
                                       m - std::max<std::size_t>(1, m / 2), 5);
  std::uniform_int_distribution<std::size_t> pick(0, 4);
  std::vector<std::size_t> words(l);
  for (auto& w : words) w = pick(rng);
  if (variant == "nbl") {
    NblParams p = make_random_nbl(inv, d_h, BindingMode::D_with_C, rng);
    NblInputs in = wrap_params(p, words, true);
    auto t0 = Clock::now();
    ad::backward(inside_nbl(in, nullptr));
    return secs_since(t0);
  }
  ZhuParams p = make_random_zhu(inv, rng);
  ZhuGradients g;
  ZhuCaching c = variant == "zhu_c1_1" ? ZhuCaching::C1_1 : ZhuCaching::C1_2;
  return inside_zhu(p, words, c, &g).seconds;
}

// Minimum over reps: wall-clock noise is strictly additive, and the
// fitted slopes sit close to their band edges, so the median was flaky.
double bench_best(const std::string& variant, std::size_t l, std::size_t m,
                  std::mt19937& rng) {
  bench_once(variant, l, m, 8, rng);  // warm-up
  double best = bench_once(variant, l, m, 8, rng);
  for (int r = 0; r < 4; ++r)
    best = std::min(best, bench_once(variant, l, m, 8, rng));
  return best;
}

// Per-m minima with reps interleaved round-robin across the m grid, so a
// machine-speed drift over the run hits every cell instead of biasing the
// fitted slope (the cells are otherwise measured minutes apart).
std::vector<double> bench_grid(const std::string& variant, std::size_t l,
                               const std::vector<std::size_t>& ms,
                               std::mt19937& rng) {
  std::vector<double> best(ms.size(),
                           std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < ms.size(); ++i)
    bench_once(variant, l, ms[i], 8, rng);  // warm-up
  for (int round = 0; round < 5; ++round)
    for (std::size_t i = 0; i < ms.size(); ++i)
      best[i] = std::min(best[i], bench_once(variant, l, ms[i], 8, rng));
  return best;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= double(x.size());
  my /= double(x.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  return num / den;
}

bool crit4_complexity(std::string& detail) {
  const std::vector<std::size_t> ms = {10, 20, 40, 80};
  std::map<std::string, std::pair<double, double>> bands = {
      {"nbl", {0.6, 1.4}},
      {"zhu_c1_2", {1.6, 2.4}},
      {"zhu_c1_1", {2.5, 3.5}}};
  std::mt19937 rng(41);
  bool ok = true;
  std::ostringstream os;
  for (const auto& [variant, band] : bands) {
    std::vector<double> lx, ly;
    std::vector<double> times = bench_grid(variant, 30, ms, rng);
    for (std::size_t i = 0; i < ms.size(); ++i) {
      lx.push_back(std::log(double(ms[i])));
      ly.push_back(std::log(times[i]));
    }
    double s = slope(lx, ly);
    bool in = s >= band.first && s <= band.second;
    ok = ok && in;
    os << variant << " slope " << fmt(s) << (in ? "" : " OUT OF BAND") << "; ";
  }
  double t_nbl = bench_best("nbl", 40, 20, rng);
  double t_c12 = bench_best("zhu_c1_2", 40, 20, rng);
  double t_c11 = bench_best("zhu_c1_1", 40, 20, rng);
  bool order = t_nbl < t_c12 && t_c12 < t_c11;
  ok = ok && order;
  os << "l=40 m=20 medians " << fmt(t_nbl) << " < " << fmt(t_c12) << " < "
     << fmt(t_c11) << (order ? "" : " ORDER VIOLATED");
  detail = os.str();
  return ok;
}

// ---------------------------------------------- criteria 5 and 6

struct SynthCorpus {
  NblParams truth;
  std::vector<std::vector<std::size_t>> train, dev;
  std::vector<std::vector<Span>> dev_gold;  // width >= 2 spans per sentence
  double oracle_ppl = 0.0;
};

SynthCorpus make_synth_corpus() {
  std::mt19937 grng(777);
  SynthCorpus c;
  // sigma 2.0 gives a peaky grammar; length-2 sentences are excluded
  // because right-branching trivially scores F1 = 1 on them, which
  // makes the baseline meaninglessly strong.
  c.truth = make_random_nbl(tiny_inventory(3, 6, 50), 8,
                            BindingMode::D_with_C, grng, 2.0);
  std::mt19937 rng(778);
  auto draw = [&](std::size_t n, bool gold) {
    std::vector<std::vector<std::size_t>> out;
    while (out.size() < n) {
      auto s = sample_tree(c.truth, 12, rng);
      if (!s || s->words.size() < 3) continue;
      out.push_back(s->words);
      if (gold) {
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        collect_internal(s->tree, spans);
        std::sort(spans.begin(), spans.end());
        c.dev_gold.push_back(spans);
      }
    }
    return out;
  };
  c.train = draw(2000, false);
  c.dev = draw(200, true);
  double ll = 0.0;
  std::size_t toks = 0;
  for (const auto& w : c.dev) {
    ll += nbl_ll(c.truth, w);
    toks += w.size();
  }
  c.oracle_ppl = std::exp(-ll / double(toks));
  return c;
}

std::vector<Span> right_branching(std::size_t l) {
  std::vector<Span> out;
  for (std::size_t i = 0; i + 2 <= l; ++i) out.emplace_back(i, l);
  return out;
}

struct SeedOutcome {
  double ppl = 0.0, mbr_f1 = 0.0, rb_f1 = 0.0, viterbi_f1 = 0.0;
};

SeedOutcome run_seed(const SynthCorpus& c, std::uint64_t seed) {
  ModelConfig mc;
  mc.embed_dim = 32;
  mc.n_N = 3;
  mc.n_P = 6;
  mc.d_H = 8;
  mc.vocab = 50;
  mc.binding = BindingMode::D_with_C;
  mc.seed = seed;
  Model model = init_model(mc);
  TrainConfig tc;
  tc.epochs = 12;
  tc.batch_size = 16;
  tc.max_len = 40;
  tc.seed = seed;
  FitResult fr = fit(model, c.train, c.dev, tc);

  SeedOutcome out;
  out.ppl = dev_perplexity(fr.best, c.dev);
  NblParams hat = materialize_params(fr.best);
  std::size_t n = c.dev.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = c.dev[i];
    auto mbr = mbr_constituency(span_marginals(hat, w));
    out.mbr_f1 += sentence_f1(mbr, c.dev_gold[i], w.size());
    out.rb_f1 += sentence_f1(right_branching(w.size()), c.dev_gold[i], w.size());
    std::vector<Span> vit;
    collect_internal(viterbi_cyk(hat, w).tree, vit);
    std::sort(vit.begin(), vit.end());
    out.viterbi_f1 += sentence_f1(vit, c.dev_gold[i], w.size());
  }
  out.mbr_f1 /= double(n);
  out.rb_f1 /= double(n);
  out.viterbi_f1 /= double(n);
  return out;
}

std::vector<SeedOutcome> g_seed_outcomes;  // filled by crit5, read by crit6
double g_oracle_ppl = 0.0;

bool crit5_recovery(std::string& detail) {
  SynthCorpus c = make_synth_corpus();
  g_oracle_ppl = c.oracle_ppl;
  int good = 0;
  std::ostringstream os;
  os << "oracle ppl " << fmt(c.oracle_ppl) << "; ";
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    SeedOutcome o = run_seed(c, seed);
    g_seed_outcomes.push_back(o);
    bool ppl_ok = o.ppl <= 1.15 * c.oracle_ppl;
    bool f1_ok = o.mbr_f1 >= o.rb_f1 + 0.10;
    if (ppl_ok && f1_ok) ++good;
    os << "seed " << seed << ": ppl " << fmt(o.ppl) << (ppl_ok ? "" : "(!)")
       << " mbrF1 " << fmt(100 * o.mbr_f1) << " rbF1 " << fmt(100 * o.rb_f1)
       << (f1_ok ? "" : "(!)") << "; ";
  }
  os << good << "/4 seeds pass";
  detail = os.str();
  return good >= 3;
}

bool crit6_mbr_vs_viterbi(std::string& detail) {
  if (g_seed_outcomes.empty()) {
    detail = "criterion 5 did not run; no decode comparison available";
    return false;
  }
  double mbr = 0, vit = 0;
  for (const auto& o : g_seed_outcomes) {
    mbr += o.mbr_f1;
    vit += o.viterbi_f1;
  }
  mbr /= double(g_seed_outcomes.size());
  vit /= double(g_seed_outcomes.size());
  detail = "mean MBR F1 " + fmt(100 * mbr) + " vs Viterbi F1 " +
           fmt(100 * vit) + " (soft check)";
  return mbr >= vit - 0.005;
}

// ---------------------------------------------- criteria 7 and 8

bool crit7_pipeline(std::string& detail) {
  const std::string bin = std::string(NBL_BIN_DIR) + "/nblpcfg";
  const std::string data = NBL_DATA_DIR;
  const std::string flags = " --n-nt 3 --n-pt 6 --d-h 8 --embed 32";
  std::string train_cmd = bin + " train --train " + data +
                          "/synth.train.brackets --dev " + data +
                          "/synth.dev.brackets --out acc7 --epochs 2 "
                          "--batch-size 16 --seed 1" +
                          flags + " > acc7.train.log 2>&1";
  if (std::system(train_cmd.c_str()) != 0) {
    detail = "train subcommand failed (see acc7.train.log)";
    return false;
  }
  std::string eval_cmd = bin + " eval --checkpoint acc7.ckpt --gold " + data +
                         "/synth.test.brackets --conll " + data +
                         "/synth.test.conll --out acc7.report.csv" + flags +
                         " > acc7.report.txt 2>&1";
  if (std::system(eval_cmd.c_str()) != 0) {
    detail = "eval subcommand failed (see acc7.report.txt)";
    return false;
  }
  std::ifstream csv("acc7.report.csv");
  std::string header, row;
  if (!std::getline(csv, header) || !std::getline(csv, row)) {
    detail = "report CSV missing or truncated";
    return false;
  }
  if (header != "f1_mean,f1_std,udas,uuas,ppl") {
    detail = "bad report header: " + header;
    return false;
  }
  detail = "end-to-end train+eval on bundled synthetic treebank; report row: " +
           row + ". WSJ headline numbers (F1 60.4, UDAS 39.1, UUAS 56.1, "
           "ppl 161.9) are NOT reproduced here: licensed corpus, multi-hour "
           "training";
  return true;
}

bool crit8_metric_examples(std::string& detail) {
  const std::string cmd = std::string(NBL_BIN_DIR) +
                          "/unit_tests -ts=eval,decode > acc8.log 2>&1";
  bool ok = std::system(cmd.c_str()) == 0;
  detail = ok ? "eval and decode example suites pass verbatim (see acc8.log)"
              : "unit_tests -ts=eval,decode failed (see acc8.log)";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    bool soft;
    bool (*run)(std::string&);
  };
  const Criterion table[] = {
      {1, "oracle equivalence", false, crit1_oracle_equivalence},
      {2, "gradient correctness", false, crit2_gradients},
      {3, "marginal sanity", false, crit3_marginals},
      {4, "complexity claims", false, crit4_complexity},
      {5, "synthetic recovery", false, crit5_recovery},
      {6, "MBR vs Viterbi", true, crit6_mbr_vs_viterbi},
      {7, "end-to-end pipeline", false, crit7_pipeline},
      {8, "metric unit tests", false, crit8_metric_examples},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int hard_failures = 0;
  for (const auto& c : table) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    std::string detail;
    auto t0 = Clock::now();
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    double secs = secs_since(t0);
    std::printf("[%s] criterion %d (%s%s, %.1fs): %s\n",
                pass ? "PASS" : "FAIL", c.id, c.name,
                c.soft ? ", soft" : "", secs, detail.c_str());
    std::fflush(stdout);
    if (!pass && !c.soft) ++hard_failures;
  }
  return hard_failures;
}
