// Command-line driver: train / parse / eval / bench.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nbl/config.hpp"
#include "nbl/corpus.hpp"
#include "nbl/decode.hpp"
#include "nbl/eval.hpp"
#include "nbl/inside.hpp"
#include "nbl/neural.hpp"
#include "nbl/train.hpp"

using namespace nbl;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags override the config file: a key is consulted only when the
// corresponding flag was not passed on the command line.
struct Overlay {
  const CLI::App& sub;
  std::map<std::string, std::string> cfg;

  Overlay(const CLI::App& s, const std::string& path) : sub(s) {
    if (!path.empty()) cfg = read_config(path);
  }
  void str(const char* flag, const std::string& key, std::string& v) const {
    if (!sub.count(flag)) v = cfg_str(cfg, key, v);
  }
  void u64(const char* flag, const std::string& key, std::size_t& v) const {
    if (!sub.count(flag)) v = static_cast<std::size_t>(cfg_u64(cfg, key, v));
  }
  void dbl(const char* flag, const std::string& key, double& v) const {
    if (!sub.count(flag)) v = cfg_double(cfg, key, v);
  }
};

// Sidecar written by `train` next to the checkpoint: <stem>.vocab.
std::string default_vocab_path(const std::string& ckpt) {
  const std::string suffix = ".ckpt";
  if (ckpt.size() > suffix.size() &&
      ckpt.compare(ckpt.size() - suffix.size(), suffix.size(), suffix) == 0)
    return ckpt.substr(0, ckpt.size() - suffix.size()) + ".vocab";
  return ckpt + ".vocab";
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError("missing required path: " + what);
  std::ifstream f(path);
  if (!f) throw UsageError(what + ": cannot open " + path);
}

std::vector<std::uint64_t> parse_list_u64(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoull(tok));
  return out;
}

std::vector<std::string> parse_list_str(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void set_threads(std::size_t n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(static_cast<int>(n));
#else
  (void)n;
#endif
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string config, train_path, dev_path, out = "model";
  std::string binding = "D_with_C", seeds;
  bool plain = false;
  std::size_t n_nt = 15, n_pt = 30, d_h = 64, embed = 128, vocab_cap = 10000;
  std::size_t epochs = 10, batch_size = 8, max_len = 40, seed = 0, threads = 0;
  double lr = 0.001;
};

std::vector<std::vector<std::string>> load_token_sentences(
    const std::string& path, bool plain) {
  if (plain) return read_plain_text(path);
  auto gold = read_bracketed_treebank(path);
  std::vector<std::vector<std::string>> out;
  for (auto& g : gold)
    if (strip_punctuation(g)) out.push_back(g.tokens);
  return out;
}

int cmd_train(const CLI::App& sub, TrainOpts o) {
  Overlay ov(sub, o.config);
  ov.str("--train", "train", o.train_path);
  ov.str("--dev", "dev", o.dev_path);
  ov.str("--out", "out", o.out);
  ov.str("--binding", "binding", o.binding);
  ov.str("--seeds", "seeds", o.seeds);
  ov.u64("--n-nt", "n_nt", o.n_nt);
  ov.u64("--n-pt", "n_pt", o.n_pt);
  ov.u64("--d-h", "d_h", o.d_h);
  ov.u64("--embed", "embed", o.embed);
  ov.u64("--vocab-cap", "vocab_cap", o.vocab_cap);
  ov.u64("--epochs", "epochs", o.epochs);
  ov.u64("--batch-size", "batch_size", o.batch_size);
  ov.u64("--max-len", "max_len", o.max_len);
  ov.u64("--seed", "seed", o.seed);
  ov.u64("--threads", "threads", o.threads);
  ov.dbl("--lr", "lr", o.lr);
  set_threads(o.threads);

  require_file(o.train_path, "--train");
  auto train_toks = load_token_sentences(o.train_path, o.plain);
  std::vector<std::vector<std::string>> dev_toks;
  if (!o.dev_path.empty()) {
    require_file(o.dev_path, "--dev");
    dev_toks = load_token_sentences(o.dev_path, o.plain);
  } else {
    dev_toks = train_toks;
  }
  if (train_toks.empty()) throw std::runtime_error("empty training corpus");

  Vocab vocab = build_vocab(train_toks, o.vocab_cap);
  auto encode_all = [&](const std::vector<std::vector<std::string>>& toks) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& s : toks) {
      std::vector<std::size_t> ids;
      for (const auto& w : s) ids.push_back(vocab.encode(w));
      out.push_back(std::move(ids));
    }
    return out;
  };
  auto train_ids = encode_all(train_toks);
  auto dev_ids = encode_all(dev_toks);

  std::vector<std::uint64_t> seeds =
      o.seeds.empty() ? std::vector<std::uint64_t>{o.seed}
                      : parse_list_u64(o.seeds);
  bool multi = seeds.size() > 1;

  TrainConfig tc;
  tc.lr = o.lr;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.max_len = o.max_len;
  tc.check();

  double ppl_sum = 0.0;
  std::size_t ppl_n = 0;
  std::string seeds_csv = o.out + ".seeds.csv";
  std::ofstream scsv;
  if (multi) {
    scsv.open(seeds_csv);
    scsv << "seed,best_epoch,dev_ppl\n";
  }
  for (auto s : seeds) {
    ModelConfig mc;
    mc.embed_dim = o.embed;
    mc.n_N = o.n_nt;
    mc.n_P = o.n_pt;
    mc.d_H = o.d_h;
    mc.vocab = vocab.size();
    mc.binding = binding_from_name(o.binding);
    mc.seed = s;
    mc.check();
    Model model = init_model(mc);
    tc.seed = s;
    FitResult fr = fit(model, train_ids, dev_ids, tc);

    std::string stem = multi ? o.out + ".s" + std::to_string(s) : o.out;
    save_checkpoint(fr.best, stem + ".ckpt");
    write_vocab(stem + ".vocab", vocab);
    write_history_csv(stem + ".history.csv", fr.history);
    // best_epoch 0 is the pre-training baseline, which has no history row
    double best_ppl = fr.best_epoch == 0
                          ? dev_perplexity(fr.best, dev_ids)
                          : fr.history.at(fr.best_epoch - 1).dev_ppl;
    std::cout << "seed " << s << ": best epoch " << fr.best_epoch
              << ", dev ppl " << best_ppl << "\n";
    if (multi) scsv << s << "," << fr.best_epoch << "," << best_ppl << "\n";
    if (std::isfinite(best_ppl)) {
      ppl_sum += best_ppl;
      ++ppl_n;
    }
  }
  if (multi) {
    double mean = ppl_n ? ppl_sum / double(ppl_n) : 0.0;
    scsv << "aggregate,," << mean << "\n";
    std::cout << "aggregate dev ppl (mean of " << ppl_n << "): " << mean
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- parse

std::string tree_bracket(const LexTreePtr& t,
                         const std::vector<std::string>& toks) {
  if (t->is_leaf()) return "(X " + toks[t->head_pos] + ")";
  return "(X " + tree_bracket(t->left, toks) + " " +
         tree_bracket(t->right, toks) + ")";
}

std::string spans_bracket(
    const std::set<std::pair<std::size_t, std::size_t>>& spans, std::size_t i,
    std::size_t j, const std::vector<std::string>& toks) {
  if (j - i == 1) return "(X " + toks[i] + ")";
  for (std::size_t k = i + 1; k < j; ++k) {
    bool lok = (k - i == 1) || spans.count({i, k});
    bool rok = (j - k == 1) || spans.count({k, j});
    if (lok && rok)
      return "(X " + spans_bracket(spans, i, k, toks) + " " +
             spans_bracket(spans, k, j, toks) + ")";
  }
  throw std::runtime_error("spans do not form a binary bracketing");
}

std::vector<std::size_t> heads_from_deps(const DependencySet& d,
                                         std::size_t l) {
  std::vector<std::size_t> heads(l, 0);
  for (auto [h, dep] : d.arcs) heads.at(dep) = h + 1;
  heads.at(d.root) = 0;
  return heads;
}

struct Decoded {
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // width >= 2
  std::vector<std::size_t> heads;                          // 1-based, 0 root
};

void collect_spans(const LexTreePtr& t,
                   std::vector<std::pair<std::size_t, std::size_t>>& out) {
  if (t->is_leaf()) return;
  out.emplace_back(t->span_begin(), t->span_end());
  collect_spans(t->left, out);
  collect_spans(t->right, out);
}

Decoded decode_sentence(const NblParams& p, const std::vector<std::size_t>& w,
                        const std::string& mode) {
  Decoded d;
  if (mode == "viterbi") {
    ParseOutput out = viterbi_cyk(p, w);
    collect_spans(out.tree, d.spans);
    std::sort(d.spans.begin(), d.spans.end());
    d.heads = heads_from_deps(out.deps, w.size());
  } else {
    d.spans = mbr_constituency(span_marginals(p, w));
    d.heads = heads_from_deps(mbr_dependency(arc_marginals(p, w)), w.size());
  }
  return d;
}

struct ParseOpts {
  std::string config, checkpoint, vocab_path, input, out, decode = "mbr";
  std::string binding = "D_with_C";
  std::size_t n_nt = 15, n_pt = 30, d_h = 64, embed = 128, threads = 0;
};

Model load_model(const std::string& ckpt, const std::string& binding,
                 std::size_t n_nt, std::size_t n_pt, std::size_t d_h,
                 std::size_t embed, std::size_t vocab_size) {
  ModelConfig mc;
  mc.embed_dim = embed;
  mc.n_N = n_nt;
  mc.n_P = n_pt;
  mc.d_H = d_h;
  mc.vocab = vocab_size;
  mc.binding = binding_from_name(binding);
  mc.check();
  return load_checkpoint(ckpt, mc);
}

int cmd_parse(const CLI::App& sub, ParseOpts o) {
  Overlay ov(sub, o.config);
  ov.str("--checkpoint", "checkpoint", o.checkpoint);
  ov.str("--vocab", "vocab", o.vocab_path);
  ov.str("--input", "input", o.input);
  ov.str("--out", "out", o.out);
  ov.str("--decode", "decode", o.decode);
  ov.str("--binding", "binding", o.binding);
  ov.u64("--n-nt", "n_nt", o.n_nt);
  ov.u64("--n-pt", "n_pt", o.n_pt);
  ov.u64("--d-h", "d_h", o.d_h);
  ov.u64("--embed", "embed", o.embed);
  ov.u64("--threads", "threads", o.threads);
  set_threads(o.threads);
  if (o.decode != "viterbi" && o.decode != "mbr")
    throw UsageError("--decode must be viterbi or mbr");
  if (o.vocab_path.empty()) o.vocab_path = default_vocab_path(o.checkpoint);
  require_file(o.checkpoint, "--checkpoint");
  require_file(o.vocab_path, "--vocab");
  require_file(o.input, "--input");

  Vocab vocab = read_vocab(o.vocab_path);
  Model model = load_model(o.checkpoint, o.binding, o.n_nt, o.n_pt, o.d_h,
                           o.embed, vocab.size());
  NblParams params = materialize_params(model);

  std::ofstream file_out;
  if (!o.out.empty()) file_out.open(o.out);
  std::ostream& os = o.out.empty() ? std::cout : file_out;

  auto sentences = read_plain_text(o.input);
  for (std::size_t n = 0; n < sentences.size(); ++n) {
    const auto& toks = sentences[n];
    if (toks.size() < 2) {
      os << "# error: sentence " << n << " has fewer than 2 tokens\n\n";
      continue;
    }
    std::vector<std::size_t> ids;
    for (const auto& w : toks) ids.push_back(vocab.encode(w));
    Decoded d = decode_sentence(params, ids, o.decode);
    std::set<std::pair<std::size_t, std::size_t>> sset(d.spans.begin(),
                                                       d.spans.end());
    os << spans_bracket(sset, 0, toks.size(), toks) << "\n";
    for (std::size_t t = 0; t < toks.size(); ++t)
      os << (t + 1) << "\t" << toks[t] << "\t" << d.heads[t] << "\n";
    os << "\n";
  }
  return 0;
}

// ----------------------------------------------------------------- eval

struct EvalOpts {
  std::string config, checkpoint, vocab_path, gold, conll, out, decode = "mbr";
  std::string binding = "D_with_C";
  std::size_t n_nt = 15, n_pt = 30, d_h = 64, embed = 128, threads = 0;
};

int cmd_eval(const CLI::App& sub, EvalOpts o) {
  Overlay ov(sub, o.config);
  ov.str("--checkpoint", "checkpoint", o.checkpoint);
  ov.str("--vocab", "vocab", o.vocab_path);
  ov.str("--gold", "gold", o.gold);
  ov.str("--conll", "conll", o.conll);
  ov.str("--out", "out", o.out);
  ov.str("--decode", "decode", o.decode);
  ov.str("--binding", "binding", o.binding);
  ov.u64("--n-nt", "n_nt", o.n_nt);
  ov.u64("--n-pt", "n_pt", o.n_pt);
  ov.u64("--d-h", "d_h", o.d_h);
  ov.u64("--embed", "embed", o.embed);
  ov.u64("--threads", "threads", o.threads);
  set_threads(o.threads);
  if (o.decode != "viterbi" && o.decode != "mbr")
    throw UsageError("--decode must be viterbi or mbr");
  if (o.vocab_path.empty()) o.vocab_path = default_vocab_path(o.checkpoint);
  require_file(o.checkpoint, "--checkpoint");
  require_file(o.vocab_path, "--vocab");
  require_file(o.gold, "--gold");

  Vocab vocab = read_vocab(o.vocab_path);
  Model model = load_model(o.checkpoint, o.binding, o.n_nt, o.n_pt, o.d_h,
                           o.embed, vocab.size());
  NblParams params = materialize_params(model);

  auto gold = read_bracketed_treebank(o.gold);
  if (!o.conll.empty()) {
    require_file(o.conll, "--conll");
    read_conll(o.conll, gold);
  }

  double f1_sum = 0.0;
  std::size_t n_eval = 0;
  AttachmentTally att;
  LabelTally labels;
  std::vector<std::vector<std::size_t>> ids_all;
  for (auto& g : gold) {
    if (!strip_punctuation(g)) continue;
    std::vector<std::size_t> ids;
    for (const auto& w : g.tokens) ids.push_back(vocab.encode(w));
    ids_all.push_back(ids);
    Decoded d = decode_sentence(params, ids, o.decode);
    std::vector<Span> gspans;
    for (const auto& s : g.spans) gspans.emplace_back(s.i, s.j);
    f1_sum += sentence_f1(d.spans, gspans, ids.size());
    ++n_eval;
    labels.add(d.spans, g.spans, ids.size());
    if (!g.heads.empty() && g.heads.size() == ids.size())
      att.add(d.heads, g.heads);
  }
  if (n_eval == 0) throw std::runtime_error("no evaluable sentences");

  std::size_t skipped = 0;
  EvalReport r;
  r.f1_mean = f1_sum / double(n_eval);
  r.f1_std = 0.0;  // single run; std comes from multi-seed aggregation
  r.udas = att.udas();
  r.uuas = att.uuas();
  r.ppl = dev_perplexity(model, ids_all, &skipped);
  r.label_recall = labels.recalls();

  std::cout << report_table(r);
  if (skipped)
    std::cout << "(perplexity skipped " << skipped
              << " zero-probability sentences)\n";
  if (!o.out.empty()) write_report_csv(o.out, r);
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchOpts {
  std::string config, out = "bench.csv";
  std::string lengths = "30", ms = "10,20,40,80";
  std::string variants = "nbl,zhu_c1_2,zhu_c1_1";
  std::size_t d_h = 8, reps = 3, seed = 0, threads = 1;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Least-squares slope of y against x.
double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
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

// One timed forward+backward at batch size 1 with fresh random params.
double bench_cell(const std::string& variant, std::size_t l, std::size_t m,
                  std::size_t d_h, std::mt19937& rng) {
  SymbolInventory inv;
  inv.n_N = std::max<std::size_t>(1, m / 2);
  inv.n_P = m - inv.n_N;
  for (int i = 0; i < 5; ++i) inv.vocab.push_back("w" + std::to_string(i));
  inv.check();
  std::uniform_int_distribution<std::size_t> pick(0, inv.vocab.size() - 1);
  std::vector<std::size_t> words(l);
  for (auto& w : words) w = pick(rng);

  if (variant == "nbl") {
    NblParams p = make_random_nbl(inv, d_h, BindingMode::D_with_C, rng);
    NblInputs in = wrap_params(p, words, /*requires_grad=*/true);
    auto t0 = std::chrono::steady_clock::now();
    ad::NodePtr ll = inside_nbl(in, nullptr);
    ad::backward(ll);
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
  }
  ZhuParams p = make_random_zhu(inv, rng);
  ZhuGradients g;
  ZhuCaching c = variant == "zhu_c1_1" ? ZhuCaching::C1_1 : ZhuCaching::C1_2;
  return inside_zhu(p, words, c, &g).seconds;
}

int cmd_bench(const CLI::App& sub, BenchOpts o) {
  Overlay ov(sub, o.config);
  ov.str("--out", "out", o.out);
  ov.str("--lengths", "lengths", o.lengths);
  ov.str("--m", "m", o.ms);
  ov.str("--variants", "variants", o.variants);
  ov.u64("--d-h", "d_h", o.d_h);
  ov.u64("--reps", "reps", o.reps);
  ov.u64("--seed", "seed", o.seed);
  ov.u64("--threads", "threads", o.threads);
  set_threads(o.threads);
  if (o.reps < 3) throw UsageError("--reps must be >= 3");
  auto lengths = parse_list_u64(o.lengths);
  auto ms = parse_list_u64(o.ms);
  auto variants = parse_list_str(o.variants);
  if (lengths.empty() || ms.empty() || variants.empty())
    throw UsageError("bench grid lists must be nonempty");
  for (const auto& v : variants)
    if (v != "nbl" && v != "zhu_c1_1" && v != "zhu_c1_2")
      throw UsageError("unknown variant: " + v);

  std::ofstream csv(o.out);
  csv << "variant,l,n_nt,d_h,rep,seconds\n";
  // medians[(variant, l, m)]
  std::map<std::tuple<std::string, std::size_t, std::size_t>, double> med;
  for (const auto& variant : variants)
    for (auto l : lengths)
      for (auto m : ms) {
        std::size_t n_nt = std::max<std::size_t>(1, m / 2);
        std::size_t d_h = variant == "nbl" ? o.d_h : 0;
        std::mt19937 rng(static_cast<unsigned>(
            o.seed * 1000003 + l * 1009 + m * 101 +
            std::hash<std::string>{}(variant)));
        try {
          bench_cell(variant, l, m, o.d_h, rng);  // warm-up, discarded
          std::vector<double> secs;
          for (std::size_t r = 0; r < o.reps; ++r) {
            double s = bench_cell(variant, l, m, o.d_h, rng);
            csv << variant << "," << l << "," << n_nt << "," << d_h << "," << r
                << "," << s << "\n";
            secs.push_back(s);
          }
          med[{variant, l, m}] = median(secs);
        } catch (const std::bad_alloc&) {
          std::cerr << "cell " << variant << " l=" << l << " m=" << m
                    << ": out of memory, skipped\n";
        }
      }

  for (const auto& variant : variants) {
    for (auto l : lengths) {
      std::vector<double> lx, ly;
      for (auto m : ms) {
        auto it = med.find({variant, l, m});
        if (it == med.end()) continue;
        lx.push_back(std::log(double(m)));
        ly.push_back(std::log(it->second));
        std::cout << variant << " l=" << l << " m=" << m
                  << " median=" << it->second << "s\n";
      }
      if (lx.size() >= 2)
        std::cout << variant << " l=" << l
                  << " log-log slope vs m: " << lsq_slope(lx, ly) << "\n";
    }
    for (auto m : ms) {
      std::vector<double> lx, ly;
      for (auto l : lengths) {
        auto it = med.find({variant, l, m});
        if (it == med.end()) continue;
        lx.push_back(std::log(double(l)));
        ly.push_back(std::log(it->second));
      }
      if (lx.size() >= 2)
        std::cout << variant << " m=" << m
                  << " log-log slope vs l: " << lsq_slope(lx, ly) << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural bi-lexicalized PCFG induction"};
  app.require_subcommand(1);

  TrainOpts to;
  auto* train = app.add_subcommand("train", "fit a model");
  train->add_option("--config", to.config);
  train->add_option("--train", to.train_path);
  train->add_option("--dev", to.dev_path);
  train->add_option("--out", to.out);
  train->add_flag("--plain", to.plain, "inputs are plain text, not brackets");
  train->add_option("--binding", to.binding);
  train->add_option("--seeds", to.seeds, "comma-separated seed list");
  train->add_option("--n-nt", to.n_nt);
  train->add_option("--n-pt", to.n_pt);
  train->add_option("--d-h", to.d_h);
  train->add_option("--embed", to.embed);
  train->add_option("--vocab-cap", to.vocab_cap);
  train->add_option("--epochs", to.epochs);
  train->add_option("--batch-size", to.batch_size);
  train->add_option("--max-len", to.max_len);
  train->add_option("--seed", to.seed);
  train->add_option("--threads", to.threads);
  train->add_option("--lr", to.lr);

  ParseOpts po;
  auto* parse = app.add_subcommand("parse", "decode plain text");
  parse->add_option("--config", po.config);
  parse->add_option("--checkpoint", po.checkpoint);
  parse->add_option("--vocab", po.vocab_path);
  parse->add_option("--input", po.input);
  parse->add_option("--out", po.out);
  parse->add_option("--decode", po.decode, "viterbi or mbr");
  parse->add_option("--binding", po.binding);
  parse->add_option("--n-nt", po.n_nt);
  parse->add_option("--n-pt", po.n_pt);
  parse->add_option("--d-h", po.d_h);
  parse->add_option("--embed", po.embed);
  parse->add_option("--threads", po.threads);

  EvalOpts eo;
  auto* evalc = app.add_subcommand("eval", "score against gold trees");
  evalc->add_option("--config", eo.config);
  evalc->add_option("--checkpoint", eo.checkpoint);
  evalc->add_option("--vocab", eo.vocab_path);
  evalc->add_option("--gold", eo.gold);
  evalc->add_option("--conll", eo.conll);
  evalc->add_option("--out", eo.out);
  evalc->add_option("--decode", eo.decode, "viterbi or mbr");
  evalc->add_option("--binding", eo.binding);
  evalc->add_option("--n-nt", eo.n_nt);
  evalc->add_option("--n-pt", eo.n_pt);
  evalc->add_option("--d-h", eo.d_h);
  evalc->add_option("--embed", eo.embed);
  evalc->add_option("--threads", eo.threads);

  BenchOpts bo;
  auto* bench = app.add_subcommand("bench", "inside-algorithm scaling study");
  bench->add_option("--config", bo.config);
  bench->add_option("--out", bo.out);
  bench->add_option("--lengths", bo.lengths, "comma-separated sentence lengths");
  bench->add_option("--m", bo.ms, "comma-separated child-symbol counts");
  bench->add_option("--variants", bo.variants);
  bench->add_option("--d-h", bo.d_h);
  bench->add_option("--reps", bo.reps);
  bench->add_option("--seed", bo.seed);
  bench->add_option("--threads", bo.threads);

  try {
    app.parse(argc, argv);
    if (*train) return cmd_train(*train, to);
    if (*parse) return cmd_parse(*parse, po);
    if (*evalc) return cmd_eval(*evalc, eo);
    return cmd_bench(*bench, bo);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
