#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "nbl/corpus.hpp"
#include "nbl/inside.hpp"
#include "nbl/train.hpp"

namespace nbl {

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Model snapshot(const Model& m) {
  Model c;
  c.cfg = m.cfg;
  for (const auto& [name, node] : m.weights)
    c.weights.emplace_back(name, ad::make_leaf(node->value, true));
  return c;
}

}  // namespace

void TrainConfig::check() const {
  if (lr <= 0.0 || beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 ||
      beta2 >= 1.0 || eps <= 0.0)
    throw std::invalid_argument("TrainConfig: invalid optimizer settings");
  if (batch_size < 1 || max_len < 2)
    throw std::invalid_argument("TrainConfig: invalid batching settings");
}

OptState make_opt_state(const Model& model) {
  OptState st;
  for (const auto& [name, node] : model.weights) {
    st.m.emplace_back(node->value.shape);
    st.v.emplace_back(node->value.shape);
  }
  return st;
}

void adam_step(Model& model, const std::vector<Array>& grads, OptState& st,
               const TrainConfig& cfg) {
  if (grads.size() != model.weights.size())
    throw std::invalid_argument("adam_step: gradient count mismatch");
  for (std::size_t k = 0; k < grads.size(); ++k)
    if (grads[k].has_nan())
      throw std::runtime_error("adam_step: NaN gradient in weight " +
                               model.weights[k].first + ", batch aborted");
  ++st.step;
  double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    Array& w = model.weights[k].second->value;
    if (grads[k].shape != w.shape)
      throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                  model.weights[k].first);
    for (std::size_t x = 0; x < w.numel(); ++x) {
      double g = grads[k].data[x];
      double& mm = st.m[k].data[x];
      double& vv = st.v[k].data[x];
      mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * g;
      vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * g * g;
      w.data[x] -= cfg.lr * (mm / bc1) / (std::sqrt(vv / bc2) + cfg.eps);
    }
  }
}

EpochStats train_epoch(Model& model,
                       const std::vector<std::vector<std::size_t>>& sentences,
                       const std::vector<std::vector<std::size_t>>& batches,
                       OptState& st, const TrainConfig& cfg) {
  cfg.check();
  auto t0 = Clock::now();
  EpochStats stats;
  double nll_sum = 0.0;
  for (const auto& batch : batches) {
    GlobalDists g = compute_global_distributions(model);
    std::vector<Array> grads;
    for (const auto& [name, node] : model.weights)
      grads.emplace_back(node->value.shape);
    std::size_t used = 0;
    for (std::size_t ix : batch) {
      auto root = inside_nbl(sentence_inputs(model, g, sentences[ix]),
                             nullptr);
      double ll = root->value.data[0];
      if (ll == kNegInf) {
        ++stats.skipped;
        continue;
      }
      ad::backward(root);
      ++used;
      nll_sum += -ll;
      for (std::size_t k = 0; k < grads.size(); ++k) {
        const Array& gk = model.weights[k].second->grad;
        if (gk.numel() == 0) continue;
        for (std::size_t x = 0; x < gk.numel(); ++x)
          grads[k].data[x] -= gk.data[x];  // minimize NLL
      }
    }
    if (used == 0) continue;
    double norm2 = 0.0;
    for (auto& gk : grads)
      for (auto& x : gk.data) {
        x /= double(used);  // mean, not sum: lr decoupled from batch size
        norm2 += x * x;
      }
    stats.grad_norm = std::sqrt(norm2);
    adam_step(model, grads, st, cfg);
    stats.n_sentences += used;
  }
  if (stats.n_sentences > 0)
    stats.mean_nll = nll_sum / double(stats.n_sentences);
  stats.seconds = secs_since(t0);
  return stats;
}

double dev_perplexity(const Model& model,
                      const std::vector<std::vector<std::size_t>>& dev,
                      std::size_t* skipped) {
  GlobalDists g = compute_global_distributions(model);
  double ll_sum = 0.0;
  std::size_t tokens = 0, skip = 0;
  for (const auto& words : dev) {
    if (words.size() < 2)
      throw std::invalid_argument("dev_perplexity: sentences must have >= 2 tokens");
    double ll =
        inside_nbl(sentence_inputs(model, g, words), nullptr)->value.data[0];
    if (ll == kNegInf) {
      ++skip;
      continue;
    }
    ll_sum += ll;
    tokens += words.size();
  }
  if (skipped) *skipped = skip;
  if (tokens == 0) throw std::runtime_error("dev_perplexity: no scorable sentences");
  return std::exp(-ll_sum / double(tokens));
}

FitResult fit(Model& model,
              const std::vector<std::vector<std::size_t>>& train,
              const std::vector<std::vector<std::size_t>>& dev,
              const TrainConfig& cfg) {
  cfg.check();
  std::vector<std::size_t> lengths;
  for (const auto& s : train) lengths.push_back(s.size());
  OptState st = make_opt_state(model);
  FitResult res;
  res.best = snapshot(model);
  double best_ppl = dev_perplexity(model, dev);
  res.best_epoch = 0;  // pre-training baseline until an epoch beats it
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    auto batches =
        make_batches(lengths, cfg.batch_size, cfg.max_len, cfg.seed, e);
    EpochStats stats = train_epoch(model, train, batches, st, cfg);
    double ppl = dev_perplexity(model, dev);
    res.history.push_back({e, stats.mean_nll, ppl, stats.seconds});
    if (ppl < best_ppl) {
      best_ppl = ppl;
      res.best = snapshot(model);
      res.best_epoch = e;
    }
  }
  return res;
}

void write_history_csv(const std::string& path,
                       const std::vector<HistoryRow>& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "epoch,mean_nll,dev_ppl,seconds\n";
  for (const auto& r : history)
    os << r.epoch << "," << r.mean_nll << "," << r.dev_ppl << ","
       << r.seconds << "\n";
}

}  // namespace nbl
