#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbl/neural.hpp"

namespace nbl {

struct TrainConfig {
  double lr = 0.001;
  double beta1 = 0.75;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::size_t max_len = 40;
  std::uint64_t seed = 0;

  void check() const;
};

// Adam accumulators, parallel to Model::weights.
struct OptState {
  std::vector<Array> m, v;
  std::size_t step = 0;
};
OptState make_opt_state(const Model& model);

// Standard bias-corrected Adam; grads follow the minimize-NLL convention.
// A NaN gradient aborts the step with a diagnostic exception.
void adam_step(Model& model, const std::vector<Array>& grads, OptState& st,
               const TrainConfig& cfg);

struct EpochStats {
  double mean_nll = 0.0;
  double grad_norm = 0.0;  // L2 of the last batch's mean gradient
  double seconds = 0.0;
  std::size_t n_sentences = 0;
  std::size_t skipped = 0;  // zero-probability sentences
};

// One pass over `batches` (indices into `sentences`): per batch, mean
// per-sentence NLL via inside_nbl, summed per-sentence gradients, one
// adam_step. Gradient maps are harvested after each sentence backward.
EpochStats train_epoch(Model& model,
                       const std::vector<std::vector<std::size_t>>& sentences,
                       const std::vector<std::vector<std::size_t>>& batches,
                       OptState& st, const TrainConfig& cfg);

// exp(-(sum log p(w)) / (sum token counts)); -inf sentences excluded
// and counted into *skipped when provided.
double dev_perplexity(const Model& model,
                      const std::vector<std::vector<std::size_t>>& dev,
                      std::size_t* skipped = nullptr);

struct HistoryRow {
  std::size_t epoch = 0;
  double mean_nll = 0.0, dev_ppl = 0.0, seconds = 0.0;
};

struct FitResult {
  Model best;  // weights from the epoch with minimum dev perplexity
  std::size_t best_epoch = 0;
  std::vector<HistoryRow> history;
};

FitResult fit(Model& model,
              const std::vector<std::vector<std::size_t>>& train,
              const std::vector<std::vector<std::size_t>>& dev,
              const TrainConfig& cfg);

// CSV with header: epoch,mean_nll,dev_ppl,seconds
void write_history_csv(const std::string& path,
                       const std::vector<HistoryRow>& history);

}  // namespace nbl
