#pragma once

// Training objective (cross-entropy on logistic scores plus MAE/MSE on every
// depth stage), AdamW, the two-stage schedule, checkpoints and loss logs.

#include "clude/model.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace clude {

struct LossWeights {
  double ce = 1.0;
  double mae = 1.0;
  double mse = 1.0;

  void validate() const;
};

/// Mask of pixels with valid ground truth.
Grid valid_mask(const DepthMap& gt);

/// -sum_s (1/|Omega|) sum_Omega sum_i t_i log max(L_s,i, 1e-12). Every score volume
/// must already be at the target's resolution.
Var ce_loss(Graph& g, const std::vector<Var>& scores, const NdArray& target, const Grid& omega);

/// (sum_s mean_Omega |gt - D_s|, sum_s mean_Omega (gt - D_s)^2) for full-resolution [1,H,W] depths.
std::pair<Var, Var> mae_mse_loss(Graph& g, const std::vector<Var>& depths, const DepthMap& gt, const Grid& omega);

struct LossParts {
  Var ce, mae, mse;
};

Var total_loss(const LossParts& parts, const LossWeights& w);

/// Upsamples every stage of a forward pass to the gt resolution and assembles
/// the three loss terms.
LossParts compute_losses(Graph& g, const ForwardResult& r, const DepthMap& gt, const DepthGuidance& initial,
                         double temperature);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Decoupled weight decay Adam. Frozen parameters are skipped entirely.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg = {});
  void step(double lr);

  const AdamWConfig& config() const { return cfg_; }
  std::vector<NdArray>& first_moments() { return m_; }
  std::vector<NdArray>& second_moments() { return v_; }
  std::vector<std::int64_t>& step_counts() { return t_; }
  const std::vector<NdArray>& first_moments() const { return m_; }
  const std::vector<NdArray>& second_moments() const { return v_; }
  const std::vector<std::int64_t>& step_counts() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<NdArray> m_, v_;
  std::vector<std::int64_t> t_;
};

/// Non-increasing piecewise-constant learning rates, scaled so that `peak`
/// replaces the first value. The stage-1 table steps down at fractions of the
/// run; the stage-2 table spends 10/16 of the run on its first five values.
double stage1_learning_rate(Index step, Index total, double peak);
double stage2_learning_rate(Index step, Index total, double peak);

struct TrainConfig {
  Index stage1_steps = 2000;
  Index stage2_steps = 300;
  Index batch = 1;
  double lr = 5e-4;
  double weight_decay = 0.05;
  double clip = 0.0;  ///< global gradient-norm clip; 0 disables
  std::uint64_t seed = 0;
  LossWeights weights;
};

struct LossRecord {
  Index step = 0;
  double ce = 0.0, mae = 0.0, mse = 0.0, total = 0.0;
};

struct TrainSample {
  SparseDepthMap sparse;
  RgbImage rgb;
  DepthMap gt;
};

/// Two-stage optimisation. Stage 1 trains every parameter except the prune
/// block on D1..D4; stage 2 trains only the prune block on D1..D5.
class Trainer {
 public:
  Trainer(CludeModel& model, TrainConfig cfg);

  Index total_steps() const { return cfg_.stage1_steps + cfg_.stage2_steps; }
  Index next_step() const { return step_; }
  bool done() const { return step_ >= total_steps(); }

  /// Runs one optimisation step; throws NumericError naming the step on a non-finite loss.
  LossRecord step(const std::vector<TrainSample>& data);
  /// Runs until done; `on_step` sees every record.
  void run(const std::vector<TrainSample>& data, const std::function<void(const LossRecord&)>& on_step = {});

  /// Sample indices used by a given step.
  std::vector<std::size_t> batch_indices(Index step, std::size_t n) const;

  const std::vector<LossRecord>& log() const { return log_; }

  void save_checkpoint(const std::filesystem::path& path, const std::string& config_text) const;
  /// Restores parameters, optimizer state and the step counter; returns the stored config text.
  std::string load_checkpoint(const std::filesystem::path& path);

 private:
  void set_stage(int stage);

  CludeModel& model_;
  TrainConfig cfg_;
  AdamW opt_;
  Index step_ = 0;
  std::vector<LossRecord> log_;
};

/// Model parameters only, without optimizer state.
void save_model(const std::filesystem::path& path, const CludeModel& model, const std::string& config_text);
/// Reads the stored config text of a checkpoint.
std::string read_checkpoint_config(const std::filesystem::path& path);
/// Loads parameter values into an already constructed model.
void load_model(const std::filesystem::path& path, CludeModel& model);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log);

}  // namespace clude
