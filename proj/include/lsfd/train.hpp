#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lsfd/data.hpp"
#include "lsfd/losses.hpp"

namespace lsfd {

struct TrainConfig {
  double lr = 1e-4;
  int halve_at_epoch = 150;  // lr/2 from this epoch on (single halving)
  int epochs = 300;
  int batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  uint64_t seed = 0;
  int steps_per_epoch = 1000;
  int patch_size = 48;     // LR patch side
  double grad_clip = 0.0;  // global-norm clip, 0 = off

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t t = 0;

  void init(const std::vector<Parameter*>& params);
};

// Bias-corrected ADAM update. Gradients must be fresh for this step; a
// non-finite gradient aborts with the parameter named.
void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               double lr_t, const TrainConfig& cfg);

double lr_at(int epoch, const TrainConfig& cfg);

// Binary format: 8-byte magic, u64 header length, JSON header (version,
// model config, rng/optimizer state, tensor directory with name, shape and
// byte offset), then raw little-endian f64 payloads in directory order.
struct Checkpoint {
  int version = 1;
  ModelConfig model;
  std::vector<std::pair<std::string, Tensor>> tensors;
  bool has_optimizer = false;
  int64_t adam_t = 0;
  uint64_t seed = 0;
  int epoch = 0;  // completed epochs
  double best_val_psnr = 0.0;

  const Tensor* find(const std::string& name) const;
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Instantiates the checkpointed architecture and restores "model." tensors.
Model model_from_checkpoint(const Checkpoint& ckpt);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_sr = 0.0;
  double loss_distill = 0.0;
  double loss_fft = 0.0;
  double val_psnr = 0.0;

  std::string to_json_line() const;
};

struct TrainResult {
  Checkpoint best;  // best-val-PSNR weights (deployable)
  Checkpoint last;  // final weights + optimizer state (resumable)
  std::vector<EpochLog> log;
  std::vector<double> step_losses;
  double best_val_psnr = 0.0;
};

struct TrainJob {
  ModelConfig student;
  std::optional<Checkpoint> teacher;  // frozen; required unless vanilla
  Method method = Method::Vanilla;
  LossWeights weights;
  bool sfd_flow_through = false;
  TrainConfig train;
  std::optional<Checkpoint> resume_from;  // continue from a `last` checkpoint
  std::string log_path;  // append JSONL epoch lines when non-empty
};

TrainResult run_training(const TrainJob& job, const Corpus& corpus);

// Plain L1-to-HR training of one network.
TrainResult train_teacher(const ModelConfig& model_cfg, const TrainConfig& cfg,
                          const Corpus& corpus,
                          const std::string& log_path = "");

// Student training against a frozen teacher checkpoint.
TrainResult distill(const Checkpoint& teacher_ckpt,
                    const ModelConfig& student_cfg, Method method,
                    const LossWeights& weights, const TrainConfig& cfg,
                    const Corpus& corpus, const std::string& log_path = "",
                    bool sfd_flow_through = false);

}  // namespace lsfd
