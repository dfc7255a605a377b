#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrsel/dataset.hpp"
#include "attrsel/feasible.hpp"
#include "attrsel/loss.hpp"
#include "attrsel/vlm.hpp"

namespace attrsel {

struct ModelShape {
  std::size_t num_attributes = 0;
  std::size_t feature_dim = 0;
  std::size_t num_objects = 0;
  std::size_t object_embed_dim = 0;
  std::size_t hidden_dim = 0;  // 0: linear head

  std::size_t input_dim() const { return feature_dim + object_embed_dim; }
  std::size_t head_fan_in() const { return hidden_dim == 0 ? input_dim() : hidden_dim; }
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Attribute classifier p = sigmoid(W h + b) with h = [x ; E[o]] for the
/// linear head, or h = tanh(W1 [x ; E[o]] + b1) with a hidden layer.
/// All tensors live in one flat buffer so the optimizer sees a single vector.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const ModelShape& shape);

  const ModelShape& shape() const { return shape_; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  // Row-major views: W is A x head_fan_in, W1 is hidden_dim x input_dim,
  // E is num_objects x object_embed_dim.
  std::span<double> W() { return view(w_off_, shape_.num_attributes * shape_.head_fan_in()); }
  std::span<double> b() { return view(b_off_, shape_.num_attributes); }
  std::span<double> E() { return view(e_off_, shape_.num_objects * shape_.object_embed_dim); }
  std::span<double> W1() { return view(w1_off_, shape_.hidden_dim * shape_.input_dim()); }
  std::span<double> b1() { return view(b1_off_, shape_.hidden_dim); }
  std::span<const double> W() const { return cview(w_off_, shape_.num_attributes * shape_.head_fan_in()); }
  std::span<const double> b() const { return cview(b_off_, shape_.num_attributes); }
  std::span<const double> E() const { return cview(e_off_, shape_.num_objects * shape_.object_embed_dim); }
  std::span<const double> W1() const { return cview(w1_off_, shape_.hidden_dim * shape_.input_dim()); }
  std::span<const double> b1() const { return cview(b1_off_, shape_.hidden_dim); }

  /// Offset and length of the hidden-layer block (W1, b1) inside data().
  std::pair<std::size_t, std::size_t> hidden_block() const {
    return {w1_off_, shape_.hidden_dim * shape_.input_dim() + shape_.hidden_dim};
  }

  friend bool operator==(const ModelParams& x, const ModelParams& y) {
    return x.shape_ == y.shape_ && x.data_ == y.data_;
  }

 private:
  std::span<double> view(std::size_t off, std::size_t n) { return {data_.data() + off, n}; }
  std::span<const double> cview(std::size_t off, std::size_t n) const {
    return {data_.data() + off, n};
  }

  ModelShape shape_;
  std::vector<double> data_;
  std::size_t w1_off_ = 0, b1_off_ = 0, w_off_ = 0, b_off_ = 0, e_off_ = 0;
};

/// Intermediate activations of one forward pass, reused by backward().
struct ForwardCache {
  std::vector<double> input;
  std::vector<double> hidden;
  std::vector<double> probs;
};

/// Throws DataError for an out-of-range object when object_embed_dim > 0 or
/// a feature of the wrong length.
void forward(const ModelParams& params, std::span<const float> feature, ObjectIndex object,
             ForwardCache& cache);
std::vector<double> forward(const ModelParams& params, const Instance& instance);

/// Accumulates dL/dtheta into `grad` (same layout as params.data()) given
/// dL/dp for the cached forward pass, scaled by `weight`.
void backward(const ModelParams& params, const ForwardCache& cache, ObjectIndex object,
              std::span<const double> dloss_dp, double weight, std::span<double> grad);

/// Row-major n x A probability matrix.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

ScoreMatrix predict(const ModelParams& params, std::span<const Instance> instances);

struct TrainConfig {
  double lr_backbone = 1e-3;  // hidden layer, when present
  double lr_head = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t object_embed_dim = 8;
  std::size_t hidden_dim = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update of `params` in place; t >= 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::size_t t, double lr, double beta1, double beta2, double eps);

/// Model-level step: the hidden block uses lr_backbone, everything else lr_head.
void adam_step(ModelParams& params, std::span<const double> grads, AdamState& state,
               std::size_t t, const TrainConfig& cfg);

ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::optional<double> eval_map;
};

using EpochEvaluator = std::function<std::optional<double>(const ModelParams&, std::size_t epoch)>;

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
};

/// Full-dataset mean loss at `params`, with ignore masks drawn for `epoch`.
/// Used for diagnostics and gradient checks.
double dataset_loss(const ModelParams& params, const Dataset& train, const FeasibleSets& fs,
                    const PresenceTable* scores, const LossConfig& loss_cfg,
                    std::uint64_t seed, std::size_t epoch, std::span<double> grad = {});

/// Mini-batch Adam training. Deterministic given train_cfg.seed and
/// independent of the storage order of train.instances. Throws ConfigError
/// when selective mode lacks scores and NumericError on a non-finite loss.
TrainResult train(const Dataset& train, const FeasibleSets& fs, const PresenceTable* scores,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  const EpochEvaluator& evaluator = {});

struct Checkpoint {
  ModelParams params;
  std::vector<std::string> attributes;
  std::vector<std::string> objects;
  std::uint64_t config_hash = 0;
};

// Binary little-endian layout:
//   "ATSCKPT1" | u32 A | u32 feature_dim | u32 n_objects | u32 embed_dim |
//   u32 hidden_dim | u64 config_hash | A names | n_objects names |
//   f32 tensors W1, b1 (hidden only), W, b, E
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace attrsel
