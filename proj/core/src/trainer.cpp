#include "attrsel/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "attrsel/error.hpp"
#include "attrsel/rng.hpp"
#include "binary_io.hpp"

namespace attrsel {

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'T', 'S', 'C', 'K', 'P', 'T', '1'};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::size_t t, double lr, double beta1, double beta2,
                 double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace

ModelParams::ModelParams(const ModelShape& shape) : shape_(shape) {
  const std::size_t in = shape.input_dim();
  std::size_t off = 0;
  w1_off_ = off;
  off += shape.hidden_dim * in;
  b1_off_ = off;
  off += shape.hidden_dim;
  w_off_ = off;
  off += shape.num_attributes * shape.head_fan_in();
  b_off_ = off;
  off += shape.num_attributes;
  e_off_ = off;
  off += shape.num_objects * shape.object_embed_dim;
  data_.assign(off, 0.0);
}

void forward(const ModelParams& params, std::span<const float> feature, ObjectIndex object,
             ForwardCache& cache) {
  const auto& s = params.shape();
  if (feature.size() != s.feature_dim) {
    throw DataError("feature dimension " + std::to_string(feature.size()) +
                    " does not match model feature_dim " + std::to_string(s.feature_dim));
  }
  cache.input.resize(s.input_dim());
  std::copy(feature.begin(), feature.end(), cache.input.begin());
  if (s.object_embed_dim > 0) {
    if (object >= s.num_objects) {
      throw DataError("unknown object index " + std::to_string(object));
    }
    const auto E = params.E();
    std::copy_n(E.begin() + static_cast<std::ptrdiff_t>(object * s.object_embed_dim),
                s.object_embed_dim, cache.input.begin() + static_cast<std::ptrdiff_t>(s.feature_dim));
  }

  std::span<const double> h = cache.input;
  if (s.hidden_dim > 0) {
    const auto W1 = params.W1();
    const auto b1 = params.b1();
    const std::size_t in = s.input_dim();
    cache.hidden.resize(s.hidden_dim);
    for (std::size_t j = 0; j < s.hidden_dim; ++j) {
      double z = b1[j];
      const double* row = W1.data() + j * in;
      for (std::size_t k = 0; k < in; ++k) z += row[k] * cache.input[k];
      cache.hidden[j] = std::tanh(z);
    }
    h = cache.hidden;
  }

  const auto W = params.W();
  const auto b = params.b();
  const std::size_t fan_in = s.head_fan_in();
  cache.probs.resize(s.num_attributes);
  for (std::size_t a = 0; a < s.num_attributes; ++a) {
    double z = b[a];
    const double* row = W.data() + a * fan_in;
    for (std::size_t k = 0; k < fan_in; ++k) z += row[k] * h[k];
    cache.probs[a] = sigmoid(z);
  }
}

std::vector<double> forward(const ModelParams& params, const Instance& instance) {
  ForwardCache cache;
  forward(params, instance.feature, instance.object, cache);
  return cache.probs;
}

void backward(const ModelParams& params, const ForwardCache& cache, ObjectIndex object,
              std::span<const double> dloss_dp, double weight, std::span<double> grad) {
  const auto& s = params.shape();
  const std::size_t fan_in = s.head_fan_in();
  const std::size_t in = s.input_dim();
  std::span<const double> h = s.hidden_dim > 0 ? std::span<const double>(cache.hidden)
                                               : std::span<const double>(cache.input);

  // Same layout as ModelParams: W1, b1, W, b, E.
  double* gW1 = grad.data();
  double* gb1 = gW1 + s.hidden_dim * in;
  double* gW = gb1 + s.hidden_dim;
  double* gb = gW + s.num_attributes * fan_in;
  double* gE = gb + s.num_attributes;

  const auto W = params.W();
  std::vector<double> dh(fan_in, 0.0);
  for (std::size_t a = 0; a < s.num_attributes; ++a) {
    const double p = cache.probs[a];
    const double dz = weight * dloss_dp[a] * p * (1.0 - p);
    if (dz == 0.0) continue;
    gb[a] += dz;
    double* grow = gW + a * fan_in;
    const double* wrow = W.data() + a * fan_in;
    for (std::size_t k = 0; k < fan_in; ++k) {
      grow[k] += dz * h[k];
      dh[k] += dz * wrow[k];
    }
  }

  std::vector<double> dinput;
  if (s.hidden_dim > 0) {
    const auto W1 = params.W1();
    dinput.assign(in, 0.0);
    for (std::size_t j = 0; j < s.hidden_dim; ++j) {
      const double t = cache.hidden[j];
      const double dpre = dh[j] * (1.0 - t * t);
      if (dpre == 0.0) continue;
      gb1[j] += dpre;
      double* grow = gW1 + j * in;
      const double* wrow = W1.data() + j * in;
      for (std::size_t k = 0; k < in; ++k) {
        grow[k] += dpre * cache.input[k];
        dinput[k] += dpre * wrow[k];
      }
    }
  } else {
    dinput = std::move(dh);
  }
  if (s.object_embed_dim > 0) {
    double* ge = gE + static_cast<std::size_t>(object) * s.object_embed_dim;
    for (std::size_t k = 0; k < s.object_embed_dim; ++k) ge[k] += dinput[s.feature_dim + k];
  }
}

ScoreMatrix predict(const ModelParams& params, std::span<const Instance> instances) {
  ScoreMatrix out;
  out.rows = instances.size();
  out.cols = params.shape().num_attributes;
  out.values.reserve(out.rows * out.cols);
  ForwardCache cache;
  for (const auto& inst : instances) {
    forward(params, inst.feature, inst.object, cache);
    out.values.insert(out.values.end(), cache.probs.begin(), cache.probs.end());
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(lr_head > 0.0) || !(lr_backbone > 0.0) || !std::isfinite(lr_head) ||
      !std::isfinite(lr_backbone)) {
    throw ConfigError("learning rates must be positive");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::size_t t, double lr, double beta1, double beta2, double eps) {
  if (state.m.size() != params.size()) state.m.assign(params.size(), 0.0);
  if (state.v.size() != params.size()) state.v.assign(params.size(), 0.0);
  adam_update(params, grads, state.m, state.v, t, lr, beta1, beta2, eps);
}

void adam_step(ModelParams& params, std::span<const double> grads, AdamState& state,
               std::size_t t, const TrainConfig& cfg) {
  auto data = params.data();
  const std::size_t n = data.size();
  if (state.m.size() != n) state.m.assign(n, 0.0);
  if (state.v.size() != n) state.v.assign(n, 0.0);
  const auto [hid_off, hid_len] = params.hidden_block();
  auto block = [&](std::size_t off, std::size_t len, double lr) {
    adam_update(data.subspan(off, len), grads.subspan(off, len),
                std::span<double>(state.m).subspan(off, len),
                std::span<double>(state.v).subspan(off, len), t, lr, cfg.adam_beta1,
                cfg.adam_beta2, cfg.adam_eps);
  };
  block(hid_off, hid_len, cfg.lr_backbone);
  block(hid_off + hid_len, n - (hid_off + hid_len), cfg.lr_head);
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  ModelParams params(shape);
  Rng rng(mix_seed(seed, 0x696E6974ULL));
  auto fill = [&](std::span<double> w, std::size_t fan_in) {
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
    for (auto& x : w) x = (2.0 * uniform01(rng) - 1.0) * bound;
  };
  fill(params.W1(), shape.input_dim());
  fill(params.W(), shape.head_fan_in());
  fill(params.E(), shape.object_embed_dim);
  return params;
}

namespace {

struct TrainItem {
  const Instance* instance;
  std::vector<AttrIndex> unannotated;
  const PresenceDistribution* presence = nullptr;
  IgnoreMask fixed_mask;
};

std::vector<TrainItem> prepare_items(const Dataset& train, const PresenceTable* scores,
                                     const LossConfig& loss_cfg, std::uint64_t seed) {
  const bool selective = loss_cfg.mode == LossMode::kSelective;
  if (selective && scores == nullptr) {
    throw ConfigError("selective loss mode requires presence scores");
  }
  std::vector<TrainItem> items;
  items.reserve(train.instances.size());
  for (const auto& inst : train.instances) {
    TrainItem item{&inst, {}, nullptr, {}};
    if (selective) {
      item.presence = scores->find(inst.id);
      if (item.presence == nullptr) {
        throw DataError("no presence scores for training instance '" + inst.id + "'");
      }
      item.unannotated = partial_sets(inst, train.num_attributes()).unannotated;
      if (loss_cfg.cadence == IgnoreCadence::kFixed) {
        Rng rng = instance_stream(seed, 0, inst.id);
        item.fixed_mask = sample_ignore_set(*item.presence, item.unannotated, loss_cfg.num_ignore,
                                            rng, loss_cfg.sample_with_replacement);
      }
    }
    items.push_back(std::move(item));
  }
  // Canonical order: training must not depend on how instances are stored.
  std::sort(items.begin(), items.end(), [](const TrainItem& x, const TrainItem& y) {
    return x.instance->id < y.instance->id;
  });
  return items;
}

IgnoreMask mask_for(const TrainItem& item, const LossConfig& loss_cfg, std::uint64_t seed,
                    std::size_t epoch) {
  if (item.presence == nullptr) return {};
  if (loss_cfg.cadence == IgnoreCadence::kFixed) return item.fixed_mask;
  Rng rng = instance_stream(seed, epoch, item.instance->id);
  return sample_ignore_set(*item.presence, item.unannotated, loss_cfg.num_ignore, rng,
                           loss_cfg.sample_with_replacement);
}

ModelShape shape_for(const Dataset& train, const TrainConfig& cfg) {
  return ModelShape{train.num_attributes(), train.feature_dim, train.objects.size(),
                    cfg.object_embed_dim, cfg.hidden_dim};
}

}  // namespace

double dataset_loss(const ModelParams& params, const Dataset& train, const FeasibleSets& fs,
                    const PresenceTable* scores, const LossConfig& loss_cfg,
                    std::uint64_t seed, std::size_t epoch, std::span<double> grad) {
  const auto items = prepare_items(train, scores, loss_cfg, seed);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  const double w = 1.0 / static_cast<double>(items.size());
  ForwardCache cache;
  std::vector<double> dldp(params.shape().num_attributes);
  double total = 0.0;
  for (const auto& item : items) {
    const auto mask = mask_for(item, loss_cfg, seed, epoch);
    forward(params, item.instance->feature, item.instance->object, cache);
    total += instance_loss_and_grad(cache.probs, *item.instance, fs, mask, loss_cfg,
                                    grad.empty() ? std::span<double>{} : std::span<double>(dldp));
    if (!grad.empty()) backward(params, cache, item.instance->object, dldp, w, grad);
  }
  return total * w;
}

TrainResult train(const Dataset& train, const FeasibleSets& fs, const PresenceTable* scores,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  const EpochEvaluator& evaluator) {
  train_cfg.validate();
  loss_cfg.validate();
  if (train.instances.empty()) throw DataError("training set is empty");

  const auto items = prepare_items(train, scores, loss_cfg, train_cfg.seed);
  TrainResult result{init_params(shape_for(train, train_cfg), train_cfg.seed), {}};
  ModelParams& params = result.params;

  AdamState adam;
  std::vector<double> grad(params.data().size());
  std::vector<double> dldp(train.num_attributes());
  std::vector<std::size_t> order(items.size());
  ForwardCache cache;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(mix_seed(train_cfg.seed, 0x73687566ULL), epoch));
    shuffle_in_place(order, shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
      const double w = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const TrainItem& item = items[order[k]];
        const auto mask = mask_for(item, loss_cfg, train_cfg.seed, epoch);
        forward(params, item.instance->feature, item.instance->object, cache);
        const double loss =
            instance_loss_and_grad(cache.probs, *item.instance, fs, mask, loss_cfg, dldp);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                             ", instance '" + item.instance->id + "'");
        }
        epoch_loss += loss;
        backward(params, cache, item.instance->object, dldp, w, grad);
      }
      for (double g : grad) {
        if (!std::isfinite(g)) {
          throw NumericError("non-finite gradient at epoch " + std::to_string(epoch));
        }
      }
      adam_step(params, grad, adam, ++step, train_cfg);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = epoch_loss / static_cast<double>(items.size());
    if (evaluator) rec.eval_map = evaluator(params, epoch);
    result.history.push_back(rec);
  }
  return result;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& s = ckpt.params.shape();
  if (ckpt.attributes.size() != s.num_attributes || ckpt.objects.size() != s.num_objects) {
    throw DataError("checkpoint name tables do not match the model shape");
  }
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(s.num_attributes));
  detail::put_u32(out, static_cast<std::uint32_t>(s.feature_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(s.num_objects));
  detail::put_u32(out, static_cast<std::uint32_t>(s.object_embed_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(s.hidden_dim));
  detail::put_u64(out, ckpt.config_hash);
  for (const auto& n : ckpt.attributes) detail::put_string(out, n);
  for (const auto& n : ckpt.objects) detail::put_string(out, n);
  // data() is laid out as W1, b1, W, b, E already.
  for (double x : ckpt.params.data()) detail::put_f32(out, static_cast<float>(x));
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, ckpt);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  detail::read_exact(in, magic, sizeof magic, "checkpoint header");
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  ModelShape s;
  s.num_attributes = detail::get_u32(in, "checkpoint header");
  s.feature_dim = detail::get_u32(in, "checkpoint header");
  s.num_objects = detail::get_u32(in, "checkpoint header");
  s.object_embed_dim = detail::get_u32(in, "checkpoint header");
  s.hidden_dim = detail::get_u32(in, "checkpoint header");
  Checkpoint ckpt;
  ckpt.config_hash = detail::get_u64(in, "checkpoint header");
  for (std::size_t i = 0; i < s.num_attributes; ++i) {
    ckpt.attributes.push_back(detail::get_string(in, "checkpoint attribute names"));
  }
  for (std::size_t i = 0; i < s.num_objects; ++i) {
    ckpt.objects.push_back(detail::get_string(in, "checkpoint object names"));
  }
  ckpt.params = ModelParams(s);
  for (auto& x : ckpt.params.data()) {
    const float f = detail::get_f32(in, "checkpoint tensors");
    if (!std::isfinite(f)) throw DataError("checkpoint contains non-finite parameters");
    x = f;
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace attrsel
