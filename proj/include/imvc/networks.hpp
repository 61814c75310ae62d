#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "imvc/core_math.hpp"
#include "imvc/matrix.hpp"
#include "imvc/rng.hpp"

namespace imvc {

/// Shapes of every learnable component.
struct ModelConfig {
  std::vector<std::size_t> view_dims;
  std::vector<std::size_t> encoder_hidden = {64};
  std::size_t latent_dim = 32;
  std::size_t projection_hidden = 32;
  std::size_t projection_dim = 16;
  std::size_t attention_dim = 16;
  std::size_t num_classes = 5;
  /// Cosine-classifier temperature (logits = cos / temperature).
  double classifier_temperature = 1.0;

  std::size_t num_views() const { return view_dims.size(); }
  void validate() const;
};

/// y = x W + b. W is in x out, b is 1 x out.
struct Dense {
  Matrix weight;
  Matrix bias;
};

/// ReLU after every layer except the last.
struct Mlp {
  std::vector<Dense> layers;
  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }
};

/// Every learnable tensor of the model.
///
/// Per view: encoder D_v -> hidden -> d and a mirrored decoder. Shared: a
/// projection head d -> hidden -> p applied to Z^v and to U, a single-head
/// attention block with a tied query/key map and a value map, and a cosine
/// classifier with unit-norm rows.
struct ModelParams {
  std::vector<Mlp> encoders;
  std::vector<Mlp> decoders;
  Mlp projection;
  Matrix attn_query;  // d x attention_dim, used for both queries and keys
  Matrix attn_value;  // d x d
  Matrix classifier;  // K x d
  /// Bumped by every optimizer step; caches record it to detect staleness.
  std::uint64_t version = 0;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit classifier rows.
  static ModelParams init(const ModelConfig& config, Rng& rng);
  /// Same shapes, all zeros.
  ModelParams zeros_like() const;

  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  void normalize_classifier();
  std::size_t parameter_count() const;
};

struct MlpCache {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
};

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache* cache = nullptr);
/// Accumulates parameter gradients into `grad`; returns d/dx.
Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& dy, Mlp& grad);

/// Z^v = f_v(x^v)
Matrix encode(const Matrix& x, std::size_t view, const ModelParams& params);
/// x_hat^v = g_v(z)
Matrix decode(const Matrix& z, std::size_t view, const ModelParams& params);

struct AttentionCache {
  Matrix z;
  Matrix query;   // z * W_q
  Matrix value;   // z * W_v
  Matrix attn;    // row softmax of -|q_i - q_j|^2 / sqrt(a)
  Matrix kernel;  // exp(-|q_i - q_j|^2 / sqrt(a)): attention divided by its row max
};

struct StructureOutput {
  std::vector<Matrix> s;  // S^v = Z^v + A^v (Z^v W_v)
  Matrix g;               // mean over views of the row-max-normalized attention
  Matrix u;               // mean over views of S^v
  std::vector<AttentionCache> caches;
};

/// Single-head attention per view with shared weights. The logits are negative
/// squared query distances, so every row peaks on its own sample: dividing a
/// row by its maximum gives exp(logit), which is symmetric with unit diagonal.
StructureOutput structure_attention(std::span<const Matrix> zs, const ModelParams& params);

struct ClassifierCache {
  double temperature = 1.0;
  Matrix probs;
  CosineMatrix cos;  // features vs classifier rows
};

/// softmax(cos(features, classifier rows) / temperature). Throws on zero-norm rows.
Matrix classify(const Matrix& features, const ModelParams& params, double temperature,
                ClassifierCache* cache = nullptr);

/// Which parts of the graph a forward pass evaluates.
enum class ForwardParts {
  Reconstruction,  // encoders + decoders
  Clustering,      // encoders + attention + projection + classifier
};

/// Everything a backward pass needs, plus the named intermediate features.
struct ForwardCache {
  ForwardParts parts = ForwardParts::Clustering;
  std::uint64_t params_version = 0;
  std::size_t batch = 0;
  std::vector<MlpCache> enc, dec, proj_view;
  MlpCache proj_consensus;
  std::vector<Matrix> z, recon, h, view_probs;
  StructureOutput structure;
  Matrix h_consensus;  // projection head applied to U
  Matrix consensus_probs;
  std::vector<ClassifierCache> cls_view;
  ClassifierCache cls_consensus;
};

ForwardCache forward(const ModelParams& params, const ModelConfig& config,
                     std::span<const Matrix> xs, ForwardParts parts);

/// Gradients of a scalar loss w.r.t. the forward outputs. Empty matrices mean zero.
struct OutputGrads {
  std::vector<Matrix> recon;       // per view
  std::vector<Matrix> h;           // per view
  std::vector<Matrix> view_probs;  // per view
  Matrix h_consensus;
  Matrix consensus_probs;
};

/// Exact reverse-mode gradients; accumulates into `grads`. The structure matrix
/// G is treated as a constant. Throws if the cache is stale.
void backward(const ModelParams& params, const ForwardCache& cache, const OutputGrads& out,
              ModelParams& grads);

/// Consensus and per-view class probabilities for a full dataset, evaluated in
/// fixed-order chunks of `chunk` rows.
struct Predictions {
  Matrix consensus;
  std::vector<Matrix> views;
};
Predictions predict(const ModelParams& params, const ModelConfig& config,
                    std::span<const Matrix> xs, std::size_t chunk);

/// Adam with bias correction.
struct AdamState {
  ModelParams m;
  ModelParams v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ModelParams& params);
};

/// One Adam update; classifier rows are re-normalized afterwards.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr);

/// Text checkpoint: a version line, then per tensor "name rows cols" and its values.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
/// Loads into `params`, whose shapes must match the file exactly.
void load_checkpoint(ModelParams& params, const std::filesystem::path& path);

}  // namespace imvc
