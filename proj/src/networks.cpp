#include "imvc/networks.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "imvc/kernels.hpp"

namespace imvc {

namespace {

Dense make_dense(std::size_t in, std::size_t out, Rng& rng) {
  Dense d{Matrix(in, out), Matrix(1, out)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : d.weight.values()) w = rng.uniform(-bound, bound);
  return d;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
  Mlp m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) m.layers.push_back(make_dense(dims[l], dims[l + 1], rng));
  return m;
}

Mlp zeros_mlp(const Mlp& m) {
  Mlp z;
  for (const Dense& d : m.layers)
    z.layers.push_back({Matrix(d.weight.rows(), d.weight.cols()), Matrix(1, d.bias.cols())});
  return z;
}

template <class Params, class Fn>
void visit(Params& p, Fn&& fn) {
  auto mlp = [&](const std::string& prefix, auto& m) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      fn(prefix + "." + std::to_string(l) + ".weight", m.layers[l].weight);
      fn(prefix + "." + std::to_string(l) + ".bias", m.layers[l].bias);
    }
  };
  for (std::size_t v = 0; v < p.encoders.size(); ++v) mlp("encoder" + std::to_string(v), p.encoders[v]);
  for (std::size_t v = 0; v < p.decoders.size(); ++v) mlp("decoder" + std::to_string(v), p.decoders[v]);
  mlp("projection", p.projection);
  fn(std::string("attention.query"), p.attn_query);
  fn(std::string("attention.value"), p.attn_value);
  fn(std::string("classifier"), p.classifier);
}

template <class Params>
auto tensors(Params& p) {
  std::vector<decltype(&p.classifier)> out;
  visit(p, [&](const std::string&, auto& m) { out.push_back(&m); });
  return out;
}

void add_bias(Matrix& y, const Matrix& bias) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
}

void check_width(const Matrix& x, std::size_t want, const char* what) {
  if (x.cols() != want) {
    throw Error(std::string(what) + ": expected " + std::to_string(want) + " columns, got " + shape_string(x));
  }
}

// dL/dlogits for softmax rows: P .* (dP - rowsum(dP .* P))
Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs) {
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double s = dot(probs.row(i), d_probs.row(i));
    for (std::size_t k = 0; k < probs.cols(); ++k) out(i, k) = probs(i, k) * (d_probs(i, k) - s);
  }
  return out;
}

AttentionCache attention_forward(const Matrix& z, const ModelParams& params) {
  AttentionCache c;
  c.z = z;
  c.query = kernels::matmul(z, params.attn_query);
  c.value = kernels::matmul(z, params.attn_value);
  const std::size_t n = z.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.attn_query.cols()));
  Vector sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = dot(c.query.row(i), c.query.row(i));
  const Matrix gram = kernels::matmul_nt(c.query, c.query);
  Matrix logits(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      logits(i, j) = i == j ? 0.0 : -std::max(0.0, sq[i] + sq[j] - 2.0 * gram(i, j)) * scale;
  // symmetric by construction; copy the upper triangle so rounding cannot break it
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) logits(i, j) = logits(j, i);
  c.kernel = logits;
  for (double& x : c.kernel.values()) x = std::exp(x);
  c.attn = logits;
  kernels::softmax_rows_inplace(c.attn);
  return c;
}

// Accumulates parameter grads; returns dZ.
Matrix attention_backward(const AttentionCache& c, const ModelParams& params, const Matrix& d_s,
                          ModelParams& grads) {
  const std::size_t n = c.z.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.attn_query.cols()));
  Matrix dz = d_s;
  const Matrix d_attn = kernels::matmul_nt(d_s, c.value);
  const Matrix d_value = kernels::matmul_tn(c.attn, d_s);
  grads.attn_value += kernels::matmul_tn(c.z, d_value);
  dz += kernels::matmul_nt(d_value, params.attn_value);

  const Matrix d_logits = softmax_backward(c.attn, d_attn);
  Matrix b(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) b(i, j) = i == j ? 0.0 : d_logits(i, j) + d_logits(j, i);
  const Matrix bq = kernels::matmul(b, c.query);
  Matrix dq(n, c.query.cols());
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < n; ++j) rs += b(i, j);
    for (std::size_t k = 0; k < dq.cols(); ++k) dq(i, k) = -2.0 * scale * (rs * c.query(i, k) - bq(i, k));
  }
  grads.attn_query += kernels::matmul_tn(c.z, dq);
  dz += kernels::matmul_nt(dq, params.attn_query);
  return dz;
}

// Accumulates classifier grads; returns d features.
Matrix classifier_backward(const ClassifierCache& c, const Matrix& d_probs, ModelParams& grads) {
  Matrix d_cos = softmax_backward(c.probs, d_probs);
  d_cos *= 1.0 / c.temperature;
  Matrix d_feat;
  cosine_matrix_backward(c.cos, d_cos, &d_feat, &grads.classifier);
  return d_feat;
}

void accumulate(Matrix& into, const Matrix& g) {
  if (g.empty()) return;
  if (into.empty()) {
    into = g;
  } else {
    into += g;
  }
}

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

constexpr const char* kCheckpointMagic = "imvc-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void ModelConfig::validate() const {
  if (view_dims.empty()) throw Error("ModelConfig: at least one view required");
  for (std::size_t d : view_dims)
    if (d == 0) throw Error("ModelConfig: view dimension must be positive");
  for (std::size_t h : encoder_hidden)
    if (h == 0) throw Error("ModelConfig: hidden width must be positive");
  if (latent_dim == 0 || projection_hidden == 0 || projection_dim == 0 || attention_dim == 0) {
    throw Error("ModelConfig: feature widths must be positive");
  }
  if (num_classes < 2) throw Error("ModelConfig: need at least 2 classes");
  if (!(classifier_temperature > 0.0)) throw Error("ModelConfig: classifier temperature must be positive");
}

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  for (std::size_t v = 0; v < config.num_views(); ++v) {
    Rng r = rng.split(1000 + v);
    std::vector<std::size_t> dims{config.view_dims[v]};
    dims.insert(dims.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
    dims.push_back(config.latent_dim);
    p.encoders.push_back(make_mlp(dims, r));
    p.decoders.push_back(make_mlp(std::vector<std::size_t>(dims.rbegin(), dims.rend()), r));
  }
  Rng r = rng.split(2000);
  p.projection = make_mlp({config.latent_dim, config.projection_hidden, config.projection_dim}, r);
  p.attn_query = make_dense(config.latent_dim, config.attention_dim, r).weight;
  p.attn_value = make_dense(config.latent_dim, config.latent_dim, r).weight;
  p.classifier = make_dense(config.latent_dim, config.num_classes, r).weight.transpose();
  p.normalize_classifier();
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  for (const Mlp& m : encoders) z.encoders.push_back(zeros_mlp(m));
  for (const Mlp& m : decoders) z.decoders.push_back(zeros_mlp(m));
  z.projection = zeros_mlp(projection);
  z.attn_query = Matrix(attn_query.rows(), attn_query.cols());
  z.attn_value = Matrix(attn_value.rows(), attn_value.cols());
  z.classifier = Matrix(classifier.rows(), classifier.cols());
  return z;
}

void ModelParams::for_each(const std::function<void(const std::string&, Matrix&)>& fn) { visit(*this, fn); }

void ModelParams::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
  visit(*this, fn);
}

void ModelParams::normalize_classifier() {
  for (std::size_t k = 0; k < classifier.rows(); ++k) {
    const double n = norm2(classifier.row(k));
    if (!(n > 0.0)) throw Error("classifier row " + std::to_string(k) + " has zero norm");
    for (double& x : classifier.row(k)) x /= n;
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache* cache) {
  if (mlp.layers.empty()) throw Error("mlp_forward: empty network");
  check_width(x, mlp.input_dim(), "mlp_forward");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    Matrix y = kernels::matmul(h, mlp.layers[l].weight);
    add_bias(y, mlp.layers[l].bias);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(y);
    }
    if (l + 1 < mlp.layers.size())
      for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    h = std::move(y);
  }
  return h;
}

Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& dy, Mlp& grad) {
  if (cache.pre.size() != mlp.layers.size()) throw Error("mlp_backward: cache does not match network");
  Matrix d = dy;
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    if (l + 1 < mlp.layers.size()) {
      const Matrix& pre = cache.pre[l];
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(pre.values()[i] > 0.0)) d.values()[i] = 0.0;
    }
    require_same_shape(d, cache.pre[l], "mlp_backward");
    grad.layers[l].weight += kernels::matmul_tn(cache.inputs[l], d);
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) grad.layers[l].bias(0, j) += d(i, j);
    d = kernels::matmul_nt(d, mlp.layers[l].weight);
  }
  return d;
}

Matrix encode(const Matrix& x, std::size_t view, const ModelParams& params) {
  if (view >= params.encoders.size()) throw Error("encode: view index out of range");
  return mlp_forward(params.encoders[view], x);
}

Matrix decode(const Matrix& z, std::size_t view, const ModelParams& params) {
  if (view >= params.decoders.size()) throw Error("decode: view index out of range");
  return mlp_forward(params.decoders[view], z);
}

StructureOutput structure_attention(std::span<const Matrix> zs, const ModelParams& params) {
  if (zs.empty()) throw Error("structure_attention: no views");
  const std::size_t n = zs[0].rows(), d = zs[0].cols();
  for (const Matrix& z : zs) {
    if (z.rows() != n || z.cols() != d) throw Error("structure_attention: views differ in shape");
  }
  check_width(zs[0], params.attn_query.rows(), "structure_attention");
  StructureOutput out;
  out.g = Matrix(n, n);
  out.u = Matrix(n, d);
  const double inv_v = 1.0 / static_cast<double>(zs.size());
  for (const Matrix& z : zs) {
    AttentionCache c = attention_forward(z, params);
    Matrix s = z + kernels::matmul(c.attn, c.value);
    for (std::size_t i = 0; i < out.g.size(); ++i) out.g.values()[i] += c.kernel.values()[i] * inv_v;
    for (std::size_t i = 0; i < out.u.size(); ++i) out.u.values()[i] += s.values()[i] * inv_v;
    out.s.push_back(std::move(s));
    out.caches.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < n; ++i) out.g(i, i) = 1.0;
  return out;
}

Matrix classify(const Matrix& features, const ModelParams& params, double temperature, ClassifierCache* cache) {
  if (!(temperature > 0.0)) throw Error("classify: temperature must be positive");
  if (!features.all_finite()) throw Error("classify: non-finite features");
  check_width(features, params.classifier.cols(), "classify");
  CosineMatrix cm = cosine_matrix(features, params.classifier);
  Matrix probs = cm.value;
  probs *= 1.0 / temperature;
  kernels::softmax_rows_inplace(probs);
  if (cache) {
    cache->temperature = temperature;
    cache->probs = probs;
    cache->cos = std::move(cm);
  }
  return probs;
}

ForwardCache forward(const ModelParams& params, const ModelConfig& config, std::span<const Matrix> xs,
                     ForwardParts parts) {
  const std::size_t nv = params.encoders.size();
  if (xs.size() != nv) throw Error("forward: expected " + std::to_string(nv) + " views, got " + std::to_string(xs.size()));
  ForwardCache c;
  c.parts = parts;
  c.params_version = params.version;
  c.batch = xs[0].rows();
  c.enc.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    if (xs[v].rows() != c.batch) throw Error("forward: views differ in sample count");
    c.z.push_back(mlp_forward(params.encoders[v], xs[v], &c.enc[v]));
  }
  if (parts == ForwardParts::Reconstruction) {
    c.dec.resize(nv);
    for (std::size_t v = 0; v < nv; ++v) c.recon.push_back(mlp_forward(params.decoders[v], c.z[v], &c.dec[v]));
    return c;
  }
  c.structure = structure_attention(c.z, params);
  c.proj_view.resize(nv);
  c.cls_view.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    c.h.push_back(mlp_forward(params.projection, c.z[v], &c.proj_view[v]));
    c.view_probs.push_back(classify(c.z[v], params, config.classifier_temperature, &c.cls_view[v]));
  }
  c.h_consensus = mlp_forward(params.projection, c.structure.u, &c.proj_consensus);
  c.consensus_probs = classify(c.structure.u, params, config.classifier_temperature, &c.cls_consensus);
  return c;
}

void backward(const ModelParams& params, const ForwardCache& cache, const OutputGrads& out, ModelParams& grads) {
  if (cache.params_version != params.version) {
    throw Error("backward: cache was built for parameter version " + std::to_string(cache.params_version) +
                ", current is " + std::to_string(params.version));
  }
  const std::size_t nv = cache.z.size();
  std::vector<Matrix> dz(nv);
  if (cache.parts == ForwardParts::Reconstruction) {
    for (std::size_t v = 0; v < nv; ++v) {
      if (v < out.recon.size() && !out.recon[v].empty()) {
        dz[v] = mlp_backward(params.decoders[v], cache.dec[v], out.recon[v], grads.decoders[v]);
      }
    }
  } else {
    Matrix du;
    if (!out.h_consensus.empty())
      accumulate(du, mlp_backward(params.projection, cache.proj_consensus, out.h_consensus, grads.projection));
    if (!out.consensus_probs.empty())
      accumulate(du, classifier_backward(cache.cls_consensus, out.consensus_probs, grads));
    for (std::size_t v = 0; v < nv; ++v) {
      if (v < out.h.size() && !out.h[v].empty())
        accumulate(dz[v], mlp_backward(params.projection, cache.proj_view[v], out.h[v], grads.projection));
      if (v < out.view_probs.size() && !out.view_probs[v].empty())
        accumulate(dz[v], classifier_backward(cache.cls_view[v], out.view_probs[v], grads));
      if (!du.empty()) {
        Matrix ds = du * (1.0 / static_cast<double>(nv));
        accumulate(dz[v], attention_backward(cache.structure.caches[v], params, ds, grads));
      }
    }
  }
  for (std::size_t v = 0; v < nv; ++v)
    if (!dz[v].empty()) mlp_backward(params.encoders[v], cache.enc[v], dz[v], grads.encoders[v]);
}

Predictions predict(const ModelParams& params, const ModelConfig& config, std::span<const Matrix> xs,
                    std::size_t chunk) {
  if (chunk == 0) throw Error("predict: chunk size must be positive");
  if (xs.empty()) throw Error("predict: no views");
  const std::size_t n = xs[0].rows(), k = params.classifier.rows();
  Predictions p;
  p.consensus = Matrix(n, k);
  p.views.assign(xs.size(), Matrix(n, k));
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    std::vector<Matrix> batch;
    for (const Matrix& x : xs) batch.push_back(x.rows_subset(idx));
    const ForwardCache c = forward(params, config, batch, ForwardParts::Clustering);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        p.consensus(idx[r], j) = c.consensus_probs(r, j);
        for (std::size_t v = 0; v < xs.size(); ++v) p.views[v](idx[r], j) = c.view_probs[v](r, j);
      }
    }
  }
  return p;
}

AdamState AdamState::for_params(const ModelParams& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
  auto p = tensors(params);
  auto g = tensors(grads);
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw Error("adam_step: parameter structure mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    require_same_shape(*p[i], *g[i], "adam_step");
    auto pv = p[i]->values();
    auto gv = g[i]->values();
    auto mv = m[i]->values();
    auto vv = v[i]->values();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      mv[j] = state.beta1 * mv[j] + (1.0 - state.beta1) * gv[j];
      vv[j] = state.beta2 * vv[j] + (1.0 - state.beta2) * gv[j] * gv[j];
      pv[j] -= lr * (mv[j] / c1) / (std::sqrt(vv[j] / c2) + state.eps);
    }
  }
  params.normalize_classifier();
  ++params.version;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  std::size_t count = 0;
  params.for_each([&](const std::string&, const Matrix&) { ++count; });
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << "tensors " << count << '\n';
  params.for_each([&](const std::string& name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
      out << '\n';
    }
  });
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

void load_checkpoint(ModelParams& params, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint: " + path.string());
  const std::string where = "checkpoint " + path.string();
  std::string magic, word;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) throw Error(where + ": bad header");
  if (version != kCheckpointVersion) throw Error(where + ": unsupported version " + std::to_string(version));
  if (!(in >> word >> count) || word != "tensors") throw Error(where + ": missing tensor count");
  std::size_t expected = 0;
  params.for_each([&](const std::string&, const Matrix&) { ++expected; });
  if (count != expected) {
    throw Error(where + ": has " + std::to_string(count) + " tensors, model has " + std::to_string(expected));
  }
  ModelParams loaded = params;
  loaded.for_each([&](const std::string& name, Matrix& m) {
    std::string got;
    std::size_t rows = 0, cols = 0;
    if (!(in >> got >> rows >> cols)) throw Error(where + ": truncated before tensor " + name);
    if (got != name) throw Error(where + ": expected tensor " + name + ", found " + got);
    if (rows != m.rows() || cols != m.cols()) {
      throw Error(where + ": shape mismatch for " + name + ": file " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", model " + shape_string(m));
    }
    for (double& x : m.values()) {
      std::string tok;
      if (!(in >> tok)) throw Error(where + ": truncated in tensor " + name);
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw Error(where + ": bad number '" + tok + "' in tensor " + name);
      }
    }
  });
  if (in >> word) throw Error(where + ": trailing data after last tensor");
  loaded.version = params.version + 1;
  params = std::move(loaded);
}

}  // namespace imvc
