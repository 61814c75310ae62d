#include "imvc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "imvc/core_math.hpp"
#include "imvc/losses.hpp"

namespace imvc {

namespace {

using Json = nlohmann::ordered_json;

std::string format_number(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T out{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) throw Error("config: bad value for " + key + ": '" + text + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error("config: bad value for " + key + ": '" + text + "' (expected true/false)");
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <class T>
Field field(const std::string& key, T& ref) {
  Field f{key, {}, {}};
  if constexpr (std::is_same_v<T, std::string>) {
    f.get = [&ref] { return ref; };
    f.set = [&ref](const std::string& v) { ref = v; };
  } else if constexpr (std::is_same_v<T, bool>) {
    f.get = [&ref] { return std::string(ref ? "true" : "false"); };
    f.set = [&ref, key](const std::string& v) { ref = parse_bool(key, v); };
  } else if constexpr (std::is_floating_point_v<T>) {
    f.get = [&ref] { return format_number(ref); };
    f.set = [&ref, key](const std::string& v) { ref = parse_number<T>(key, v); };
  } else {
    f.get = [&ref] { return std::to_string(ref); };
    f.set = [&ref, key](const std::string& v) { ref = parse_number<T>(key, v); };
  }
  return f;
}

std::vector<Field> fields(ExperimentConfig& c) {
  return {
      field("data_dir", c.data_dir),
      field("num_classes", c.num_classes),
      field("num_views", c.num_views),
      field("num_samples", c.num_samples),
      field("ratio", c.ratio),
      field("view_dim", c.view_dim),
      field("gen_latent_dim", c.gen_latent_dim),
      field("separation", c.separation),
      field("noise_std", c.noise_std),
      field("hidden_dim", c.hidden_dim),
      field("latent_dim", c.latent_dim),
      field("projection_hidden", c.projection_hidden),
      field("projection_dim", c.projection_dim),
      field("attention_dim", c.attention_dim),
      field("epochs_stage1", c.epochs_stage1),
      field("epochs_stage2", c.epochs_stage2),
      field("epochs_stage3", c.epochs_stage3),
      field("batch_size", c.batch_size),
      field("lr", c.lr),
      field("alpha", c.alpha),
      field("tau_f", c.tau_f),
      field("tau_l", c.tau_l),
      field("classifier_temperature", c.classifier_temperature),
      field("lambda_base", c.lambda_base),
      field("lambda_max", c.lambda_max),
      field("epsilon", c.epsilon),
      field("beta", c.beta),
      field("solver_max_iter", c.solver_max_iter),
      field("solver_tol", c.solver_tol),
      field("w_v", c.w_v),
      field("w_t", c.w_t),
      field("ce_weight", c.ce_weight),
      field("im_weight", c.im_weight),
      field("keep_align", c.keep_align),
      field("balanced_labels", c.balanced_labels),
      field("seed", c.seed),
      field("out_dir", c.out_dir),
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Batches = std::vector<std::vector<std::size_t>>;

// Shuffled mini-batches; a trailing batch of one sample joins the previous one
// because the contrastive terms need at least two samples.
Batches make_batches(std::size_t n, std::size_t batch_size, Rng rng) {
  const std::vector<std::size_t> order = rng.permutation(n);
  Batches out;
  for (std::size_t start = 0; start < n; start += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].insert(out[out.size() - 2].end(), out.back().begin(), out.back().end());
    out.pop_back();
  }
  return out;
}

std::vector<Matrix> gather(const MultiViewDataset& data, const std::vector<std::size_t>& idx) {
  std::vector<Matrix> out;
  for (const Matrix& v : data.views) out.push_back(v.rows_subset(idx));
  return out;
}

Rng stage_rng(const ExperimentConfig& config, int stage, std::size_t epoch) {
  return Rng(config.seed).split(20 + static_cast<std::uint64_t>(stage)).split(epoch);
}

void require_finite(double loss, int stage, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw Error("stage " + std::to_string(stage) + " diverged at epoch " + std::to_string(epoch + 1) +
                " (loss is not finite)");
  }
}

std::vector<double> uniform_weights(std::size_t v) { return std::vector<double>(v, 1.0 / static_cast<double>(v)); }

std::vector<int> argmax_labels(const Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) out[i] = static_cast<int>(argmax(probs.row(i)));
  return out;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error("config: " + what);
  };
  if (data_dir.empty()) gen_spec().validate();
  require(hidden_dim > 0 && latent_dim > 0 && projection_hidden > 0 && projection_dim > 0 && attention_dim > 0,
          "network widths must be positive");
  require(batch_size >= 2, "batch_size must be at least 2");
  require(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0, 1]");
  require(tau_f > 0.0 && tau_l > 0.0 && classifier_temperature > 0.0, "temperatures must be positive");
  require(lambda_base > 0.0 && lambda_base <= lambda_max && lambda_max <= 1.0,
          "need 0 < lambda_base <= lambda_max <= 1");
  require(epsilon > 0.0, "epsilon must be positive");
  require(beta > 0.0, "beta must be positive");
  require(solver_max_iter > 0 && solver_tol > 0.0, "solver limits must be positive");
  require(w_v >= 0.0 && w_t >= 0.0 && std::abs(w_v + w_t - 1.0) <= 1e-12, "w_v and w_t must sum to 1");
  require(ce_weight >= 0.0 && im_weight >= 0.0, "loss weights must be nonnegative");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (Field& f : fields(*this)) {
    if (f.key == key) {
      f.set(value);
      return;
    }
  }
  throw Error("config: unknown key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> out;
  ExperimentConfig copy = *this;
  for (const Field& f : fields(copy)) out.emplace_back(f.key, f.get());
  return out;
}

GenSpec ExperimentConfig::gen_spec() const {
  GenSpec g;
  g.num_classes = num_classes;
  g.num_views = num_views;
  g.num_samples = num_samples;
  g.ratio = ratio;
  g.view_dims.assign(num_views, view_dim);
  g.latent_dim = gen_latent_dim;
  g.separation = separation;
  g.noise_std = noise_std;
  g.seed = seed;
  return g;
}

ModelConfig ExperimentConfig::model_config(const MultiViewDataset& data) const {
  ModelConfig m;
  m.view_dims = data.view_dims();
  m.encoder_hidden = {hidden_dim};
  m.latent_dim = latent_dim;
  m.projection_hidden = projection_hidden;
  m.projection_dim = projection_dim;
  m.attention_dim = attention_dim;
  m.num_classes = data.num_classes;
  m.classifier_temperature = classifier_temperature;
  return m;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [k, v] : config.echo()) out += k + "=" + v + "\n";
  return out;
}

MultiViewDataset load_or_generate(const ExperimentConfig& config) {
  if (!config.data_dir.empty()) return load_dataset(config.data_dir);
  return generate(config.gen_spec());
}

TrainState init_training(const ExperimentConfig& config, const MultiViewDataset& data) {
  TrainState s;
  s.model = config.model_config(data);
  Rng rng = Rng(config.seed).split(10);
  s.params = ModelParams::init(s.model, rng);
  return s;
}

void train_stage1(const ExperimentConfig& config, const MultiViewDataset& data, TrainState& state,
                  std::vector<EpochRecord>& log) {
  AdamState adam = AdamState::for_params(state.params);
  for (std::size_t e = 0; e < config.epochs_stage1; ++e) {
    double total = 0.0;
    for (const auto& idx : make_batches(data.num_samples(), config.batch_size, stage_rng(config, 1, e))) {
      const std::vector<Matrix> xs = gather(data, idx);
      const ForwardCache cache = forward(state.params, state.model, xs, ForwardParts::Reconstruction);
      OutputGrads out;
      const double b = static_cast<double>(idx.size());
      total += reconstruction_loss(xs, cache.recon, &out.recon, 1.0 / b).value;
      ModelParams grads = state.params.zeros_like();
      backward(state.params, cache, out, grads);
      adam_step(state.params, grads, adam, config.lr);
    }
    const double loss = total / static_cast<double>(data.num_samples());
    require_finite(loss, 1, e);
    log.push_back({1, e + 1, loss, {}, {}, {}, {}, {}, {}, {}});
  }
}

void train_stage2(const ExperimentConfig& config, const MultiViewDataset& data, TrainState& state,
                  std::vector<EpochRecord>& log) {
  AdamState adam = AdamState::for_params(state.params);
  const std::vector<double> weights = uniform_weights(data.num_views());
  for (std::size_t e = 0; e < config.epochs_stage2; ++e) {
    double total = 0.0;
    const Batches batches = make_batches(data.num_samples(), config.batch_size, stage_rng(config, 2, e));
    for (const auto& idx : batches) {
      const std::vector<Matrix> xs = gather(data, idx);
      const ForwardCache c = forward(state.params, state.model, xs, ForwardParts::Clustering);
      OutputGrads out;
      total += align_loss(c.h, c.h_consensus, c.structure.g, c.view_probs, c.consensus_probs, weights,
                          config.tau_f, config.tau_l, &out)
                   .value;
      ModelParams grads = state.params.zeros_like();
      backward(state.params, c, out, grads);
      adam_step(state.params, grads, adam, config.lr);
    }
    const double loss = total / static_cast<double>(batches.size());
    require_finite(loss, 2, e);
    log.push_back({2, e + 1, loss, {}, {}, {}, {}, {}, {}, {}});
  }
}

PseudoLabels label_dataset(const ExperimentConfig& config, const MultiViewDataset& data, const TrainState& state,
                           double lambda) {
  const Predictions pred = predict(state.params, state.model, data.views, config.batch_size);
  const MixedPrediction mixed = mix_predictions(pred.consensus, pred.views, config.alpha);
  if (config.balanced_labels) {
    return assign_balanced_labels(mixed, config.epsilon, config.solver_max_iter, config.solver_tol);
  }
  ot::PotConfig pot;
  pot.epsilon = config.epsilon;
  pot.beta = {config.beta};
  pot.max_iter = config.solver_max_iter;
  pot.tol = config.solver_tol;
  return assign_pot_labels(mixed, lambda, pot);
}

std::optional<PseudoLabels> train_stage3(const ExperimentConfig& config, const MultiViewDataset& data,
                                         TrainState& state, std::vector<EpochRecord>& log) {
  const std::size_t epochs = config.epochs_stage3;
  if (epochs == 0) return std::nullopt;
  const MassSchedule schedule{config.lambda_base, config.lambda_max, epochs};
  AdamState adam = AdamState::for_params(state.params);
  const std::vector<double> weights = uniform_weights(data.num_views());
  const double alpha = config.alpha;
  std::optional<PseudoLabels> labels;
  for (std::size_t e = 0; e < epochs; ++e) {
    EpochRecord rec{3, e + 1, 0.0, {}, {}, {}, {}, {}, {}, {}};
    const double lambda = config.balanced_labels ? 1.0 : lambda_at(schedule, e);
    rec.lambda = lambda;
    try {
      labels = label_dataset(config, data, state, lambda);
    } catch (const Error& ex) {
      rec.warning = std::string("label assignment failed, reusing previous labels: ") + ex.what();
    }
    if (!labels) {
      log.push_back(rec);
      continue;
    }
    rec.solver_iterations = labels->solver_iterations;
    rec.converged = labels->converged;
    rec.assigned = labels->num_assigned();
    if (labels->num_assigned() == 0) {
      rec.warning = "no sample assigned; epoch skipped";
      log.push_back(rec);
      continue;
    }
    const RebalanceContext ctx = make_rebalance_context(*labels, config.tau_f, config.w_v, config.w_t);
    double total = 0.0, total_ce = 0.0, total_im = 0.0;
    const Batches batches = make_batches(data.num_samples(), config.batch_size, stage_rng(config, 3, e));
    for (const auto& idx : batches) {
      const std::vector<Matrix> xs = gather(data, idx);
      const RebalanceContext bctx = ctx.subset(idx);
      const ForwardCache c = forward(state.params, state.model, xs, ForwardParts::Clustering);
      OutputGrads out;
      double loss = 0.0;
      if (config.ce_weight > 0.0) {
        const MixedPrediction mixed = mix_predictions(c.consensus_probs, c.view_probs, alpha);
        Matrix d;
        const double ce = self_label_ce(mixed.p_hat, bctx.targets, &d, config.ce_weight).value;
        out.consensus_probs = d * alpha;
        for (std::size_t v = 0; v < c.view_probs.size(); ++v)
          out.view_probs.push_back(d * ((1.0 - alpha) / static_cast<double>(c.view_probs.size())));
        total_ce += ce;
        loss += config.ce_weight * ce;
      }
      if (config.im_weight > 0.0 && bctx.num_assigned() > 0) {
        const double im =
            imbalance_loss(c.h, c.h_consensus, c.view_probs, c.consensus_probs, bctx, &out, config.im_weight).value;
        total_im += im;
        loss += config.im_weight * im;
      }
      if (config.keep_align) {
        loss += align_loss(c.h, c.h_consensus, c.structure.g, c.view_probs, c.consensus_probs, weights,
                           config.tau_f, config.tau_l, &out)
                    .value;
      }
      total += loss;
      ModelParams grads = state.params.zeros_like();
      backward(state.params, c, out, grads);
      adam_step(state.params, grads, adam, config.lr);
    }
    const double nb = static_cast<double>(batches.size());
    rec.loss = total / nb;
    rec.ce = total_ce / nb;
    rec.im = total_im / nb;
    require_finite(rec.loss, 3, e);
    log.push_back(rec);
  }
  const double final_lambda = config.balanced_labels ? 1.0 : lambda_at(schedule, epochs);
  try {
    return label_dataset(config, data, state, final_lambda);
  } catch (const Error& ex) {
    EpochRecord rec{3, epochs + 1, 0.0, {}, {}, final_lambda, {}, {}, {}, {}};
    rec.warning = std::string("final label assignment failed, using last epoch labels: ") + ex.what();
    log.push_back(rec);
    return labels;
  }
}

ExperimentReport run_experiment(const ExperimentConfig& config, const MultiViewDataset& data) {
  using Clock = std::chrono::steady_clock;
  config.validate();
  data.validate();
  ExperimentReport report;
  report.config = config.echo();
  report.num_samples = data.num_samples();
  report.num_views = data.num_views();
  report.num_classes = data.num_classes;
  report.true_counts = data.class_counts;
  report.data_ratio = imbalance_ratio(data.labels);

  auto timed = [&](const std::string& name, auto&& fn) {
    const auto t0 = Clock::now();
    fn();
    report.timing.push_back({name, std::chrono::duration<double>(Clock::now() - t0).count()});
  };

  try {
    TrainState state = init_training(config, data);
    std::optional<PseudoLabels> labels;
    timed("stage1", [&] { train_stage1(config, data, state, report.epochs); });
    timed("stage2", [&] { train_stage2(config, data, state, report.epochs); });
    timed("stage3", [&] { labels = train_stage3(config, data, state, report.epochs); });
    timed("evaluate", [&] {
      if (labels) {
        report.predictions = labels->resolved();
        report.pseudo_label_counts = labels->class_counts;
        report.final_assigned = labels->num_assigned();
      } else {
        const Predictions pred = predict(state.params, state.model, data.views, config.batch_size);
        report.predictions = argmax_labels(pred.consensus);
        report.final_assigned = data.num_samples();
        report.pseudo_label_counts.assign(data.num_classes, 0);
        for (int p : report.predictions) ++report.pseudo_label_counts[static_cast<std::size_t>(p)];
      }
      report.metrics = evaluate_clustering(report.predictions, data.labels, data.class_counts);
      const std::vector<int> mapping = best_mapping(report.predictions, data.labels);
      report.predicted_counts.assign(data.num_classes, 0);
      for (int p : report.predictions) {
        const int y = mapping[static_cast<std::size_t>(p)];
        if (y >= 0) ++report.predicted_counts[static_cast<std::size_t>(y)];
      }
    });
  } catch (const Error& e) {
    report.status = "failed";
    report.failure = e.what();
  }
  return report;
}

std::string report_json(const ExperimentReport& r) {
  Json j;
  j["status"] = r.status;
  if (!r.failure.empty()) j["failure"] = r.failure;
  Json cfg = Json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  j["dataset"] = {{"num_samples", r.num_samples},
                  {"num_views", r.num_views},
                  {"num_classes", r.num_classes},
                  {"imbalance_ratio", r.data_ratio},
                  {"class_counts", r.true_counts}};
  Json epochs = Json::array();
  for (const EpochRecord& e : r.epochs) {
    Json row = {{"stage", e.stage}, {"epoch", e.epoch}, {"loss", e.loss}};
    if (e.ce) row["ce"] = *e.ce;
    if (e.im) row["imbalance"] = *e.im;
    if (e.lambda) row["lambda"] = *e.lambda;
    if (e.solver_iterations) row["solver_iterations"] = *e.solver_iterations;
    if (e.converged) row["solver_converged"] = *e.converged;
    if (e.assigned) row["assigned"] = *e.assigned;
    if (!e.warning.empty()) row["warning"] = e.warning;
    epochs.push_back(row);
  }
  j["epochs"] = epochs;
  if (r.metrics) {
    const ClusterMetrics& m = *r.metrics;
    j["metrics"] = {{"acc", m.acc},
                    {"nmi", m.nmi},
                    {"purity", m.purity},
                    {"group_acc",
                     {{"head", optional_json(m.group_acc.head)},
                      {"medium", optional_json(m.group_acc.medium)},
                      {"tail", optional_json(m.group_acc.tail)}}}};
    j["counts"] = {{"true", r.true_counts},
                   {"predicted_per_class", r.predicted_counts},
                   {"pseudo_label_per_cluster", r.pseudo_label_counts},
                   {"final_assigned", r.final_assigned}};
  }
  j["conventions"] = {{"nmi_normalizer", "geometric mean of entropies"},
                      {"group_split", "classes ranked by true count; head and tail are ceil(K/3) each"},
                      {"unassigned_at_evaluation", "row argmax of the final transport plan"}};
  return j.dump(2) + "\n";
}

void write_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_json(r));

  Json timing = Json::object();
  double total = 0.0;
  for (const StageTiming& t : r.timing) {
    timing[t.name + "_seconds"] = t.seconds;
    total += t.seconds;
  }
  timing["total_seconds"] = total;
  write_text(dir / "timing.json", timing.dump(2) + "\n");

  std::ostringstream ep;
  ep << "stage,epoch,loss,ce,imbalance,lambda,solver_iterations,solver_converged,assigned\n";
  for (const EpochRecord& e : r.epochs) {
    ep << e.stage << ',' << e.epoch << ',' << format_number(e.loss) << ',' << (e.ce ? format_number(*e.ce) : "")
       << ',' << (e.im ? format_number(*e.im) : "") << ',' << (e.lambda ? format_number(*e.lambda) : "") << ','
       << (e.solver_iterations ? std::to_string(*e.solver_iterations) : "") << ','
       << (e.converged ? (*e.converged ? "1" : "0") : "") << ',' << (e.assigned ? std::to_string(*e.assigned) : "")
       << '\n';
  }
  write_text(dir / "epochs.csv", ep.str());

  if (r.metrics) {
    const ClusterMetrics& m = *r.metrics;
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
    write_text(dir / "metrics.csv", "acc,nmi,purity,head_acc,medium_acc,tail_acc\n" + format_number(m.acc) + "," +
                                        format_number(m.nmi) + "," + format_number(m.purity) + "," +
                                        opt(m.group_acc.head) + "," + opt(m.group_acc.medium) + "," +
                                        opt(m.group_acc.tail) + "\n");
    write_label_file(dir / "predictions.csv", r.predictions);
  }
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SweepResult run_sweep(const ExperimentConfig& base, const std::vector<double>& ratios,
                      const std::vector<std::uint64_t>& seeds) {
  if (!base.data_dir.empty()) throw Error("sweep: needs generated data (data_dir must be empty)");
  if (ratios.empty() || seeds.empty()) throw Error("sweep: need at least one ratio and one seed");
  SweepResult result;
  for (double ratio : ratios) {
    SweepSummary s;
    s.ratio = ratio;
    std::vector<double> acc_m, acc_b, gap, tail_m, tail_b;
    for (std::uint64_t seed : seeds) {
      ExperimentConfig cfg = base;
      cfg.ratio = ratio;
      cfg.seed = seed;
      const MultiViewDataset data = load_or_generate(cfg);
      double acc[2] = {0.0, 0.0};
      for (int balanced = 0; balanced < 2; ++balanced) {
        cfg.balanced_labels = balanced == 1;
        const ExperimentReport rep = run_experiment(cfg, data);
        if (!rep.metrics) throw Error("sweep: run failed (ratio " + format_number(ratio) + ", seed " +
                                      std::to_string(seed) + "): " + rep.failure);
        result.rows.push_back({ratio, seed, cfg.balanced_labels, *rep.metrics});
        acc[balanced] = rep.metrics->acc;
        (balanced ? tail_b : tail_m).push_back(rep.metrics->group_acc.tail.value_or(0.0));
      }
      acc_m.push_back(acc[0]);
      acc_b.push_back(acc[1]);
      gap.push_back(acc[0] - acc[1]);
    }
    s.median_acc_method = median(acc_m);
    s.median_acc_baseline = median(acc_b);
    s.median_gap = median(gap);
    s.median_tail_method = median(tail_m);
    s.median_tail_baseline = median(tail_b);
    result.summary.push_back(s);
  }
  return result;
}

std::string sweep_table(const SweepResult& result) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "ratio   acc_method  acc_baseline  gap      tail_method  tail_baseline\n";
  for (const SweepSummary& s : result.summary) {
    out << std::setw(6) << s.ratio << "  " << std::setw(10) << s.median_acc_method << "  " << std::setw(12)
        << s.median_acc_baseline << "  " << std::setw(7) << s.median_gap << "  " << std::setw(11)
        << s.median_tail_method << "  " << std::setw(13) << s.median_tail_baseline << '\n';
  }
  return out.str();
}

void write_sweep(const SweepResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream runs;
  runs << "ratio,seed,labels,acc,nmi,purity,head_acc,medium_acc,tail_acc\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const SweepRow& r : result.rows) {
    runs << format_number(r.ratio) << ',' << r.seed << ',' << (r.balanced ? "balanced" : "pot") << ','
         << format_number(r.metrics.acc) << ',' << format_number(r.metrics.nmi) << ','
         << format_number(r.metrics.purity) << ',' << opt(r.metrics.group_acc.head) << ','
         << opt(r.metrics.group_acc.medium) << ',' << opt(r.metrics.group_acc.tail) << '\n';
  }
  write_text(dir / "sweep_runs.csv", runs.str());
  std::ostringstream sum;
  sum << "ratio,median_acc_method,median_acc_baseline,median_gap,median_tail_method,median_tail_baseline\n";
  for (const SweepSummary& s : result.summary) {
    sum << format_number(s.ratio) << ',' << format_number(s.median_acc_method) << ','
        << format_number(s.median_acc_baseline) << ',' << format_number(s.median_gap) << ','
        << format_number(s.median_tail_method) << ',' << format_number(s.median_tail_baseline) << '\n';
  }
  write_text(dir / "sweep_summary.csv", sum.str());
  write_text(dir / "sweep_table.txt", sweep_table(result));
}

}  // namespace imvc
