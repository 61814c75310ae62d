#include "imvc/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "imvc/rng.hpp"

namespace imvc {

namespace fs = std::filesystem;

std::vector<std::size_t> MultiViewDataset::view_dims() const {
  std::vector<std::size_t> d;
  for (const Matrix& v : views) d.push_back(v.cols());
  return d;
}

void MultiViewDataset::validate() const {
  if (views.empty()) throw Error("dataset: no views");
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].rows() != labels.size()) {
      throw Error("dataset: view " + std::to_string(v) + " has " + std::to_string(views[v].rows()) +
                  " rows, labels have " + std::to_string(labels.size()));
    }
  }
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error("dataset: label " + std::to_string(y) + " outside [0, " +
                  std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  if (counts != class_counts) throw Error("dataset: class_counts inconsistent with labels");
}

void GenSpec::validate() const {
  if (num_classes == 0) throw Error("GenSpec: K must be >= 1");
  if (num_views == 0) throw Error("GenSpec: V must be >= 1");
  if (num_samples < num_classes) throw Error("GenSpec: N must be >= K");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("GenSpec: R must be in (0, 1]");
  if (view_dims.size() != num_views) throw Error("GenSpec: need one dimension per view");
  for (std::size_t d : view_dims)
    if (d == 0) throw Error("GenSpec: view dimensions must be >= 1");
  if (latent_dim == 0) throw Error("GenSpec: latent_dim must be >= 1");
  if (!(noise_std >= 0.0)) throw Error("GenSpec: noise_std must be >= 0");
}

std::vector<std::size_t> class_sizes(std::size_t num_samples, std::size_t num_classes,
                                     double ratio) {
  if (num_classes == 0) throw Error("class_sizes: K must be >= 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("class_sizes: R must be in (0, 1]");
  if (num_samples < num_classes) throw Error("class_sizes: N must be >= K");
  if (num_classes == 1) return {num_samples};

  const double k1 = static_cast<double>(num_classes - 1);
  Vector profile(num_classes);
  double total = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    profile[k] = std::pow(ratio, static_cast<double>(k) / k1);
    total += profile[k];
  }
  const double largest = static_cast<double>(num_samples) / total;
  std::vector<std::size_t> sizes(num_classes);
  std::size_t assigned = 0;
  for (std::size_t k = 1; k < num_classes; ++k) {
    sizes[k] = static_cast<std::size_t>(std::llround(largest * profile[k]));
    if (sizes[k] == 0) {
      throw Error("class_sizes: N = " + std::to_string(num_samples) +
                  " too small for the requested ratio");
    }
    assigned += sizes[k];
  }
  if (assigned >= num_samples) throw Error("class_sizes: N too small");
  sizes[0] = num_samples - assigned;
  if (sizes[0] < sizes[1]) {
    // near-flat profiles: the smaller classes rounded up past the largest one.
    // Largest-remainder rounding keeps the order (ties go to the lower index).
    std::vector<std::pair<double, std::size_t>> frac(num_classes);
    assigned = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double exact = largest * profile[k];
      sizes[k] = static_cast<std::size_t>(std::floor(exact));
      frac[k] = {-(exact - std::floor(exact)), k};
      assigned += sizes[k];
    }
    std::sort(frac.begin(), frac.end());
    for (std::size_t r = 0; assigned < num_samples; ++r, ++assigned) ++sizes[frac[r].second];
  }
  for (std::size_t k = 1; k < num_classes; ++k) {
    if (sizes[k] > sizes[k - 1]) throw Error("class_sizes: rounding broke monotonicity");
  }
  const double achieved = static_cast<double>(sizes.back()) / static_cast<double>(sizes.front());
  if (std::abs(achieved - ratio) > 0.02) {
    throw Error("class_sizes: N = " + std::to_string(num_samples) + " cannot realise R = " +
                std::to_string(ratio) + " (best " + std::to_string(achieved) + ")");
  }
  return sizes;
}

double round_to_stored_precision(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 9);
  double y = 0.0;
  std::from_chars(buf, res.ptr, y);
  return y;
}

MultiViewDataset generate(const GenSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  const std::size_t n = spec.num_samples, k = spec.num_classes, latent = spec.latent_dim;

  MultiViewDataset ds;
  ds.num_classes = k;
  ds.seed = spec.seed;
  ds.ratio = spec.ratio;
  ds.class_counts = class_sizes(n, k, spec.ratio);

  std::vector<int> ordered;
  ordered.reserve(n);
  for (std::size_t c = 0; c < k; ++c) ordered.insert(ordered.end(), ds.class_counts[c], static_cast<int>(c));
  Rng order_rng = root.split(1);
  const std::vector<std::size_t> perm = order_rng.permutation(n);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = ordered[perm[i]];

  Rng centroid_rng = root.split(2);
  Matrix centroids(k, latent);
  for (double& x : centroids.values()) x = spec.separation * centroid_rng.normal();

  const double map_scale = 1.0 / std::sqrt(static_cast<double>(latent));
  for (std::size_t v = 0; v < spec.num_views; ++v) {
    Rng view_rng = root.split(100 + v);
    const std::size_t dim = spec.view_dims[v];
    Matrix map(latent, dim);
    for (double& x : map.values()) x = map_scale * view_rng.normal();
    Matrix x(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto mu = centroids.row(static_cast<std::size_t>(ds.labels[i]));
      for (std::size_t d = 0; d < dim; ++d) {
        double s = 0.0;
        for (std::size_t l = 0; l < latent; ++l) s += mu[l] * map(l, d);
        x(i, d) = round_to_stored_precision(s + spec.noise_std * view_rng.normal());
      }
    }
    ds.views.push_back(std::move(x));
  }
  ds.validate();
  return ds;
}

double imbalance_ratio(std::span<const int> labels) {
  if (labels.empty()) throw Error("imbalance_ratio: empty labels");
  std::map<int, std::size_t> counts;
  for (int y : labels) ++counts[y];
  std::size_t lo = labels.size(), hi = 0;
  for (const auto& [label, c] : counts) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  return static_cast<double>(lo) / static_cast<double>(hi);
}

// ---- text format ---------------------------------------------------------

namespace {

std::string format_value(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return in;
}

[[noreturn]] void parse_fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw Error(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view field, const fs::path& path, std::size_t line,
                    std::size_t column) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || field.empty()) {
    parse_fail(path, line, "field " + std::to_string(column + 1) + ": bad number '" +
                               std::string(field) + "'");
  }
  return v;
}

long long parse_int(std::string_view field, const fs::path& path, std::size_t line) {
  long long v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || field.empty()) {
    parse_fail(path, line, "bad integer '" + std::string(field) + "'");
  }
  return v;
}

Matrix read_view(const fs::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in = open_in(path);
  Matrix m(rows, cols);
  std::string text;
  std::size_t r = 0;
  while (std::getline(in, text)) {
    if (r >= rows) parse_fail(path, r + 1, "more rows than the " + std::to_string(rows) + " in meta");
    std::size_t c = 0, start = 0;
    while (true) {
      const std::size_t comma = text.find(',', start);
      const std::string_view field(text.data() + start,
                                   (comma == std::string::npos ? text.size() : comma) - start);
      if (c >= cols) parse_fail(path, r + 1, "more than " + std::to_string(cols) + " fields");
      m(r, c) = parse_double(field, path, r + 1, c);
      ++c;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (c != cols) {
      parse_fail(path, r + 1, "expected " + std::to_string(cols) + " fields, found " +
                                  std::to_string(c));
    }
    ++r;
  }
  if (r != rows) {
    parse_fail(path, r + 1, "truncated: expected " + std::to_string(rows) + " rows, found " +
                                std::to_string(r));
  }
  return m;
}

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace

std::vector<int> read_label_file(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<int> labels;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    labels.push_back(static_cast<int>(parse_int(text, path, line)));
  }
  return labels;
}

void write_label_file(const fs::path& path, std::span<const int> labels) {
  std::ofstream out = open_out(path);
  for (int y : labels) out << y << '\n';
}

void save_dataset(const MultiViewDataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  {
    std::ofstream meta = open_out(dir / "meta");
    meta << "K=" << ds.num_classes << '\n'
         << "V=" << ds.num_views() << '\n'
         << "N=" << ds.num_samples() << '\n'
         << "dims=" << join_dims(ds.view_dims()) << '\n'
         << "seed=" << ds.seed << '\n'
         << "R=" << format_value(ds.ratio) << '\n';
  }
  write_label_file(dir / "labels.csv", ds.labels);
  for (std::size_t v = 0; v < ds.num_views(); ++v) {
    std::ofstream out = open_out(dir / ("view_" + std::to_string(v) + ".csv"));
    const Matrix& m = ds.views[v];
    std::string line;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      line.clear();
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (j) line += ',';
        line += format_value(m(i, j));
      }
      line += '\n';
      out << line;
    }
  }
}

MultiViewDataset load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta";
  std::ifstream meta = open_in(meta_path);
  std::map<std::string, std::string> kv;
  std::string text;
  std::size_t line = 0;
  while (std::getline(meta, text)) {
    ++line;
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) parse_fail(meta_path, line, "expected key=value");
    kv[text.substr(0, eq)] = text.substr(eq + 1);
  }
  for (const char* key : {"K", "V", "N", "dims", "seed", "R"}) {
    if (!kv.count(key)) throw Error(meta_path.string() + ": missing key '" + key + "'");
  }

  MultiViewDataset ds;
  ds.num_classes = static_cast<std::size_t>(parse_int(kv["K"], meta_path, 0));
  const auto v_count = static_cast<std::size_t>(parse_int(kv["V"], meta_path, 0));
  const auto n = static_cast<std::size_t>(parse_int(kv["N"], meta_path, 0));
  ds.seed = static_cast<std::uint64_t>(std::stoull(kv["seed"]));
  ds.ratio = parse_double(kv["R"], meta_path, 0, 0);
  std::vector<std::size_t> dims;
  {
    std::stringstream ss(kv["dims"]);
    std::string field;
    while (std::getline(ss, field, ',')) dims.push_back(static_cast<std::size_t>(parse_int(field, meta_path, 0)));
  }
  if (dims.size() != v_count) throw Error(meta_path.string() + ": dims lists " + std::to_string(dims.size()) + " views, V=" + std::to_string(v_count));

  ds.labels = read_label_file(dir / "labels.csv");
  if (ds.labels.size() != n) {
    throw Error((dir / "labels.csv").string() + ": " + std::to_string(ds.labels.size()) +
                " labels, meta says N=" + std::to_string(n));
  }
  for (std::size_t v = 0; v < v_count; ++v)
    ds.views.push_back(read_view(dir / ("view_" + std::to_string(v) + ".csv"), n, dims[v]));
  ds.class_counts.assign(ds.num_classes, 0);
  for (int y : ds.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes) {
      throw Error((dir / "labels.csv").string() + ": label " + std::to_string(y) + " outside [0, K)");
    }
    ++ds.class_counts[static_cast<std::size_t>(y)];
  }
  ds.validate();
  return ds;
}

}  // namespace imvc
