#include "dvgnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "dvgnn/csv.hpp"
#include "dvgnn/errors.hpp"
#include "dvgnn/random.hpp"

namespace dvgnn {
namespace fs = std::filesystem;

Tensor TimeSeriesDataset::step(std::size_t t) const {
  Tensor x = Tensor::matrix(n_nodes(), n_features());
  for (std::size_t f = 0; f < n_features(); ++f)
    for (std::size_t i = 0; i < n_nodes(); ++i) x(i, f) = features[f](t, i);
  return x;
}

Graph TimeSeriesDataset::predefined_graph() const {
  return adjacency ? *adjacency : Graph::identity(n_nodes());
}

Tensor read_signal_csv(const std::string& path, std::vector<std::string>& node_ids) {
  auto lines = csv::read_lines(path);
  while (!lines.empty() && csv::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(path, 1, "missing header");
  auto header = csv::split(lines[0]);
  if (header.size() < 2 || csv::trim(header[0]) != "time")
    throw ParseError(path, 1, "header must be time,<node_0>,...");
  node_ids.clear();
  for (std::size_t k = 1; k < header.size(); ++k) node_ids.emplace_back(csv::trim(header[k]));
  std::size_t n = node_ids.size(), rows = lines.size() - 1;
  Tensor values = Tensor::matrix(rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    auto cells = csv::split(lines[r + 1]);
    if (cells.size() != n + 1)
      throw ParseError(path, r + 2, "expected " + std::to_string(n + 1) + " cells, got " +
                                        std::to_string(cells.size()));
    for (std::size_t i = 0; i < n; ++i) {
      auto v = csv::parse_optional(cells[i + 1], path, r + 2);
      values(r, i) = v ? *v : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return values;
}

void write_signal_csv(const std::string& path, const Tensor& values, const std::vector<std::string>& node_ids) {
  std::ostringstream out;
  out << "time";
  for (const auto& id : node_ids) out << ',' << id;
  out << '\n';
  for (std::size_t r = 0; r < values.rows(); ++r) {
    out << r;
    for (std::size_t i = 0; i < values.cols(); ++i) {
      out << ',';
      if (!std::isnan(values(r, i))) out << csv::format_double(values(r, i));
    }
    out << '\n';
  }
  csv::write_file_atomic(path, out.str());
}

void write_matrix_csv(const std::string& path, const Tensor& m) {
  std::ostringstream out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << csv::format_double(m(r, c));
    out << '\n';
  }
  csv::write_file_atomic(path, out.str());
}

Tensor read_matrix_csv(const std::string& path) {
  auto lines = csv::read_lines(path);
  while (!lines.empty() && csv::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(path, 1, "empty matrix file");
  std::size_t cols = csv::split(lines[0]).size();
  Tensor m = Tensor::matrix(lines.size(), cols);
  for (std::size_t r = 0; r < lines.size(); ++r) {
    auto cells = csv::split(lines[r]);
    if (cells.size() != cols) throw ParseError(path, r + 1, "ragged row");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = csv::parse_double(cells[c], path, r + 1);
  }
  return m;
}

TimeSeriesDataset load_dataset(const std::string& manifest_path) {
  auto kv = csv::read_key_values(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(manifest_path, 0, std::string("missing key '") + key + "'");
    return it->second;
  };
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  auto to_size = [&](const std::string& s, const char* key) {
    try {
      std::size_t used = 0;
      long long v = std::stoll(s, &used);
      if (used != s.size() || v < 0) throw std::invalid_argument(key);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ParseError(manifest_path, 0, std::string("bad integer for '") + key + "': " + s);
    }
  };

  TimeSeriesDataset ds;
  std::size_t nodes = to_size(need("nodes"), "nodes");
  ds.target_feature = kv.count("target") ? to_size(kv["target"], "target") : 0;
  if (kv.count("sampling_minutes")) ds.sampling_minutes = csv::parse_double(kv["sampling_minutes"], manifest_path, 0);

  for (const auto& part : csv::split(need("features"), ';')) {
    std::string file(csv::trim(part));
    if (file.empty()) continue;
    std::vector<std::string> ids;
    Tensor values = read_signal_csv(resolve(file), ids);
    if (ids.size() != nodes)
      throw ParseError(resolve(file), 1, "manifest declares " + std::to_string(nodes) + " nodes, file has " +
                                             std::to_string(ids.size()));
    if (!ds.features.empty() && values.rows() != ds.steps())
      throw ParseError(resolve(file), 0, "feature files disagree on the number of steps");
    if (ds.node_ids.empty()) ds.node_ids = ids;
    ds.features.push_back(std::move(values));
  }
  if (ds.features.empty()) throw ParseError(manifest_path, 0, "no feature files listed");
  if (ds.target_feature >= ds.features.size())
    throw ParseError(manifest_path, 0, "target feature index out of range");

  auto adj = kv.find("adjacency");
  if (adj != kv.end() && !adj->second.empty() && adj->second != "none") {
    Graph g = load_adjacency_csv(resolve(adj->second));
    if (g.n_nodes() != nodes)
      throw ParseError(resolve(adj->second), 1, "adjacency is " + std::to_string(g.n_nodes()) +
                                                    " nodes, manifest declares " + std::to_string(nodes));
    ds.adjacency = std::move(g);
  }
  return ds;
}

void write_dataset(const TimeSeriesDataset& ds, const std::string& dir, const std::vector<std::string>& extra) {
  fs::create_directories(dir);
  std::ostringstream man;
  man << "nodes = " << ds.n_nodes() << '\n';
  man << "sampling_minutes = " << csv::format_double(ds.sampling_minutes) << '\n';
  if (ds.adjacency) {
    write_matrix_csv((fs::path(dir) / "adjacency.csv").string(), ds.adjacency->adjacency());
    man << "adjacency = adjacency.csv\n";
  } else {
    man << "adjacency = none\n";
  }
  man << "features = ";
  for (std::size_t f = 0; f < ds.n_features(); ++f) {
    std::string name = ds.n_features() == 1 ? "signals.csv" : "signals_" + std::to_string(f) + ".csv";
    write_signal_csv((fs::path(dir) / name).string(), ds.features[f], ds.node_ids);
    man << (f ? ";" : "") << name;
  }
  man << '\n' << "target = " << ds.target_feature << '\n';
  for (const auto& line : extra) man << line << '\n';
  csv::write_file_atomic((fs::path(dir) / "dataset.ini").string(), man.str());
}

TimeSeriesDataset repair_missing(TimeSeriesDataset ds) {
  for (std::size_t f = 0; f < ds.n_features(); ++f) {
    Tensor& x = ds.features[f];
    std::size_t rows = x.rows();
    for (std::size_t i = 0; i < x.cols(); ++i) {
      std::vector<std::size_t> known;
      for (std::size_t t = 0; t < rows; ++t)
        if (!std::isnan(x(t, i))) known.push_back(t);
      if (known.empty())
        throw DataError("node " + ds.node_ids[i] + " has no observed values in feature " + std::to_string(f));
      for (std::size_t t = 0; t < known.front(); ++t) x(t, i) = x(known.front(), i);
      for (std::size_t t = known.back() + 1; t < rows; ++t) x(t, i) = x(known.back(), i);
      for (std::size_t k = 0; k + 1 < known.size(); ++k) {
        std::size_t a = known[k], b = known[k + 1];
        for (std::size_t t = a + 1; t < b; ++t) {
          double w = static_cast<double>(t - a) / static_cast<double>(b - a);
          x(t, i) = (1.0 - w) * x(a, i) + w * x(b, i);
        }
      }
    }
  }
  return ds;
}

SplitBounds chronological_split(std::size_t total, double train, double val) {
  SplitBounds s;
  s.total = total;
  // The small offset keeps e.g. (0.7 + 0.1) * 1000 from flooring to 799.
  s.train_end = static_cast<std::size_t>(std::floor(train * total + 1e-9));
  s.val_end = static_cast<std::size_t>(std::floor((train + val) * total + 1e-9));
  return s;
}

NormStats fit_minmax(const TimeSeriesDataset& ds, std::size_t train_end) {
  if (train_end == 0 || train_end > ds.steps()) throw ContractError("fit_minmax: empty training range");
  NormStats st;
  for (const Tensor& x : ds.features) {
    Tensor lo = Tensor::matrix(1, x.cols()), sc = Tensor::matrix(1, x.cols());
    for (std::size_t i = 0; i < x.cols(); ++i) {
      double mn = x(0, i), mx = x(0, i);
      for (std::size_t t = 1; t < train_end; ++t) {
        mn = std::min(mn, x(t, i));
        mx = std::max(mx, x(t, i));
      }
      lo(0, i) = mn;
      sc(0, i) = mx > mn ? mx - mn : 1.0;
    }
    st.lo.push_back(std::move(lo));
    st.scale.push_back(std::move(sc));
  }
  return st;
}

TimeSeriesDataset minmax_normalize(TimeSeriesDataset ds, const NormStats& st) {
  for (std::size_t f = 0; f < ds.n_features(); ++f)
    for (std::size_t t = 0; t < ds.steps(); ++t)
      for (std::size_t i = 0; i < ds.n_nodes(); ++i)
        ds.features[f](t, i) = (ds.features[f](t, i) - st.lo[f](0, i)) / st.scale[f](0, i);
  return ds;
}

TimeSeriesDataset denormalize(TimeSeriesDataset ds, const NormStats& st) {
  for (std::size_t f = 0; f < ds.n_features(); ++f)
    for (std::size_t t = 0; t < ds.steps(); ++t)
      for (std::size_t i = 0; i < ds.n_nodes(); ++i)
        ds.features[f](t, i) = st.denormalize(ds.features[f](t, i), f, i);
  return ds;
}

std::vector<Window> make_windows(std::size_t begin, std::size_t end, std::size_t p, std::size_t horizon) {
  if (end < begin || end - begin < p + horizon)
    throw ContractError("make_windows: range of " + std::to_string(end > begin ? end - begin : 0) +
                        " steps is shorter than p + horizon = " + std::to_string(p + horizon));
  std::vector<Window> out;
  for (std::size_t s = begin; s + p + horizon <= end; ++s) out.push_back({s});
  return out;
}

std::vector<Tensor> window_inputs(const TimeSeriesDataset& ds, const Window& w, std::size_t p) {
  std::vector<Tensor> out;
  for (std::size_t t = 0; t < p; ++t) out.push_back(ds.step(w.start + t));
  return out;
}

Tensor window_targets(const TimeSeriesDataset& ds, const Window& w, std::size_t p, std::size_t horizon) {
  Tensor y = Tensor::matrix(ds.n_nodes(), horizon);
  const Tensor& x = ds.features[ds.target_feature];
  for (std::size_t k = 0; k < horizon; ++k)
    for (std::size_t i = 0; i < ds.n_nodes(); ++i) y(i, k) = x(w.start + p + k, i);
  return y;
}

TimeSeriesDataset inject_poisson(TimeSeriesDataset ds, double lambda, std::uint64_t seed, std::size_t train_end) {
  if (lambda < 0.0) throw ContractError("inject_poisson: lambda must be >= 0");
  if (lambda == 0.0) return ds;
  Rng rng(seed);
  train_end = std::min(train_end, ds.steps());
  for (Tensor& x : ds.features)
    for (std::size_t t = 0; t < train_end; ++t)
      for (std::size_t i = 0; i < x.cols(); ++i) x(t, i) += static_cast<double>(rng.poisson(lambda));
  return ds;
}

double spectral_radius(const Tensor& m) {
  // ||M^(2^k)||^(1/2^k) with renormalisation at every squaring.
  Tensor a = m;
  double log_scale = 0.0;
  double f0 = 0.0;
  for (double v : a.values()) f0 += v * v;
  if (f0 == 0.0) return 0.0;
  f0 = std::sqrt(f0);
  for (double& v : a.values()) v /= f0;
  log_scale = std::log(f0);
  double pow2 = 1.0;
  for (int k = 0; k < 40; ++k) {
    a = matmul(a, a);
    double f = 0.0;
    for (double v : a.values()) f += v * v;
    if (f == 0.0) return 0.0;
    f = std::sqrt(f);
    for (double& v : a.values()) v /= f;
    log_scale = 2.0 * log_scale + std::log(f);
    pow2 *= 2.0;
  }
  return std::exp(log_scale / pow2);
}

Tensor random_drift(const SimSpec& spec, Graph& truth, std::uint64_t seed) {
  std::size_t n = spec.n_nodes;
  if (spec.n_true_edges > n * (n - 1)) throw ContractError("simulate: more edges than off-diagonal pairs");
  Rng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Edge> pairs;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) pairs.emplace_back(i, j);
    std::shuffle(pairs.begin(), pairs.end(), rng.engine());
    Tensor f = Tensor::matrix(n, n);
    Tensor t = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) f(i, i) = spec.diag;
    for (std::size_t k = 0; k < spec.n_true_edges; ++k) {
      auto [i, j] = pairs[k];
      double w = rng.uniform(spec.weight_min, spec.weight_max);
      if (rng.uniform() < 0.5) w = -w;
      f(j, i) = w;
      t(i, j) = 1.0;
    }
    Tensor step = f;
    for (double& v : step.values()) v *= spec.dt;
    for (std::size_t i = 0; i < n; ++i) step(i, i) += 1.0;
    if (spectral_radius(step) < 1.0) {
      truth = Graph(std::move(t));
      return f;
    }
  }
  throw ContractError("simulate: could not draw a stable drift matrix");
}

SimResult simulate_sde(const SimSpec& spec) {
  if (spec.n_nodes == 0 || spec.steps == 0 || !(spec.dt > 0.0) || spec.noise_scale < 0.0)
    throw ContractError("simulate: invalid spec");
  std::size_t n = spec.n_nodes;
  Rng rng(spec.seed);
  SimResult res;
  if (spec.drift) {
    if (spec.drift->shape() != Shape{n, n}) throw DimensionError("simulate: drift must be n x n");
    res.drift = *spec.drift;
    Tensor t = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j && res.drift(j, i) != 0.0) t(i, j) = 1.0;
    res.truth = Graph(std::move(t));
  } else {
    res.drift = random_drift(spec, res.truth, rng.engine()());
  }
  Tensor step = res.drift;
  for (double& v : step.values()) v *= spec.dt;
  for (std::size_t i = 0; i < n; ++i) step(i, i) += 1.0;
  if (!(spectral_radius(step) < 1.0) && spec.noise_scale > 0.0)
    throw ContractError("simulate: I + F dt is not stable (spectral radius >= 1)");

  std::vector<double> z(n), next(n);
  if (spec.z0) {
    if (spec.z0->size() != n) throw DimensionError("simulate: z0 must have n entries");
    for (std::size_t i = 0; i < n; ++i) z[i] = (*spec.z0)[i];
  } else {
    for (double& v : z) v = rng.normal();
  }
  Tensor values = Tensor::matrix(spec.steps, n);
  const double amp = spec.noise_scale * std::sqrt(2.0 * spec.dt);
  for (std::size_t k = 0; k < spec.steps; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(z[i]) || std::abs(z[i]) > 1e12)
        throw ContractError("simulate: trajectory diverged at step " + std::to_string(k));
      values(k, i) = z[i];
    }
    for (std::size_t j = 0; j < n; ++j) {
      double acc = z[j];
      for (std::size_t i = 0; i < n; ++i) acc += res.drift(j, i) * z[i] * spec.dt;
      next[j] = acc;
    }
    for (std::size_t j = 0; j < n; ++j) next[j] += amp * rng.normal();
    z.swap(next);
  }
  for (std::size_t i = 0; i < n; ++i) res.dataset.node_ids.push_back("n" + std::to_string(i));
  res.dataset.features.push_back(std::move(values));
  res.dataset.target_feature = 0;
  return res;
}

}  // namespace dvgnn
