#include "dvgnn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "dvgnn/csv.hpp"
#include "dvgnn/data.hpp"
#include "dvgnn/errors.hpp"
#include "dvgnn/model_io.hpp"
#include "dvgnn/pipeline.hpp"
#include "dvgnn/selfcheck.hpp"

namespace dvgnn {
namespace {

namespace fs = std::filesystem;
using csv::format_double;

struct Options {
  RunConfig run;
  std::string out;
  std::string data;
  std::string truth;
  std::string model;
  std::string ablation = "dynamic";
  std::string logsigma_head = "sigmoid";
  std::string decoder = "standardized";
  bool verbose = false;

  SimSpec sim;
  bool with_adjacency = false;

  std::string horizons;
  std::string split = "test";
  bool curves = false;
  bool causal = false;

  double lambda = 0.0;

  std::size_t trials = 20;
  double tolerance = 1e-4;
};

void finish_run_config(Options& o) {
  o.run.train.static_graph = o.ablation == "static";
  o.run.linear_logsigma = o.logsigma_head == "linear";
  o.run.decoder_mode = o.decoder == "standardized" ? DecoderMode::Standardized : DecoderMode::Posterior;
}

fs::path manifest_of(const Options& o) {
  if (o.data.empty()) throw ContractError("--data is required (dataset directory or manifest)");
  fs::path p(o.data);
  if (fs::is_directory(p)) p /= "dataset.ini";
  return p;
}

fs::path out_dir(const Options& o) {
  if (o.out.empty()) throw ContractError("--out is required");
  fs::create_directories(o.out);
  return fs::path(o.out);
}

// Explicit --truth, else truth.csv next to the manifest (simulator output).
std::optional<Graph> load_truth(const Options& o, const fs::path& manifest) {
  if (!o.truth.empty()) return load_adjacency_csv(o.truth);
  fs::path beside = manifest.parent_path() / "truth.csv";
  if (fs::exists(beside)) return load_adjacency_csv(beside.string());
  return std::nullopt;
}

// `.incomplete` marks a directory whose outputs are partial; removed on success.
class IncompleteMarker {
 public:
  explicit IncompleteMarker(const fs::path& dir) : path_(dir / ".incomplete") {
    csv::write_file_atomic(path_.string(), "outputs in this directory are incomplete\n");
  }
  void complete() { fs::remove(path_); }

 private:
  fs::path path_;
};

void write_text(const fs::path& path, const std::string& text) { csv::write_file_atomic(path.string(), text); }

void write_train_log(const fs::path& dir, const std::vector<EpochLog>& log) {
  std::ostringstream o;
  o << "stage,epoch,loss,val_rmse\n";
  for (const auto& e : log)
    o << e.stage << ',' << e.epoch << ',' << format_double(e.loss) << ','
      << (std::isnan(e.val_rmse) ? std::string() : format_double(e.val_rmse)) << '\n';
  write_text(dir / "train_log.csv", o.str());
}

void write_dynamic_graphs(const fs::path& dir, const Model& model, const Prepared& prep) {
  auto rows = dynamic_graph_rows(model, prep, prep.split.val_end, prep.split.total);
  const auto& ids = prep.normalized.node_ids;
  std::ostringstream o;
  o << "t,i,j,causal_score,transition_weight\n";
  for (const auto& r : rows)
    o << r.t << ',' << ids[r.i] << ',' << ids[r.j] << ',' << format_double(r.causal) << ','
      << format_double(r.transition) << '\n';
  write_text(dir / "dynamic_graphs.csv", o.str());
}

void write_predictions(const fs::path& dir, const Prepared& prep, const std::vector<Window>& windows,
                       const ForecastEval& ev, std::size_t p) {
  const auto& ids = prep.normalized.node_ids;
  std::ostringstream o;
  // window = first target step of the window
  o << "window,horizon,node,predicted,actual\n";
  for (std::size_t k = 0; k < windows.size(); ++k)
    for (std::size_t c = 0; c < ev.predicted[k].cols(); ++c)
      for (std::size_t i = 0; i < ids.size(); ++i)
        o << windows[k].start + p << ',' << c + 1 << ',' << ids[i] << ',' << format_double(ev.predicted[k](i, c))
          << ',' << format_double(ev.actual[k](i, c)) << '\n';
  write_text(dir / "predictions.csv", o.str());
}

nlohmann::ordered_json metrics_json(const ForecastEval* ev, std::span<const std::size_t> horizons,
                                    const std::optional<LinkEvalReport>& links, const char* protocol) {
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  if (ev) {
    m["rmse"] = ev->rmse_all;
    for (std::size_t h : horizons) {
      m["rmse_h" + std::to_string(h)] = ev->rmse_h[h - 1];
      m["mae_h" + std::to_string(h)] = ev->mae_h[h - 1];
    }
  }
  if (links) {
    m["link_protocol"] = protocol;
    m["auc"] = links->auc;
    m["threshold"] = links->threshold;
    m["precision"] = links->precision;
    m["f1"] = links->f1;
    m["no_positive_predictions"] = links->no_positive_predictions;
    m["best_f1"] = links->best_f1;
    m["best_threshold"] = links->best_threshold;
  }
  return m;
}

const char* link_protocol(const Prepared& prep) {
  return prep.edge_split && !prep.edge_split->held_out_edges.empty() ? "held_out_edges" : "truth_graph";
}

std::vector<std::size_t> all_horizons(std::size_t h) {
  std::vector<std::size_t> out(h);
  for (std::size_t k = 0; k < h; ++k) out[k] = k + 1;
  return out;
}

std::size_t parse_horizon(std::string_view s, std::size_t max) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v == 0 || v > max)
    throw ContractError("horizon '" + std::string(s) + "' is not in 1.." + std::to_string(max));
  return v;
}

// "", "a..b" or a comma-separated list.
std::vector<std::size_t> parse_horizons(const std::string& spec, std::size_t max) {
  if (spec.empty()) return all_horizons(max);
  std::vector<std::size_t> out;
  if (auto dots = spec.find(".."); dots != std::string::npos) {
    std::size_t a = parse_horizon(csv::trim(std::string_view(spec).substr(0, dots)), max);
    std::size_t b = parse_horizon(csv::trim(std::string_view(spec).substr(dots + 2)), max);
    if (a > b) throw ContractError("empty horizon range " + spec);
    for (std::size_t h = a; h <= b; ++h) out.push_back(h);
    return out;
  }
  for (const auto& part : csv::split(spec, ',')) out.push_back(parse_horizon(csv::trim(part), max));
  return out;
}

void report_log(const std::vector<EpochLog>& log) {
  for (const auto& e : log) {
    std::cerr << e.stage << " epoch " << e.epoch << " loss " << format_double(e.loss);
    if (!std::isnan(e.val_rmse)) std::cerr << " val_rmse " << format_double(e.val_rmse);
    std::cerr << '\n';
  }
}

void print_summary(const ForecastEval* ev, const std::optional<LinkEvalReport>& links) {
  if (ev) std::cout << "test rmse " << format_double(ev->rmse_all) << '\n';
  if (links)
    std::cout << "link auc " << format_double(links->auc) << ", f1 " << format_double(links->f1) << ", best f1 "
              << format_double(links->best_f1) << '\n';
}

int cmd_simulate(const Options& o) {
  SimSpec spec = o.sim;
  spec.seed = o.run.train.seed;
  SimResult r = simulate_sde(spec);
  if (o.with_adjacency) r.dataset.adjacency = r.truth;
  fs::path dir = out_dir(o);
  write_dataset(r.dataset, dir.string(),
                {"simulator_seed = " + std::to_string(spec.seed), "simulator_dt = " + format_double(spec.dt),
                 "simulator_noise = " + format_double(spec.noise_scale)});
  write_matrix_csv((dir / "truth.csv").string(), r.truth.adjacency());
  write_matrix_csv((dir / "drift.csv").string(), r.drift);
  Tensor step = Tensor::identity(spec.n_nodes);
  for (std::size_t m = 0; m < step.size(); ++m) step[m] += spec.dt * r.drift[m];
  std::cout << "simulated " << spec.n_nodes << " nodes, " << r.truth.edge_count() << " edges, " << spec.steps
            << " steps, dt " << format_double(spec.dt) << ", noise " << format_double(spec.noise_scale)
            << ", diagonal drift " << format_double(spec.diag) << ", seed " << spec.seed << '\n'
            << "spectral radius of the one-step map " << format_double(spectral_radius(step)) << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, Stages stages) {
  fs::path manifest = manifest_of(o);
  auto raw = load_dataset(manifest.string());
  auto truth = load_truth(o, manifest);
  std::optional<ParamStore> initial;
  if (!o.model.empty()) initial = load_params((fs::path(o.model) / "model.dvgn").string());
  if (stages == Stages::ForecastOnly && !initial)
    throw ContractError("train-forecast needs --model pointing at a train-graph output directory");

  fs::path dir = out_dir(o);
  IncompleteMarker marker(dir);
  PipelineResult res = run_pipeline(raw, o.run, truth, stages, std::move(initial));
  if (o.verbose) report_log(res.log);

  save_params((dir / "model.dvgn").string(), res.model.params);
  write_text(dir / "config.ini", run_config_text(o.run));
  write_train_log(dir, res.log);
  write_dynamic_graphs(dir, res.model, res.prep);
  write_matrix_csv((dir / "sigma.csv").string(), res.model.params.value(dec_names::Sigma));
  const ForecastEval* ev = stages == Stages::GraphOnly ? nullptr : &res.forecast;
  if (ev) write_predictions(dir, res.prep, res.prep.test, *ev, res.model.p);
  auto horizons = all_horizons(o.run.horizon);
  write_text(dir / "metrics.json", metrics_json(ev, horizons, res.links, link_protocol(res.prep)).dump(2) + "\n");
  marker.complete();
  print_summary(ev, res.links);
  return kExitOk;
}

int cmd_eval(const Options& o) {
  if (o.model.empty()) throw ContractError("--model is required");
  fs::path manifest = manifest_of(o);
  ParamStore params = load_params((fs::path(o.model) / "model.dvgn").string());
  auto raw = load_dataset(manifest.string());
  auto truth = load_truth(o, manifest);
  Prepared prep = prepare(raw, o.run);
  Model model = build_model(prep, o.run);
  assign_params(model, params);
  auto horizons = parse_horizons(o.horizons, o.run.horizon);

  const std::vector<Window>& windows = o.split == "train" ? prep.train : o.split == "val" ? prep.val : prep.test;
  fs::path dir = out_dir(o);
  IncompleteMarker marker(dir);
  ForecastEval ev = evaluate_forecast(model, prep, windows, o.run.train.static_graph);
  auto links = evaluate_links(model, prep, truth, o.run.threshold);
  if (o.causal && !links)
    throw DataError("causal evaluation needs a truth graph (--truth or truth.csv) or a dataset adjacency");

  write_text(dir / "metrics.json", metrics_json(&ev, horizons, links, link_protocol(prep)).dump(2) + "\n");
  if (o.curves) {
    std::ostringstream h;
    h << "horizon,rmse,mae\n";
    for (std::size_t k : horizons) h << k << ',' << format_double(ev.rmse_h[k - 1]) << ',' << format_double(ev.mae_h[k - 1]) << '\n';
    write_text(dir / "horizon_metrics.csv", h.str());
    if (links) {
      std::ostringstream c;
      c << "threshold,precision,recall,f1,fpr\n";
      for (const auto& pt : links->curve)
        c << format_double(pt.threshold) << ',' << format_double(pt.precision) << ',' << format_double(pt.recall)
          << ',' << format_double(pt.f1) << ',' << format_double(pt.fpr) << '\n';
      write_text(dir / "link_curve.csv", c.str());
    }
  }
  marker.complete();
  for (std::size_t k : horizons)
    std::cout << "h" << k << " rmse " << format_double(ev.rmse_h[k - 1]) << " mae " << format_double(ev.mae_h[k - 1])
              << '\n';
  print_summary(nullptr, links);
  return kExitOk;
}

int cmd_noise(const Options& o) {
  fs::path manifest = manifest_of(o);
  auto raw = load_dataset(manifest.string());
  auto split = chronological_split(raw.steps());
  auto noisy = inject_poisson(std::move(raw), o.lambda, o.run.train.seed, split.train_end);
  fs::path dir = out_dir(o);
  write_dataset(noisy, dir.string(),
                {"noise_lambda = " + format_double(o.lambda), "noise_seed = " + std::to_string(o.run.train.seed),
                 "noise_rows = " + std::to_string(split.train_end), "noise_source = " + manifest.string()});
  for (const char* extra : {"truth.csv", "drift.csv"}) {
    fs::path src = manifest.parent_path() / extra;
    if (fs::exists(src) && !fs::equivalent(src.parent_path(), dir))
      fs::copy_file(src, dir / extra, fs::copy_options::overwrite_existing);
  }
  std::cout << "poisson noise lambda " << format_double(o.lambda) << " added to the first " << split.train_end
            << " of " << split.total << " steps\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  struct Case {
    const char* name;
    double worst = 0.0;
  } cases[] = {{"elbo (standardized)"}, {"elbo (posterior, masked)"}, {"forecast l2"}};
  for (std::size_t t = 0; t < o.trials; ++t) {
    std::uint64_t s = derive_seed(o.run.train.seed, t);
    LossInstance inst[] = {elbo_instance(s, DecoderMode::Standardized),
                           elbo_instance(s, DecoderMode::Posterior, false, true), forecast_instance(s)};
    for (std::size_t c = 0; c < 3; ++c)
      cases[c].worst = std::max(cases[c].worst, grad_check(inst[c].program, inst[c].point, 1e-6).max_rel_error);
  }
  bool ok = true;
  for (const auto& c : cases) {
    std::cout << c.name << ": max relative error " << format_double(c.worst) << " over " << o.trials << " instances\n";
    ok = ok && c.worst < o.tolerance;
  }
  std::cout << (ok ? "gradients agree" : "gradient mismatch") << " (tolerance " << format_double(o.tolerance) << ")\n";
  return ok ? kExitOk : kExitNumeric;
}

// Reuse the configuration saved with a model unless one is given explicitly.
std::vector<std::string> with_model_config(std::vector<std::string> args) {
  bool wants = false, has_config = false;
  std::string model;
  for (std::size_t k = 0; k < args.size(); ++k) {
    const std::string& a = args[k];
    if (a == "eval" || a == "train-forecast") wants = true;
    if (a == "--config" || a.rfind("--config=", 0) == 0) has_config = true;
    if (a == "--model" && k + 1 < args.size()) model = args[k + 1];
    if (a.rfind("--model=", 0) == 0) model = a.substr(8);
  }
  if (wants && !has_config && !model.empty()) {
    fs::path cfg = fs::path(model) / "config.ini";
    if (fs::exists(cfg)) args.insert(args.begin(), {"--config", cfg.string()});
  }
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args) {
  Options o;
  CLI::App app{"Dynamic variational graph learning and spatio-temporal forecasting", "dvgnn"};
  app.set_config("--config", "", "Flat key = value file; command-line flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  auto& t = o.run.train;
  app.add_option("--seed", t.seed, "Seed for every stochastic step")->capture_default_str();
  app.add_option("--out", o.out, "Output directory");
  app.add_flag("--verbose", o.verbose, "Print per-epoch progress to stderr");
  app.add_option("--data", o.data, "Dataset directory or dataset.ini manifest");
  app.add_option("--truth", o.truth, "0/1 truth matrix for causal evaluation");
  app.add_option("--model", o.model, "Directory holding model.dvgn (and config.ini)");

  app.add_option("--lr-graph", t.lr_graph, "Graph-stage learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--lr-forecast", t.lr_forecast, "Forecast-stage learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--epochs-graph", t.epochs_graph, "Graph-stage epochs")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--epochs-forecast", t.epochs_forecast, "Forecast-stage epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--batch", t.batch, "Windows per batch")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--reg-weight", t.reg_weight, "Weight of the log sigma regularizer")->capture_default_str();
  app.add_option("--grad-clip", t.grad_clip, "Global gradient norm bound")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--joint", t.joint, "Interleave graph and forecast updates per batch");
  app.add_option("--ablation", o.ablation, "dynamic, or static to feed the pre-defined graph every step")
      ->check(CLI::IsMember({"dynamic", "static"}))
      ->capture_default_str();
  app.add_option("--hidden1", o.run.hidden1, "First encoder layer width")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--hidden2", o.run.hidden2, "Latent width")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--p", o.run.p, "Window length (historical steps)")->check(CLI::Range(2, 1 << 20))->capture_default_str();
  app.add_option("--horizon", o.run.horizon, "Forecast steps")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--threshold", o.run.threshold, "Edge decision threshold on scaled scores")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--temporal-kernel", o.run.temporal_kernel, "Temporal convolution width (odd)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--channels", o.run.channels, "Graph convolution channels")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--mask", o.run.mask, "Mask Sigma to the pre-defined graph: on, off, auto")
      ->check(CLI::IsMember({"on", "off", "auto"}))
      ->capture_default_str();
  app.add_option("--logsigma-head", o.logsigma_head, "Encoder log sigma output: sigmoid or linear")
      ->check(CLI::IsMember({"sigmoid", "linear"}))
      ->capture_default_str();
  app.add_option("--decoder", o.decoder, "Edge term centring: standardized or posterior")
      ->check(CLI::IsMember({"standardized", "posterior"}))
      ->capture_default_str();
  app.add_option("--edge-train-fraction", o.run.edge_train_fraction, "Share of adjacency edges kept for training")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "Simulate a linear SDE with a planted causal graph");
  sim->add_option("--nodes", o.sim.n_nodes, "Node count")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--edges", o.sim.n_true_edges, "Planted directed edges")->capture_default_str();
  sim->add_option("--steps", o.sim.steps, "Time steps")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--dt", o.sim.dt, "Euler-Maruyama step")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--noise", o.sim.noise_scale, "Diffusion scale")->check(CLI::NonNegativeNumber)->capture_default_str();
  sim->add_option("--drift-diag", o.sim.diag, "Diagonal drift")->capture_default_str();
  sim->add_option("--weight-min", o.sim.weight_min, "Smallest edge weight magnitude")->capture_default_str();
  sim->add_option("--weight-max", o.sim.weight_max, "Largest edge weight magnitude")->capture_default_str();
  sim->add_flag("--with-adjacency", o.with_adjacency, "Also publish the planted graph as the dataset adjacency");

  auto* tg = app.add_subcommand("train-graph", "Train the encoder and diffusion decoder");
  auto* tf = app.add_subcommand("train-forecast", "Train the forecaster on frozen graphs from --model");
  auto* pl = app.add_subcommand("pipeline", "Train both stages and evaluate");

  auto* ev = app.add_subcommand("eval", "Evaluate a trained model");
  ev->add_option("--horizons", o.horizons, "Horizons to report: a..b or a comma list (default all)");
  ev->add_option("--split", o.split, "Windows to evaluate")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  ev->add_flag("--curves", o.curves, "Write per-horizon and threshold-curve CSVs");
  ev->add_flag("--causal", o.causal, "Require causal-link evaluation");

  auto* nz = app.add_subcommand("noise", "Copy a dataset with Poisson noise on the training split");
  nz->add_option("--lambda", o.lambda, "Poisson rate")->check(CLI::NonNegativeNumber)->required();

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients of both losses");
  gc->add_option("--trials", o.trials, "Random instances per loss")->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--tolerance", o.tolerance, "Largest accepted relative error")->capture_default_str();

  std::vector<std::string> args = with_model_config(raw_args);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }
  finish_run_config(o);

  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (tg->parsed()) return cmd_train(o, Stages::GraphOnly);
    if (tf->parsed()) return cmd_train(o, Stages::ForecastOnly);
    if (pl->parsed()) return cmd_train(o, Stages::Both);
    if (ev->parsed()) return cmd_eval(o);
    if (nz->parsed()) return cmd_noise(o);
    if (gc->parsed()) return cmd_gradcheck(o);
  } catch (const NumericError& e) {
    std::cerr << "numeric divergence: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace dvgnn
