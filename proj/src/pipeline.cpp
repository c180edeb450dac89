#include "dvgnn/pipeline.hpp"

#include <cmath>

#include "dvgnn/errors.hpp"
#include "dvgnn/parallel.hpp"

namespace dvgnn {

Prepared prepare(const TimeSeriesDataset& raw, const RunConfig& cfg) {
  Prepared prep;
  TimeSeriesDataset ds = repair_missing(raw);
  prep.split = chronological_split(ds.steps());
  if (ds.steps() < cfg.p + cfg.horizon)
    throw DataError("series of " + std::to_string(ds.steps()) + " steps is shorter than p + horizon");
  prep.stats = fit_minmax(ds, prep.split.train_end);
  prep.normalized = minmax_normalize(std::move(ds), prep.stats);
  prep.train = make_windows(0, prep.split.train_end, cfg.p, cfg.horizon);
  prep.val = make_windows(prep.split.train_end, prep.split.val_end, cfg.p, cfg.horizon);
  prep.test = make_windows(prep.split.val_end, prep.split.total, cfg.p, cfg.horizon);
  prep.predefined = prep.normalized.predefined_graph();
  prep.training_graph = prep.predefined;
  if (prep.normalized.adjacency && prep.predefined.edge_count() > 0) {
    prep.edge_split = split_edges(prep.predefined, cfg.edge_train_fraction, cfg.train.seed);
    prep.training_graph = remove_edges(prep.predefined, prep.edge_split->held_out_edges);
  }
  return prep;
}

bool mask_enabled(const RunConfig& cfg, const Prepared& prep) {
  if (cfg.mask == "on") return true;
  if (cfg.mask == "off") return false;
  if (cfg.mask == "auto") return prep.normalized.adjacency.has_value();
  throw ContractError("mask must be on, off or auto, got '" + cfg.mask + "'");
}

Model build_model(const Prepared& prep, const RunConfig& cfg) {
  EncoderConfig ec{prep.normalized.n_features(), cfg.hidden1, cfg.hidden2, cfg.linear_logsigma};
  DecoderConfig dc;
  dc.reg_weight = cfg.train.reg_weight;
  dc.mode = cfg.decoder_mode;
  ForecastConfig fc;
  fc.nodes = prep.normalized.n_nodes();
  fc.features = prep.normalized.n_features();
  fc.steps = cfg.p - 1;
  fc.channels = cfg.channels;
  fc.kernel = cfg.temporal_kernel;
  fc.horizon = cfg.horizon;
  fc.target_feature = prep.normalized.target_feature;
  return make_model(ec, dc, fc, cfg.p, prep.training_graph, mask_enabled(cfg, prep), cfg.train.seed);
}

ForecastEval evaluate_forecast(const Model& model, const Prepared& prep, const std::vector<Window>& windows,
                               bool static_graph) {
  if (windows.empty()) throw ContractError("evaluate_forecast: no windows");
  const auto& ds = prep.normalized;
  const std::size_t f = ds.target_feature, h = model.fc.horizon;
  ForecastEval ev;
  ev.predicted.resize(windows.size());
  ev.actual.resize(windows.size());
  parallel_for(windows.size(), [&](std::size_t k) {
    auto x = window_inputs(ds, windows[k], model.p);
    Tensor pred = predict(forecast_inputs(x), window_laplacians(model, x, static_graph), model.params, model.fc);
    Tensor y = window_targets(ds, windows[k], model.p, h);
    for (std::size_t i = 0; i < pred.rows(); ++i)
      for (std::size_t c = 0; c < h; ++c) {
        pred(i, c) = prep.stats.denormalize(pred(i, c), f, i);
        y(i, c) = prep.stats.denormalize(y(i, c), f, i);
      }
    ev.predicted[k] = std::move(pred);
    ev.actual[k] = std::move(y);
  });
  const std::size_t n = ds.n_nodes();
  double all = 0.0;
  for (std::size_t c = 0; c < h; ++c) {
    Tensor pc = Tensor::matrix(windows.size(), n), ac = Tensor::matrix(windows.size(), n);
    for (std::size_t k = 0; k < windows.size(); ++k)
      for (std::size_t i = 0; i < n; ++i) {
        pc(k, i) = ev.predicted[k](i, c);
        ac(k, i) = ev.actual[k](i, c);
      }
    double r = rmse(pc, ac);
    ev.rmse_h.push_back(r);
    ev.mae_h.push_back(mae(pc, ac));
    all += r * r;
  }
  ev.rmse_all = std::sqrt(all / static_cast<double>(h));
  return ev;
}

Tensor mean_coupling(const Model& model, const Prepared& prep, std::size_t begin, std::size_t end) {
  auto windows = make_windows(begin, end, model.p, 0);
  const Tensor* mask = model.mask ? &*model.mask : nullptr;
  std::vector<Tensor> sums(windows.size());
  parallel_for(windows.size(), [&](std::size_t k) {
    auto x = window_inputs(prep.normalized, windows[k], model.p);
    auto g = infer_window_graphs(x, model.encoder_laplacian, model.params, model.enc, model.dec, mask);
    Tensor acc(g.coupling[0].shape());
    for (const Tensor& c : g.coupling)
      for (std::size_t m = 0; m < acc.size(); ++m) acc[m] += c[m];
    sums[k] = std::move(acc);
  });
  Tensor out(sums[0].shape());
  for (const Tensor& s : sums)
    for (std::size_t m = 0; m < out.size(); ++m) out[m] += s[m];
  double denom = static_cast<double>(windows.size() * (model.p - 1));
  for (double& v : out.values()) v /= denom;
  return out;
}

std::optional<LinkEvalReport> evaluate_links(const Model& model, const Prepared& prep,
                                             const std::optional<Graph>& truth, double threshold) {
  if (!prep.edge_split && !truth) return std::nullopt;
  if (prep.edge_split && prep.edge_split->held_out_edges.empty() && !truth) return std::nullopt;
  Tensor scores = minmax_scale(mean_coupling(model, prep, prep.split.val_end, prep.split.total));
  if (prep.edge_split && !prep.edge_split->held_out_edges.empty()) return link_eval(scores, *prep.edge_split, threshold);
  return link_eval(scores, *truth, threshold);
}

std::vector<DynamicGraphRow> dynamic_graph_rows(const Model& model, const Prepared& prep, std::size_t begin,
                                                std::size_t end) {
  auto windows = make_windows(begin, end, model.p, 0);
  const Tensor* mask = model.mask ? &*model.mask : nullptr;
  std::vector<WindowGraphs> graphs(windows.size());
  parallel_for(windows.size(), [&](std::size_t k) {
    auto x = window_inputs(prep.normalized, windows[k], model.p);
    graphs[k] = infer_window_graphs(x, model.encoder_laplacian, model.params, model.enc, model.dec, mask);
  });
  std::vector<DynamicGraphRow> rows;
  const std::size_t n = prep.normalized.n_nodes();
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const Tensor& c = graphs[k].causal.back();
    const Tensor& a = graphs[k].transition.back();
    std::size_t t = windows[k].start + model.p - 1;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) rows.push_back({t, i, j, c(i, j), a(i, j)});
  }
  return rows;
}

void assign_params(Model& model, const ParamStore& source) {
  for (const auto& name : model.params.names()) {
    if (!source.contains(name)) throw DataError("model file lacks parameter " + name);
    if (source.value(name).shape() != model.params.value(name).shape())
      throw DataError("model parameter " + name + " has shape " + shape_str(source.value(name).shape()) +
                      ", expected " + shape_str(model.params.value(name).shape()));
    model.params.value(name) = source.value(name);
  }
}

PipelineResult run_pipeline(const TimeSeriesDataset& raw, const RunConfig& cfg, const std::optional<Graph>& truth,
                            Stages stages, std::optional<ParamStore> initial) {
  PipelineResult res{Model{}, prepare(raw, cfg), {}, {}, {}};
  res.model = build_model(res.prep, cfg);
  if (initial) assign_params(res.model, *initial);
  Trainer trainer(res.model, res.prep.normalized, res.prep.stats, cfg.horizon, cfg.train);
  if (stages == Stages::Both && cfg.train.joint) {
    res.log = trainer.train_joint(res.prep.train, res.prep.val);
  } else {
    if (stages != Stages::ForecastOnly) res.log = trainer.train_graph_stage(res.prep.train);
    if (stages != Stages::GraphOnly) {
      auto flog = trainer.train_forecast_stage(res.prep.train, res.prep.val);
      res.log.insert(res.log.end(), flog.begin(), flog.end());
    }
  }
  if (stages != Stages::GraphOnly)
    res.forecast = evaluate_forecast(res.model, res.prep, res.prep.test, cfg.train.static_graph);
  res.links = evaluate_links(res.model, res.prep, truth, cfg.threshold);
  return res;
}

}  // namespace dvgnn
