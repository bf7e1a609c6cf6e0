#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssgp/config.hpp"
#include "ssgp/dataset.hpp"
#include "ssgp/dense.hpp"
#include "ssgp/inference.hpp"
#include "ssgp/objectives.hpp"
#include "ssgp/synth.hpp"

namespace ssgp {

inline constexpr double kZ95 = 1.959964;

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline void write_posterior_csv(const std::filesystem::path& path,
                                const Eigen::VectorXd& t,
                                const PosteriorMarginals& marg) {
  std::string out = "t,mean,var,lower95,upper95\n";
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double sd = std::sqrt(marg.v[i]);
    out += fmt_double(t[i]) + "," + fmt_double(marg.m[i]) + "," +
           fmt_double(marg.v[i]) + "," + fmt_double(marg.m[i] - kZ95 * sd) + "," +
           fmt_double(marg.m[i] + kZ95 * sd) + "\n";
  }
  atomic_write(path, out);
}

inline void write_sites_csv(const std::filesystem::path& path,
                            const Eigen::VectorXd& t, const SiteParams& sites) {
  std::string out = "t,lambda1,lambda2\n";
  for (Eigen::Index i = 0; i < t.size(); ++i)
    out += fmt_double(t[i]) + "," + fmt_double(sites.lambda1[i]) + "," +
           fmt_double(sites.lambda2[i]) + "\n";
  atomic_write(path, out);
}

inline SiteParams read_sites_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> l1, l2;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
      throw std::runtime_error("sites csv: malformed row");
    l1.push_back(std::stod(b));
    l2.push_back(std::stod(c));
  }
  SiteParams s;
  s.lambda1 = Eigen::Map<Eigen::VectorXd>(l1.data(), static_cast<Eigen::Index>(l1.size()));
  s.lambda2 = Eigen::Map<Eigen::VectorXd>(l2.data(), static_cast<Eigen::Index>(l2.size()));
  return s;
}

inline void write_trace_csv(const std::filesystem::path& path,
                            const std::vector<TraceRow>& trace) {
  std::string out = "iter,objective,grad_norm,elapsed_s\n";
  for (const auto& r : trace)
    out += std::to_string(r.iter) + "," + fmt_double(r.objective) + "," +
           fmt_double(r.grad_norm) + "," + fmt_double(r.elapsed_s) + "\n";
  atomic_write(path, out);
}

inline std::vector<double> read_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> events;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    const std::string field = comma == std::string::npos ? line : line.substr(0, comma);
    double v;
    if (!detail::parse_double(field, v)) {
      if (row == 1 && events.empty()) continue;  // header
      throw std::runtime_error("events file row " + std::to_string(row) + ": not numeric");
    }
    events.push_back(v);
  }
  return events;
}

inline Dataset load_dataset(const RunConfig& cfg) {
  if (!cfg.events_path.empty()) {
    auto events = read_events(cfg.events_path);
    if (cfg.bins <= 0) throw std::runtime_error("config: data.bins required with data.events");
    double lo = cfg.range_lo, hi = cfg.range_hi;
    if (!cfg.has_range) {
      if (events.empty()) throw std::runtime_error("no data: empty events file");
      lo = *std::min_element(events.begin(), events.end());
      hi = *std::max_element(events.begin(), events.end());
    }
    return bin_events(events, lo, hi, cfg.bins);
  }
  if (!cfg.data_path.empty()) return ingest_csv(cfg.data_path);
  throw std::runtime_error("config: no data source (set data.path or data.events)");
}

inline int cmd_fit(const std::string& config_path) {
  const RunConfig cfg = load_config(config_path);
  const Dataset data = load_dataset(cfg);
  if (data.t.size() == 0) throw std::runtime_error("no data");

  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);

  Kernel kernel = cfg.kernel();
  Likelihood lik = cfg.make_likelihood();
  const QuadratureRule rule = gh_rule(cfg.quad_order);

  const auto t0 = std::chrono::steady_clock::now();
  PosteriorMarginals marginals;
  SiteParams sites;
  std::vector<TraceRow> trace;
  double final_objective = 0.0;

  if (cfg.outer_iters > 0) {
    FitResult res = fit(kernel, lik, data.t, data.y, cfg.fit_config());
    kernel = res.kernel;
    lik = res.lik;
    marginals = res.marginals;
    sites = res.sites;
    trace = res.trace;
    final_objective = res.final_objective;
  } else if (cfg.make_engine() == Engine::Dense) {
    InferenceResult res = dense_cvi(kernel, lik, data.t, data.y, cfg.inference(), cfg.dense_cap);
    marginals = res.smoother.marginals;
    sites = res.sites;
    final_objective = elbo(marginals, sites, res.filter_log_z, lik, data.y, rule).value;
    for (size_t k = 0; k < res.trace.size(); ++k)
      trace.push_back({static_cast<int>(k), res.trace[k], 0.0, 0.0});
  } else {
    InferenceResult res = run_inference(kernel, lik, data.t, data.y, cfg.inference());
    marginals = res.smoother.marginals;
    sites = res.sites;
    final_objective = cfg.inference().mode == InferenceMode::CVI
                          ? elbo(marginals, sites, res.filter_log_z, lik, data.y, rule).value
                          : res.filter_log_z;
    for (size_t k = 0; k < res.trace.size(); ++k)
      trace.push_back({static_cast<int>(k), res.trace[k], 0.0, 0.0});
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_posterior_csv(dir / "posterior.csv", data.t, marginals);
  write_sites_csv(dir / "sites.csv", data.t, sites);
  write_trace_csv(dir / "trace.csv", trace);

  nlohmann::json metrics;
  metrics["final_objective"] = final_objective;
  metrics["iters"] = cfg.outer_iters > 0 ? cfg.outer_iters : cfg.iters;
  metrics["wall_time_s"] = wall;
  metrics["engine"] = cfg.engine;
  metrics["n"] = data.t.size();
  nlohmann::json hp;
  const HyperParams theta = pack_hyperparams(kernel, lik);
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    hp[theta.names[static_cast<size_t>(i)]] = std::exp(theta.values[i]);
  metrics["hyperparams"] = hp;
  atomic_write(dir / "metrics.json", metrics.dump(2) + "\n");
  return 0;
}

// Predictive marginals at arbitrary t*: the test points are merged into the
// training grid as uninformative sites and one filter/smoother pass is run,
// which covers interpolation, extrapolation, and pre-data extrapolation alike.
struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

inline Prediction predict_marginals(const Kernel& kernel, const Eigen::VectorXd& t_train,
                                    const SiteParams& train_sites,
                                    const Eigen::VectorXd& t_star) {
  struct Point { double t; Eigen::Index train = -1, test = -1; };
  std::vector<Point> pts;
  for (Eigen::Index i = 0; i < t_train.size(); ++i) pts.push_back({t_train[i], i, -1});
  for (Eigen::Index j = 0; j < t_star.size(); ++j) pts.push_back({t_star[j], -1, j});
  std::stable_sort(pts.begin(), pts.end(),
                   [](const Point& a, const Point& b) { return a.t < b.t; });
  // collapse test points that coincide with a grid point
  std::vector<Point> grid;
  for (const auto& p : pts) {
    if (!grid.empty() && grid.back().t == p.t) {
      if (p.train >= 0) grid.back().train = p.train;
      if (p.test >= 0) grid.back().test = p.test;
    } else {
      grid.push_back(p);
    }
  }

  const Eigen::Index ng = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd tg(ng);
  SiteParams sites = SiteParams::uninformative(ng);
  for (Eigen::Index i = 0; i < ng; ++i) {
    tg[i] = grid[static_cast<size_t>(i)].t;
    const Eigen::Index tr = grid[static_cast<size_t>(i)].train;
    if (tr >= 0) {
      sites.lambda1[i] = train_sites.lambda1[tr];
      sites.lambda2[i] = train_sites.lambda2[tr];
    }
  }

  const StateSpaceModel model = to_state_space(kernel);
  const auto transitions = build_transitions(model, tg);
  auto [f, s] = conjugate_pass(transitions, model.h, model.Pinf, sites);

  Prediction pred;
  pred.mean.resize(t_star.size());
  pred.var.resize(t_star.size());
  for (Eigen::Index i = 0; i < ng; ++i) {
    const Eigen::Index te = grid[static_cast<size_t>(i)].test;
    if (te >= 0) {
      pred.mean[te] = s.marginals.m[i];
      pred.var[te] = s.marginals.v[i];
    }
  }
  return pred;
}

inline int cmd_predict(const std::string& config_path, const std::string& test_path,
                       const std::string& out_path) {
  const RunConfig cfg = load_config(config_path);
  const Dataset data = load_dataset(cfg);
  const std::filesystem::path dir = cfg.output_dir;

  Kernel kernel = cfg.kernel();
  Likelihood lik = cfg.make_likelihood();
  // adopt fitted hyperparameters when a fit has been run
  const std::filesystem::path metrics_path = dir / "metrics.json";
  if (std::filesystem::exists(metrics_path)) {
    std::ifstream in(metrics_path);
    nlohmann::json metrics = nlohmann::json::parse(in);
    if (metrics.contains("hyperparams")) {
      HyperParams theta = pack_hyperparams(kernel, lik);
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const auto& name = theta.names[static_cast<size_t>(i)];
        if (metrics["hyperparams"].contains(name))
          theta.values[i] = std::log(metrics["hyperparams"][name].get<double>());
      }
      apply_hyperparams(kernel, lik, theta.values);
    }
  }
  const std::filesystem::path sites_path = dir / "sites.csv";
  if (!std::filesystem::exists(sites_path))
    throw std::runtime_error("predict: no fitted artifacts at " + sites_path.string() +
                             " (run fit first)");
  const SiteParams sites = read_sites_csv(sites_path);
  if (sites.size() != data.t.size())
    throw std::runtime_error("predict: sites.csv does not match training data size");

  // test file: column t, optional column y
  std::ifstream in(test_path);
  if (!in) throw std::runtime_error("cannot open " + test_path);
  std::vector<double> ts, ys;
  bool has_y = false;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b;
    std::getline(ss, a, ',');
    const bool got_b = static_cast<bool>(std::getline(ss, b, ','));
    double t, y = 0.0;
    if (!detail::parse_double(a, t) || (got_b && !detail::parse_double(b, y))) {
      if (row == 1 && ts.empty()) continue;
      throw std::runtime_error("test csv row " + std::to_string(row) + ": not numeric");
    }
    if (row == 1 || ts.empty()) has_y = got_b;
    ts.push_back(t);
    if (got_b) ys.push_back(y);
  }
  Eigen::VectorXd t_star = Eigen::Map<Eigen::VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));

  const Prediction pred = predict_marginals(kernel, data.t, sites, t_star);
  const QuadratureRule rule = gh_rule(cfg.quad_order);

  std::string out = has_y ? "t,mean,var,nlpd\n" : "t,mean,var\n";
  for (Eigen::Index i = 0; i < t_star.size(); ++i) {
    if (!std::isfinite(pred.mean[i]) || !std::isfinite(pred.var[i]))
      throw std::runtime_error("predict: non-finite prediction at t=" + fmt_double(t_star[i]));
    out += fmt_double(t_star[i]) + "," + fmt_double(pred.mean[i]) + "," + fmt_double(pred.var[i]);
    if (has_y) {
      const double nlpd =
          -log_partition(lik, ys[static_cast<size_t>(i)], pred.mean[i], pred.var[i], rule).value;
      out += "," + fmt_double(nlpd);
    }
    out += "\n";
  }
  atomic_write(out_path, out);
  return 0;
}

inline int cmd_bin(const std::string& input, int bins, double lo, double hi,
                   const std::string& output) {
  const auto events = read_events(input);
  const Dataset d = bin_events(events, lo, hi, bins);
  std::string out = "t,y\n";
  for (Eigen::Index i = 0; i < d.t.size(); ++i)
    out += fmt_double(d.t[i]) + "," + fmt_double(d.y[i]) + "\n";
  atomic_write(output, out);
  return 0;
}

inline int cmd_bench(const std::string& config_path, const std::vector<Eigen::Index>& sizes,
                     const std::string& out_path) {
  const RunConfig cfg = load_config(config_path);
  const Likelihood lik = cfg.make_likelihood();
  const QuadratureRule rule = gh_rule(cfg.quad_order);

  std::string out = "n,engine,setup_s,per_iter_s,peak_mem_estimate_mb\n";
  for (Eigen::Index n : sizes) {
    const Dataset data = make_bernoulli_task(n, cfg.seed);
    const Kernel kernel = cfg.kernel();

    auto t0 = std::chrono::steady_clock::now();
    const StateSpaceModel model = to_state_space(kernel);
    const auto transitions = build_transitions(model, data.t);
    SiteParams sites = filter_init(transitions, model.h, model.Pinf, lik, data.y, rule);
    const double setup =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<double> runs;
    for (int r = 0; r < 5; ++r) {
      auto t1 = std::chrono::steady_clock::now();
      auto [f, s] = conjugate_pass(transitions, model.h, model.Pinf, sites);
      sites = cvi_site_update(sites, s.marginals, lik, data.y, 0.5, rule);
      runs.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count());
    }
    std::sort(runs.begin(), runs.end());
    const double per_iter = runs[2];
    const double d = static_cast<double>(model.d);
    const double mem_mb =
        static_cast<double>(n) * (4.0 * d * d + 4.0 * d + 8.0) * 8.0 / 1048576.0;
    out += std::to_string(n) + ",sequential," + fmt_double(setup) + "," +
           fmt_double(per_iter) + "," + fmt_double(mem_mb) + "\n";

    if (n <= cfg.dense_cap) {
      auto t2 = std::chrono::steady_clock::now();
      const DenseGram gram = build_gram(kernel, data.t);
      SiteParams dsites = SiteParams::uninformative(n);
      const double dsetup =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t2).count();
      std::vector<double> druns;
      for (int r = 0; r < 5; ++r) {
        auto t3 = std::chrono::steady_clock::now();
        auto reg = dense_regression(gram, dsites);
        dsites = cvi_site_update(dsites, reg.marginals, lik, data.y, 0.5, rule);
        druns.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t3).count());
      }
      std::sort(druns.begin(), druns.end());
      const double dmem_mb = static_cast<double>(n) * static_cast<double>(n) * 8.0 / 1048576.0;
      out += std::to_string(n) + ",dense," + fmt_double(dsetup) + "," +
             fmt_double(druns[2]) + "," + fmt_double(dmem_mb) + "\n";
    }
  }
  atomic_write(out_path, out);
  return 0;
}

}  // namespace ssgp
