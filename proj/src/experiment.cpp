#include "fwi/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "fwi/ad/checkpoint.hpp"
#include "fwi/error.hpp"
#include "fwi/grid_io.hpp"
#include "json.hpp"

namespace fwi {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string num(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string log_csv(const std::vector<IterationLog>& log) {
  std::string out = "iter,loss_data,loss_tv,snr,ssim,rel_l2\n";
  for (const IterationLog& l : log) {
    out += std::to_string(l.iter) + "," + num(l.loss_data) + "," + num(l.loss_tv);
    if (l.metrics)
      out += "," + num(l.metrics->snr) + "," + num(l.metrics->ssim) + "," + num(l.metrics->rel_l2) + "\n";
    else
      out += ",,,\n";
  }
  return out;
}

json metrics_json(const MetricReport& m) {
  return {{"snr", std::isinf(m.snr) ? json("inf") : json(m.snr)}, {"ssim", m.ssim}, {"rel_l2", m.rel_l2}};
}

json seeds_json(const ExperimentConfig& cfg) {
  return {{"base", cfg.seed},
          {"noise", cfg.noise.seed},
          {"z0", cfg.net.z0_seed},
          {"init", cfg.inversion.init_seed},
          {"mask", cfg.inversion.mask_seed},
          {"cm", cfg.inversion.cm_seed}};
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

double read_noise_sigma(const fs::path& dir) {
  const fs::path m = dir / "manifest.json";
  if (!fs::exists(m)) return 0.0;
  std::ifstream in(m);
  try {
    const json j = json::parse(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
    return j.value("noise_sigma", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorKind::io, m.string() + ": malformed manifest: " + e.what());
  }
}

ParamVector initial_params(const ExperimentConfig& cfg, const SkipNet& net, const VelocityModel& initial,
                           const fs::path& dir, std::ostream& log) {
  if (cfg.pretrained_params) {
    ParamVector mu = build(net.config(), cfg.inversion.init_seed);
    std::vector<ad::Array4> loaded = ad::load_params(*cfg.pretrained_params);
    require(loaded.size() == mu.arrays.size(), ErrorKind::config,
            "model.pretrained_params: array count does not match the net config");
    for (std::size_t i = 0; i < loaded.size(); ++i)
      require(loaded[i].dims() == mu.arrays[i].dims(), ErrorKind::config,
              "model.pretrained_params: array " + mu.names[i] + " has the wrong shape");
    mu.arrays = std::move(loaded);
    mu.pretrained = true;
    log << "loaded pretrained parameters from " << cfg.pretrained_params->string() << "\n";
    return mu;
  }
  PretrainResult pr = pretrain(net, build(net.config(), cfg.inversion.init_seed), initial.values(), cfg.inversion);
  std::string csv = "iter,loss\n";
  for (std::size_t i = 0; i < pr.losses.size(); ++i) csv += std::to_string(i + 1) + "," + num(pr.losses[i]) + "\n";
  write_text(dir / "pretrain.csv", csv);
  log << "pretraining stopped after " << pr.iterations << " iterations (loss " << num(pr.losses.back()) << ")\n";
  return std::move(pr.mu);
}

void write_outcome(const ExperimentConfig& cfg, Method method, const fs::path& dir, const Workspace& ws,
                   const MethodOutcome& out, const std::vector<IterationLog>& log, const ParamVector* mu) {
  save_grid(dir / "estimate.fwig", out.estimate, ws.truth.dx());
  save_grid(dir / "initial.fwig", ws.initial.values(), ws.truth.dx());
  save_grid(dir / "truth.fwig", ws.truth.values(), ws.truth.dx());
  write_text(dir / "log.csv", log_csv(log));
  if (mu) ad::save_params(dir / "params.fwip", mu->arrays);
  write_text(dir / "config.json", to_json(cfg));
  json m = {{"command", "invert"},
            {"method", to_string(method)},
            {"config_hash", config_hash(cfg)},
            {"seeds", seeds_json(cfg)},
            {"noise_sigma", ws.problem.observed.noise_sigma},
            {"iterations", cfg.inversion.invert_iters},
            {"final_loss_data", out.final_loss_data},
            {"metrics", metrics_json(out.metrics)},
            {"initial_metrics", metrics_json(evaluate(ws.initial.values(), ws.truth.values()))}};
  if (method == Method::ours || method == Method::dnn_fwi)
    m["pretrain_loss"] = "mean |m - v_ini| / (v_max - v_min)";
  if (method == Method::dnn_fwi)
    m["note"] = "stand-in: unmasked net, l2 misfit, no TV, pretrained init";
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

MethodOutcome run_method(const ExperimentConfig& cfg, Method method, const Workspace& ws, std::ostream& log) {
  const fs::path dir = cfg.output / to_string(method);
  MethodOutcome out;
  out.dir = dir;
  std::vector<IterationLog> iters;
  const double lo = cfg.net.v_min, hi = cfg.net.v_max;
  std::optional<ParamVector> mu;
  switch (method) {
    case Method::grid_l2:
    case Method::grid_w1: {
      GridResult r = run_grid_fwi(ws.initial.values(), ws.problem,
                                  method == Method::grid_l2 ? MisfitKind::l2 : MisfitKind::w1, cfg.inversion, lo, hi);
      out.estimate = std::move(r.estimate);
      iters = std::move(r.log);
      break;
    }
    case Method::ours: {
      SkipNet net(cfg.net, ws.truth.nz(), ws.truth.nx());
      ParamVector mu0 = initial_params(cfg, net, ws.initial, dir, log);
      InvertResult r = invert(net, std::move(mu0), ws.problem, cfg.inversion);
      out.estimate = infer_cm(net, r.mu, cfg.inversion.mc_samples, cfg.inversion.cm_seed);
      iters = std::move(r.log);
      mu = std::move(r.mu);
      break;
    }
    case Method::dnn_fwi: {
      SkipNet net(cfg.net.deterministic(), ws.truth.nz(), ws.truth.nx());
      ParamVector mu0 = initial_params(cfg, net, ws.initial, dir, log);
      InvertResult r = run_dnn_fwi(net, std::move(mu0), ws.problem, cfg.inversion);
      out.estimate = net.generate(r.mu, nullptr);
      iters = std::move(r.log);
      mu = std::move(r.mu);
      break;
    }
  }
  out.metrics = evaluate(out.estimate, ws.truth.values());
  out.final_loss_data = iters.empty() ? 0.0 : iters.back().loss_data;
  write_outcome(cfg, method, dir, ws, out, iters, mu ? &*mu : nullptr);
  log << to_string(method) << ": snr " << num(out.metrics.snr) << " ssim " << num(out.metrics.ssim) << " rel_l2 "
      << num(out.metrics.rel_l2) << "\n";
  return out;
}

Workspace make_workspace(const ExperimentConfig& cfg) {
  auto [truth, initial] = load_models(cfg);
  FwiProblem problem = make_problem(cfg, truth);
  problem.observed = load_data(cfg);
  problem.observed.check_against(problem.geom);
  problem.truth = truth.values();
  return Workspace{std::move(truth), std::move(initial), std::move(problem)};
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::shape: return 2;
    case ErrorKind::missing_input: return 3;
    case ErrorKind::numerical: return 4;
    case ErrorKind::io: return 5;
  }
  return 1;
}

std::pair<VelocityModel, VelocityModel> load_models(const ExperimentConfig& cfg) {
  const GridFile t = load_grid(cfg.true_model);
  VelocityModel truth(t.values, t.dx);
  if (cfg.initial_model) {
    const GridFile i = load_grid(*cfg.initial_model);
    require(i.values.same_shape(t.values), ErrorKind::shape, "model.initial: dims differ from model.true");
    return {std::move(truth), VelocityModel(i.values, i.dx)};
  }
  VelocityModel initial(smooth_gaussian(t.values, cfg.initial_smoothing), t.dx);
  return {std::move(truth), std::move(initial)};
}

FwiProblem make_problem(const ExperimentConfig& cfg, const VelocityModel& truth) {
  FwiProblem p;
  p.geom = cfg.geometry.resolve(truth.nx());
  p.geom.validate(truth.nz(), truth.nx());
  // The absorber is tuned to the upper velocity bound so it stays fixed
  // while the model changes.
  p.absorber = cfg.absorber.resolve(std::max(cfg.net.v_max, truth.max_velocity()), truth.dx());
  p.dx = truth.dx();
  p.prop.substeps = cfg.substeps;
  p.prop.history_budget_bytes = cfg.history_budget_mb << 20;
  p.prop.threads = cfg.threads;
  return p;
}

fs::path shot_path(const fs::path& dir, std::size_t shot) {
  char name[32];
  std::snprintf(name, sizeof name, "shot_%03zu.fwis", shot);
  return dir / name;
}

DataSet cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  auto [truth, initial] = load_models(cfg);
  (void)initial;
  const FwiProblem p = make_problem(cfg, truth);
  const CflVerdict cfl = validate_cfl(truth.max_velocity(), truth.dx(), p.geom.dt / p.prop.substeps);
  require(cfl.stable, ErrorKind::numerical,
          "simulate: Courant number " + num(cfl.courant) + " exceeds the stability bound " + num(cfl.courant_max) +
              " (raise propagator.substeps or lower geometry.dt)");
  const DataSet clean = simulate(truth, p.geom, p.absorber, p.prop);
  const DataSet data = add_noise(clean, cfg.noise.rel_level, cfg.noise.seed);
  const fs::path dir = cfg.data_directory();
  for (std::size_t s = 0; s < data.shots.size(); ++s) save_shot(shot_path(dir, s), data.shots[s]);
  json m = {{"command", "simulate"},
            {"config_hash", config_hash(cfg)},
            {"num_shots", data.shots.size()},
            {"num_receivers", p.geom.num_receivers()},
            {"nt", p.geom.nt},
            {"dt", p.geom.dt},
            {"noise_rel_level", cfg.noise.rel_level},
            {"noise_seed", cfg.noise.seed},
            {"noise_sigma", data.noise_sigma},
            {"source_x", p.geom.source_x},
            {"absorber_strength", p.absorber.strength}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  write_text(dir / "config.json", to_json(cfg));
  log << "wrote " << data.shots.size() << " shot records to " << dir.string() << " (noise sigma " << num(data.noise_sigma)
      << ")\n";
  return data;
}

DataSet load_data(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.data_directory();
  if (!fs::exists(dir)) fail(ErrorKind::missing_input, dir.string() + ": data directory not found (run simulate first)");
  const GridFile t = load_grid(cfg.true_model);
  const AcquisitionGeometry geom = cfg.geometry.resolve(t.values.cols());
  DataSet d;
  for (std::size_t s = 0; s < geom.num_sources(); ++s) d.shots.push_back(load_shot(shot_path(dir, s), static_cast<int>(s)));
  d.noise_sigma = read_noise_sigma(dir);
  return d;
}

void cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log) {
  auto [truth, initial] = load_models(cfg);
  const fs::path dir = cfg.output / "pretrain";
  SkipNet net(cfg.net, truth.nz(), truth.nx());
  PretrainResult pr = pretrain(net, build(cfg.net, cfg.inversion.init_seed), initial.values(), cfg.inversion);
  ad::save_params(dir / "params.fwip", pr.mu.arrays);
  const MaskSet ones = ones_masks(cfg.net);
  save_grid(dir / "generated.fwig", net.generate(pr.mu, &ones), truth.dx());
  std::string csv = "iter,loss\n";
  for (std::size_t i = 0; i < pr.losses.size(); ++i) csv += std::to_string(i + 1) + "," + num(pr.losses[i]) + "\n";
  write_text(dir / "pretrain.csv", csv);
  write_text(dir / "config.json", to_json(cfg));
  json m = {{"command", "pretrain"},
            {"config_hash", config_hash(cfg)},
            {"seeds", seeds_json(cfg)},
            {"iterations", pr.iterations},
            {"final_loss", pr.losses.back()},
            {"loss", "mean |m - v_ini| / (v_max - v_min)"},
            {"parameter_count", pr.mu.count()}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  log << "pretraining stopped after " << pr.iterations << " iterations (loss " << num(pr.losses.back()) << ")\n";
}

MethodOutcome cmd_invert(const ExperimentConfig& cfg, std::ostream& log) {
  const Workspace ws = make_workspace(cfg);
  return run_method(cfg, cfg.method, ws, log);
}

MetricReport cmd_metrics(const fs::path& estimate, const fs::path& truth, const std::optional<fs::path>& csv,
                         std::ostream& out) {
  const GridFile e = load_grid(estimate);
  const GridFile t = load_grid(truth);
  require(e.values.same_shape(t.values), ErrorKind::shape, "metrics: grids differ in shape");
  const MetricReport m = evaluate(e.values, t.values);
  char line[160];
  std::snprintf(line, sizeof line, "snr %.4f\nssim %.4f\nrel_l2 %.4f\n", m.snr, m.ssim, m.rel_l2);
  out << line;
  if (csv) {
    std::string text;
    if (fs::exists(*csv)) {
      std::ifstream in(*csv);
      text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    } else {
      text = "estimate,truth,snr,ssim,rel_l2\n";
    }
    std::snprintf(line, sizeof line, ",%.4f,%.4f,%.4f\n", m.snr, m.ssim, m.rel_l2);
    text += estimate.generic_string() + "," + truth.generic_string() + line;
    write_text(*csv, text);
  }
  return m;
}

std::size_t profile_column(double x_km, double dx_m, std::size_t nx) {
  const double pos = x_km * 1000.0 / dx_m;
  const double idx = std::round(pos);
  require(std::isfinite(pos) && idx >= 0.0 && idx <= static_cast<double>(nx - 1), ErrorKind::config,
          "export-profiles: x=" + num(x_km) + " km lies outside the model (0 .. " +
              num(static_cast<double>(nx - 1) * dx_m / 1000.0) + " km)");
  return static_cast<std::size_t>(idx);
}

void cmd_export_profiles(const std::vector<fs::path>& grids, const std::vector<double>& x_km, const fs::path& out_csv) {
  require(!grids.empty(), ErrorKind::config, "export-profiles: no grids given");
  require(!x_km.empty(), ErrorKind::config, "export-profiles: no positions given");
  std::vector<GridFile> files;
  for (const auto& g : grids) files.push_back(load_grid(g));
  const std::size_t nz = files[0].values.rows();
  for (std::size_t k = 1; k < files.size(); ++k)
    require(files[k].values.rows() == nz, ErrorKind::shape, "export-profiles: grids differ in depth");
  std::vector<std::vector<std::size_t>> cols(files.size());
  std::string text = "depth_km";
  for (std::size_t k = 0; k < files.size(); ++k)
    for (double x : x_km) {
      cols[k].push_back(profile_column(x, files[k].dx, files[k].values.cols()));
      text += "," + grids[k].stem().string() + "@" + num(x);
    }
  text += "\n";
  for (std::size_t i = 0; i < nz; ++i) {
    text += num(static_cast<double>(i) * files[0].dx / 1000.0);
    for (std::size_t k = 0; k < files.size(); ++k)
      for (std::size_t c : cols[k]) text += "," + num(files[k].values(i, c));
    text += "\n";
  }
  write_text(out_csv, text);
}

std::vector<std::pair<Method, MethodOutcome>> cmd_compare(const ExperimentConfig& cfg, std::ostream& log) {
  const Workspace ws = make_workspace(cfg);
  std::vector<std::pair<Method, MethodOutcome>> out;
  std::string table = "method,snr,ssim,rel_l2,final_loss_data\n";
  const MetricReport init = evaluate(ws.initial.values(), ws.truth.values());
  table += "initial," + num(init.snr) + "," + num(init.ssim) + "," + num(init.rel_l2) + ",\n";
  for (Method m : {Method::grid_l2, Method::grid_w1, Method::dnn_fwi, Method::ours}) {
    MethodOutcome o = run_method(cfg, m, ws, log);
    table += to_string(m) + "," + num(o.metrics.snr) + "," + num(o.metrics.ssim) + "," + num(o.metrics.rel_l2) + "," +
             num(o.final_loss_data) + "\n";
    out.emplace_back(m, std::move(o));
  }
  write_text(cfg.output / "compare" / "table.csv", table);
  return out;
}

void cmd_make_model(std::size_t nz, std::size_t nx, double dx, const std::vector<double>& velocities,
                    const std::vector<std::size_t>& interfaces, double smooth_sigma, const fs::path& out) {
  require(!velocities.empty(), ErrorKind::config, "make-model: --velocities is required");
  require(interfaces.size() + 1 == velocities.size(), ErrorKind::config,
          "make-model: need exactly one fewer interface than velocities");
  Grid2 g = layered_model(nz, nx, velocities, interfaces);
  if (smooth_sigma > 0.0) g = smooth_gaussian(g, smooth_sigma);
  const VelocityModel checked(g, dx);
  save_grid(out, checked.values(), dx);
}

}  // namespace fwi
