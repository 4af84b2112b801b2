#include "fwi/config.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "fwi/error.hpp"
#include "json.hpp"

namespace fwi {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& why) { fail(ErrorKind::config, path + ": " + why); }

// Field reader that remembers the JSON path for messages and rejects keys
// nobody asked for.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const json& at(const std::string& key) { return seen_.insert(key), j_.at(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = convert<T>(j_.at(key), field(key));
  }
  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    out = convert<T>(j_.at(key), field(key));
  }
  Block sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Block(j_.contains(key) ? j_.at(key) : empty, field(key));
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) bad(field(it.key()), "unknown field");
  }

  template <class T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad(where, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad(where, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      if (!v.is_string()) bad(where, "expected a path string");
      return std::filesystem::path(v.get<std::string>());
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) bad(where, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        if (v.get<std::int64_t>() < 0) bad(where, "must be >= 0");
        return static_cast<T>(v.get<std::int64_t>());
      } else {
        return static_cast<T>(v.get<std::int64_t>());
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad(where, "expected a number");
      return v.get<double>();
    } else {
      if (!v.is_array()) bad(where, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "ours") return Method::ours;
  if (name == "grid_l2") return Method::grid_l2;
  if (name == "grid_w1") return Method::grid_w1;
  if (name == "dnn_fwi") return Method::dnn_fwi;
  fail(ErrorKind::config, "method: unknown method '" + name + "' (expected ours, grid_l2, grid_w1 or dnn_fwi)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::ours: return "ours";
    case Method::grid_l2: return "grid_l2";
    case Method::grid_w1: return "grid_w1";
    case Method::dnn_fwi: return "dnn_fwi";
  }
  return "?";
}

AcquisitionGeometry GeometryConfig::resolve(std::size_t nx) const {
  AcquisitionGeometry g;
  const int n = static_cast<int>(nx);
  g.source_x = source_x.empty() ? equally_spaced(num_sources, n, margin) : source_x;
  if (!receiver_x.empty())
    g.receiver_x = receiver_x;
  else if (num_receivers > 0)
    g.receiver_x = equally_spaced(num_receivers, n, margin);
  else
    g.receiver_x = all_columns(n);
  g.dt = dt;
  g.nt = nt;
  g.peak_freq = peak_freq;
  g.delay = delay ? *delay : 1.0 / peak_freq;
  g.amplitude = amplitude;
  g.source_depth = source_depth;
  g.receiver_depth = receiver_depth;
  return g;
}

AbsorberConfig AbsorberBlock::resolve(double v_max, double dx) const {
  AbsorberConfig a = default_absorber(v_max, dx, layer_cells, profile_power, reflection);
  if (strength) a.strength = *strength;
  a.validate();
  return a;
}

void ExperimentConfig::validate() const {
  if (true_model.empty()) bad("model.true", "required");
  if (!(initial_smoothing > 0.0)) bad("model.initial_smoothing", "must be > 0");
  const GeometryConfig& g = geometry;
  if (g.source_x.empty() && g.num_sources < 1) bad("geometry.num_sources", "must be >= 1");
  if (g.num_receivers < 0) bad("geometry.num_receivers", "must be >= 0");
  if (g.margin < 0) bad("geometry.margin", "must be >= 0");
  if (!(g.dt > 0.0)) bad("geometry.dt", "must be > 0");
  if (g.nt < 2) bad("geometry.nt", "must be >= 2");
  if (!(g.peak_freq > 0.0)) bad("geometry.peak_freq", "must be > 0");
  if (g.delay && !(*g.delay >= 0.0)) bad("geometry.delay", "must be >= 0");
  if (g.source_depth < 1) bad("geometry.source_depth", "must be >= 1 (row 0 is the free surface)");
  if (g.receiver_depth < 1) bad("geometry.receiver_depth", "must be >= 1 (row 0 is the free surface)");
  if (absorber.layer_cells < 0) bad("absorber.layer_cells", "must be >= 0");
  if (absorber.strength && !(*absorber.strength >= 0.0)) bad("absorber.strength", "must be >= 0");
  if (!(absorber.profile_power >= 1.0)) bad("absorber.profile_power", "must be >= 1");
  if (!(absorber.reflection > 0.0 && absorber.reflection < 1.0)) bad("absorber.reflection", "must be in (0, 1)");
  if (substeps < 1) bad("propagator.substeps", "must be >= 1");
  if (history_budget_mb < 1) bad("propagator.history_budget_mb", "must be >= 1");
  if (!(noise.rel_level >= 0.0)) bad("noise.rel_level", "must be >= 0");
  if (threads < 1) bad("threads", "must be >= 1");
  net.validate();
  inversion.validate();
}

void ExperimentConfig::apply_seed(std::uint64_t base) {
  seed = base;
  noise.seed = base * 8 + 1;
  net.z0_seed = base * 8 + 2;
  inversion.init_seed = base * 8 + 3;
  inversion.mask_seed = base * 8 + 4;
  inversion.cm_seed = base * 8 + 5;
}

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Block top(root, "");

  std::optional<std::uint64_t> seed;
  top.get("seed", seed);
  if (seed) cfg.apply_seed(*seed);
  else cfg.apply_seed(0);

  {
    Block b = top.sub("model");
    b.get("true", cfg.true_model);
    if (!cfg.true_model.empty()) cfg.true_model = resolve(base_dir, cfg.true_model);
    b.get("initial", cfg.initial_model);
    if (cfg.initial_model) cfg.initial_model = resolve(base_dir, *cfg.initial_model);
    b.get("initial_smoothing", cfg.initial_smoothing);
    b.get("pretrained_params", cfg.pretrained_params);
    if (cfg.pretrained_params) cfg.pretrained_params = resolve(base_dir, *cfg.pretrained_params);
    b.finish();
  }
  {
    Block b = top.sub("geometry");
    GeometryConfig& g = cfg.geometry;
    b.get("num_sources", g.num_sources);
    b.get("source_x", g.source_x);
    b.get("num_receivers", g.num_receivers);
    b.get("receiver_x", g.receiver_x);
    b.get("margin", g.margin);
    b.get("dt", g.dt);
    b.get("nt", g.nt);
    b.get("peak_freq", g.peak_freq);
    b.get("delay", g.delay);
    b.get("amplitude", g.amplitude);
    b.get("source_depth", g.source_depth);
    b.get("receiver_depth", g.receiver_depth);
    b.finish();
  }
  {
    Block b = top.sub("absorber");
    b.get("layer_cells", cfg.absorber.layer_cells);
    b.get("strength", cfg.absorber.strength);
    b.get("profile_power", cfg.absorber.profile_power);
    b.get("reflection", cfg.absorber.reflection);
    b.finish();
  }
  {
    Block b = top.sub("propagator");
    b.get("substeps", cfg.substeps);
    b.get("history_budget_mb", cfg.history_budget_mb);
    b.finish();
  }
  {
    Block b = top.sub("net");
    SkipNetConfig& n = cfg.net;
    b.get("depth", n.depth);
    const bool explicit_ch = b.has("channels"), explicit_skip = b.has("skip_channels");
    // A scalar fills every level.
    auto level_list = [&](const std::string& key, std::vector<int>& out, int fallback) {
      if (b.has(key)) {
        const json& v = b.at(key);
        if (v.is_number_integer()) out.assign(static_cast<std::size_t>(std::max(n.depth, 0)), v.get<int>());
        else out = Block::convert<std::vector<int>>(v, b.field(key));
      } else {
        out.assign(static_cast<std::size_t>(std::max(n.depth, 0)), fallback);
      }
    };
    level_list("channels", n.channels, explicit_ch ? 0 : 128);
    level_list("skip_channels", n.skip_channels, explicit_skip ? 0 : 4);
    b.get("kernel", n.kernel);
    b.get("skip_kernel", n.skip_kernel);
    b.get("slope", n.slope);
    b.get("keep_down", n.keep_down);
    b.get("keep_up", n.keep_up);
    b.get("keep_skip", n.keep_skip);
    b.get("v_min", n.v_min);
    b.get("v_max", n.v_max);
    b.get("z0_seed", n.z0_seed);
    b.get("z0_amplitude", n.z0_amplitude);
    b.finish();
  }
  {
    Block b = top.sub("inversion");
    InversionConfig& c = cfg.inversion;
    b.get("alpha", c.alpha);
    b.get("lr_pretrain", c.lr_pretrain);
    b.get("lr_invert", c.lr_invert);
    b.get("lr_grid", c.lr_grid);
    b.get("pretrain_iters", c.pretrain_iters);
    b.get("invert_iters", c.invert_iters);
    b.get("pretrain_eps", c.pretrain_eps);
    b.get("mc_samples", c.mc_samples);
    std::string misfit;
    b.get("misfit", misfit);
    if (!misfit.empty()) {
      if (misfit != "l2" && misfit != "w1") bad("inversion.misfit", "expected \"l2\" or \"w1\"");
      c.misfit = parse_misfit_kind(misfit);
    }
    b.get("tv_eps", c.tv_eps);
    b.get("init_seed", c.init_seed);
    b.get("mask_seed", c.mask_seed);
    b.get("cm_seed", c.cm_seed);
    b.get("log_every", c.log_every);
    b.finish();
  }
  {
    Block b = top.sub("noise");
    b.get("rel_level", cfg.noise.rel_level);
    b.get("seed", cfg.noise.seed);
    b.finish();
  }
  std::string method;
  top.get("method", method);
  if (!method.empty()) {
    try {
      cfg.method = parse_method(method);
    } catch (const Error&) {
      bad("method", "expected ours, grid_l2, grid_w1 or dnn_fwi");
    }
  }
  top.get("data_dir", cfg.data_dir);
  if (cfg.data_dir) cfg.data_dir = resolve(base_dir, *cfg.data_dir);
  top.get("output", cfg.output);
  cfg.output = resolve(base_dir, cfg.output);
  top.get("threads", cfg.threads);
  top.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::missing_input, path.string() + ": no such config file");
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, path.string() + ": cannot open");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::string to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["model"]["true"] = cfg.true_model.generic_string();
  if (cfg.initial_model) j["model"]["initial"] = cfg.initial_model->generic_string();
  if (cfg.pretrained_params) j["model"]["pretrained_params"] = cfg.pretrained_params->generic_string();
  j["model"]["initial_smoothing"] = cfg.initial_smoothing;
  const GeometryConfig& g = cfg.geometry;
  j["geometry"] = {{"num_sources", g.num_sources}, {"num_receivers", g.num_receivers}, {"margin", g.margin},
                   {"dt", g.dt}, {"nt", g.nt}, {"peak_freq", g.peak_freq}, {"amplitude", g.amplitude},
                   {"source_depth", g.source_depth}, {"receiver_depth", g.receiver_depth}};
  if (!g.source_x.empty()) j["geometry"]["source_x"] = g.source_x;
  if (!g.receiver_x.empty()) j["geometry"]["receiver_x"] = g.receiver_x;
  if (g.delay) j["geometry"]["delay"] = *g.delay;
  j["absorber"] = {{"layer_cells", cfg.absorber.layer_cells}, {"profile_power", cfg.absorber.profile_power},
                   {"reflection", cfg.absorber.reflection}};
  if (cfg.absorber.strength) j["absorber"]["strength"] = *cfg.absorber.strength;
  j["propagator"] = {{"substeps", cfg.substeps}, {"history_budget_mb", cfg.history_budget_mb}};
  const SkipNetConfig& n = cfg.net;
  j["net"] = {{"depth", n.depth}, {"channels", n.channels}, {"skip_channels", n.skip_channels},
              {"kernel", n.kernel}, {"skip_kernel", n.skip_kernel}, {"slope", n.slope},
              {"keep_down", n.keep_down}, {"keep_up", n.keep_up}, {"keep_skip", n.keep_skip},
              {"v_min", n.v_min}, {"v_max", n.v_max}, {"z0_seed", n.z0_seed}, {"z0_amplitude", n.z0_amplitude}};
  const InversionConfig& c = cfg.inversion;
  j["inversion"] = {{"alpha", c.alpha}, {"lr_pretrain", c.lr_pretrain}, {"lr_invert", c.lr_invert},
                    {"lr_grid", c.lr_grid}, {"pretrain_iters", c.pretrain_iters},
                    {"invert_iters", c.invert_iters}, {"pretrain_eps", c.pretrain_eps},
                    {"mc_samples", c.mc_samples}, {"misfit", to_string(c.misfit)}, {"tv_eps", c.tv_eps},
                    {"init_seed", c.init_seed}, {"mask_seed", c.mask_seed}, {"cm_seed", c.cm_seed},
                    {"log_every", c.log_every}};
  j["noise"] = {{"rel_level", cfg.noise.rel_level}, {"seed", cfg.noise.seed}};
  j["method"] = to_string(cfg.method);
  if (cfg.data_dir) j["data_dir"] = cfg.data_dir->generic_string();
  j["threads"] = cfg.threads;
  return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  // threads change scheduling only, never results
  ExperimentConfig c = cfg;
  c.threads = 1;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fwi
