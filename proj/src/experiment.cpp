#include "mlkan/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mlkan/analysis.hpp"
#include "mlkan/basis.hpp"

namespace mlkan::experiment {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json base_config() {
  return json{
      {"experiment", ""},
      {"seed", 1234},
      {"model",
       {{"kind", "kan"},
        {"basis", "spline"},
        {"widths", {2, 5, 1}},
        {"order", 4},
        {"intervals", 8},
        {"augment", "none"},
        {"hidden_norm", "affine"},
        {"hidden_lo", -1.0},
        {"hidden_hi", 1.0},
        {"init_scale", 0.1},
        {"activation", "tanh"},
        {"output_activation", "identity"}}},
      {"train", {{"schedule", {32, 16, 8, 4}}, {"prolongation", "dyadic"}, {"metric_every", 1}}},
      {"optimizer",
       {{"kind", "adam"},
        {"lr", 1e-3},
        {"lr0", 1e-4},
        {"lr_schedule", "constant"},
        {"ramp_steps", 10},
        {"cycle", 100},
        {"gamma", 0.9995},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"eps", 1e-8},
        {"weight_decay", 0.0},
        {"history", 10},
        {"lbfgs_iters", 20},
        {"level_warmup", 0},
        {"tolerance_grad", 1e-7},
        {"tolerance_change", 1e-9}}},
      {"problem", json::object()},
      {"output", {{"field_nx", 101}, {"field_ny", 101}, {"wallclock", true}, {"spectra", false},
                  {"spectra_nx", 128}, {"spectra_nt", 128}}},
  };
}

bool same_kind(const json& def, const json& val) {
  if (def.is_number_float()) return val.is_number();
  if (def.is_number_integer() || def.is_number_unsigned()) return val.is_number_integer() || val.is_number_unsigned();
  if (def.is_boolean()) return val.is_boolean();
  if (def.is_string()) return val.is_string();
  if (def.is_array()) return val.is_array();
  if (def.is_object()) return val.is_object();
  return def.type() == val.type();
}

void merge_checked(json& into, const json& from, const std::string& path) {
  for (auto it = from.begin(); it != from.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!into.contains(it.key())) throw std::invalid_argument("unknown config key '" + key + "'");
    json& slot = into[it.key()];
    if (!same_kind(slot, it.value())) {
      throw std::invalid_argument("config key '" + key + "' expects " + std::string(slot.type_name()) + ", got " +
                                  std::string(it.value().type_name()));
    }
    if (slot.is_object()) merge_checked(slot, it.value(), key);
    else slot = it.value();
  }
}

model::Augment parse_augment(const std::string& s) {
  if (s == "none") return model::Augment::None;
  if (s == "absx") return model::Augment::AbsX;
  throw std::invalid_argument("unknown augment '" + s + "' (none|absx)");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json parts_json(const multilevel::LossParts& l) {
  return json{{"total", l.total}, {"V", l.v}, {"B", l.b}, {"I", l.i}};
}

void write_fields(std::ostream& os, const LevelSnapshot& s) {
  const auto& f = s.fields;
  for (std::size_t i = 0; i < f.y.size(); ++i)
    for (std::size_t j = 0; j < f.x.size(); ++j)
      os << s.level << ',' << fmt(f.x[j]) << ',' << fmt(f.y[i]) << ',' << fmt(f.value(i, j)) << ','
         << fmt(f.residual(i, j)) << ',' << fmt(f.reference(i, j)) << '\n';
}

}  // namespace

json default_config(const std::string& experiment) {
  json c = base_config();
  c["experiment"] = experiment;
  if (experiment == "regression") {
    c["model"]["widths"] = {2, 5, 1};
    c["model"]["order"] = 2;
    c["model"]["activation"] = "relu";
    c["optimizer"]["kind"] = "lbfgs";
    c["optimizer"]["lr"] = 1.0;
    c["train"]["schedule"] = {32, 16, 8, 4};
    c["problem"] = {{"samples", 20000}, {"theta", 0.175}, {"lo", 0.0001}, {"hi", 0.9999}};
  } else if (experiment == "poisson") {
    c["model"]["widths"] = {3, 5, 1};
    c["model"]["augment"] = "absx";
    c["model"]["intervals"] = 4;
    c["optimizer"]["lr"] = 1e-2;
    c["optimizer"]["lr0"] = 1e-4;
    c["optimizer"]["lr_schedule"] = "linear_ramp";
    c["optimizer"]["ramp_steps"] = 10;
    c["train"]["schedule"] = {1250, 1250, 1250, 1250};
    const problems::PoissonConfig d;
    c["problem"] = {{"eps_l", d.eps_l},          {"eps_r", d.eps_r},
                    {"volume_side", d.volume_side}, {"boundary_points", d.boundary_points},
                    {"interface_points", d.interface_points}, {"gamma_v", d.gamma_v},
                    {"gamma_b", d.gamma_b},      {"gamma_i", d.gamma_i},
                    {"offset", d.offset},        {"rba_mu", d.rba_mu},
                    {"use_rba", d.use_rba},      {"mean_reduction", d.mean_reduction}};
  } else if (experiment == "burgers") {
    c["model"]["widths"] = {2, 20, 20, 1};
    c["model"]["intervals"] = 4;
    c["optimizer"]["lr"] = 1e-3;
    c["optimizer"]["lr_schedule"] = "exp_cyclic";
    c["optimizer"]["weight_decay"] = 1e-4;
    c["train"]["schedule"] = {800, 400, 200};
    const problems::BurgersConfig d;
    c["problem"] = {{"nu", d.nu},           {"nx", d.nx},           {"nt", d.nt},
                    {"ic_points", d.ic_points}, {"gamma_v", d.gamma_v}, {"gamma_b", d.gamma_b}};
  } else if (experiment == "allen-cahn") {
    c["model"]["widths"] = {2, 5, 5, 1};
    c["model"]["intervals"] = 4;
    c["model"]["hidden_norm"] = "sigmoid";
    c["optimizer"]["lr"] = 1e-3;
    c["train"]["schedule"] = {2500, 2500, 2500, 2500};
    c["output"]["spectra"] = true;
    const problems::AllenCahnConfig d;
    c["problem"] = {{"eps", d.eps},
                    {"diffusion_sign", d.diffusion_sign},
                    {"collocation", d.collocation},
                    {"grid", d.grid},
                    {"grid_side", d.grid_side},
                    {"ic_points", d.ic_points},
                    {"gamma_v", d.gamma_v},
                    {"gamma_b", d.gamma_b},
                    {"rba_mu", d.rba_mu},
                    {"use_rba", d.use_rba}};
  } else {
    throw std::invalid_argument("unknown experiment '" + experiment + "' (regression|poisson|burgers|allen-cahn)");
  }
  return c;
}

json resolve_config(const json& user, const std::string& experiment) {
  if (!user.is_object()) throw std::invalid_argument("config must be a JSON object");
  std::string name = experiment;
  if (user.contains("experiment")) {
    if (!user["experiment"].is_string()) throw std::invalid_argument("config key 'experiment' must be a string");
    const std::string given = user["experiment"];
    if (!name.empty() && given != name) {
      throw std::invalid_argument("config names experiment '" + given + "' but '" + name + "' was requested");
    }
    name = given;
  }
  if (name.empty()) throw std::invalid_argument("config does not name an experiment");
  json cfg = default_config(name);
  merge_checked(cfg, user, "");
  cfg["experiment"] = name;
  return cfg;
}

void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  // build a nested patch and merge it with the usual checks
  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_checked(cfg, patch, "");
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file '" + path + "': " + e.what());
  }
}

std::unique_ptr<problems::Problem> make_problem(const json& cfg) {
  const std::string name = cfg.at("experiment");
  const json& p = cfg.at("problem");
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  if (name == "regression") {
    problems::RegressionConfig c;
    c.samples = p.at("samples");
    c.theta = p.at("theta");
    c.lo = p.at("lo");
    c.hi = p.at("hi");
    c.seed = seed;
    return std::make_unique<problems::RegressionProblem>(c);
  }
  if (name == "poisson") {
    problems::PoissonConfig c;
    c.eps_l = p.at("eps_l");
    c.eps_r = p.at("eps_r");
    c.volume_side = p.at("volume_side");
    c.boundary_points = p.at("boundary_points");
    c.interface_points = p.at("interface_points");
    c.gamma_v = p.at("gamma_v");
    c.gamma_b = p.at("gamma_b");
    c.gamma_i = p.at("gamma_i");
    c.offset = p.at("offset");
    c.rba_mu = p.at("rba_mu");
    c.use_rba = p.at("use_rba");
    c.mean_reduction = p.at("mean_reduction");
    return std::make_unique<problems::PoissonProblem>(c);
  }
  if (name == "burgers") {
    problems::BurgersConfig c;
    c.nu = p.at("nu");
    c.nx = p.at("nx");
    c.nt = p.at("nt");
    c.ic_points = p.at("ic_points");
    c.gamma_v = p.at("gamma_v");
    c.gamma_b = p.at("gamma_b");
    return std::make_unique<problems::BurgersProblem>(c);
  }
  if (name == "allen-cahn") {
    problems::AllenCahnConfig c;
    c.eps = p.at("eps");
    c.diffusion_sign = p.at("diffusion_sign");
    c.collocation = p.at("collocation");
    c.grid = p.at("grid");
    c.grid_side = p.at("grid_side");
    c.ic_points = p.at("ic_points");
    c.gamma_v = p.at("gamma_v");
    c.gamma_b = p.at("gamma_b");
    c.rba_mu = p.at("rba_mu");
    c.use_rba = p.at("use_rba");
    c.seed = seed;
    return std::make_unique<problems::AllenCahnProblem>(c);
  }
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

model::Network make_network(const json& cfg, const problems::Problem& problem) {
  const json& m = cfg.at("model");
  std::mt19937_64 rng(cfg.at("seed").get<std::uint64_t>());
  const auto widths = m.at("widths").get<std::vector<int>>();
  const std::string kind = m.at("kind");
  if (kind == "mlp") {
    model::MlpSpec s;
    s.widths = widths;
    s.act = model::parse_activation(m.at("activation"));
    s.output_act = model::parse_activation(m.at("output_activation"));
    auto net = model::make_mlp(s, rng);
    if (net.raw_inputs() != problem.inputs()) throw std::invalid_argument("model.widths[0] must match the problem inputs");
    return net;
  }
  if (kind != "kan") throw std::invalid_argument("unknown model kind '" + kind + "' (kan|mlp)");
  model::KanSpec s;
  s.widths = widths;
  s.order = m.at("order");
  s.intervals = m.at("intervals");
  s.mode = model::parse_basis_mode(m.at("basis"));
  s.augment = parse_augment(m.at("augment"));
  s.hidden_norm = model::parse_norm_kind(m.at("hidden_norm"));
  s.hidden_lo = m.at("hidden_lo");
  s.hidden_hi = m.at("hidden_hi");
  s.init_scale = m.at("init_scale");
  s.input_lo = problem.lower();
  s.input_hi = problem.upper();
  if (s.augment == model::Augment::AbsX) {
    s.input_lo.push_back(0.0);
    s.input_hi.push_back(std::max(std::abs(s.input_lo[0]), std::abs(s.input_hi[0])));
  }
  const int expect = static_cast<int>(s.input_lo.size());
  if (widths.empty() || widths[0] != expect) {
    throw std::invalid_argument("model.widths[0] must be " + std::to_string(expect) + " for this problem");
  }
  return model::make_kan(s, rng);
}

multilevel::TrainOptions make_train_options(const json& cfg) {
  const json& t = cfg.at("train");
  const json& o = cfg.at("optimizer");
  multilevel::TrainOptions opt;
  opt.schedule = t.at("schedule").get<std::vector<int>>();
  opt.prolong = multilevel::parse_prolong_kind(t.at("prolongation"));
  opt.metric_every = t.at("metric_every");
  opt.wallclock = cfg.at("output").at("wallclock");
  auto& os = opt.optimizer;
  os.kind = multilevel::parse_optimizer_kind(o.at("kind"));
  os.schedule.kind = optim::parse_schedule_kind(o.at("lr_schedule"));
  os.schedule.lr = o.at("lr");
  os.schedule.lr0 = o.at("lr0");
  os.schedule.ramp_steps = o.at("ramp_steps");
  os.schedule.cycle = o.at("cycle");
  os.schedule.gamma = o.at("gamma");
  os.adam.beta1 = o.at("beta1");
  os.adam.beta2 = o.at("beta2");
  os.adam.eps = o.at("eps");
  os.adam.weight_decay = o.at("weight_decay");
  os.lbfgs.lr = o.at("lr");
  os.lbfgs.history = o.at("history");
  os.lbfgs.tolerance_grad = o.at("tolerance_grad");
  os.lbfgs.tolerance_change = o.at("tolerance_change");
  os.lbfgs_iters = o.at("lbfgs_iters");
  os.level_warmup = o.at("level_warmup");
  if (os.level_warmup < 0) throw std::invalid_argument("optimizer.level_warmup must be nonnegative");
  for (int e : opt.schedule)
    if (e < 0) throw std::invalid_argument("train.schedule entries must be nonnegative");
  if (opt.schedule.empty()) throw std::invalid_argument("train.schedule is empty");
  return opt;
}

void write_metrics_csv(const std::string& path, const std::vector<multilevel::StepRecord>& log) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "step,level,loss_total,loss_V,loss_B,loss_I,metric,lr,wall_ms\n";
  for (const auto& r : log) {
    os << r.step << ',' << r.level << ',' << fmt(r.loss.total) << ',' << fmt(r.loss.v) << ',' << fmt(r.loss.b) << ','
       << fmt(r.loss.i) << ',' << fmt(r.metric) << ',' << fmt(r.lr) << ',' << fmt(r.wall_ms) << '\n';
  }
}

RunResult run_experiment(const json& cfg_in, const RunOptions& ro) {
  RunResult res;
  res.config = cfg_in;
  const json& cfg = res.config;
  auto problem = make_problem(cfg);
  auto net = make_network(cfg, *problem);
  auto opt = make_train_options(cfg);
  if (net.kind == model::NetKind::Mlp && opt.schedule.size() != 1) {
    throw std::invalid_argument("an MLP has no refinement hierarchy; use a single-level schedule");
  }
  const json& out = cfg.at("output");
  const bool spectra = out.at("spectra");
  const int fnx = out.at("field_nx"), fny = out.at("field_ny");
  const int snx = out.at("spectra_nx"), snt = out.at("spectra_nt");
  const bool want_fields = !ro.out_dir.empty() && ro.write_fields;

  opt.on_level_end = [&](int level, const model::Network& n) {
    LevelSnapshot s;
    s.level = level;
    s.params = model::param_count(n);
    s.loss = problem->evaluate(n, {}).total;
    s.metric = problem->metric(n);
    s.spectral_energy = kNaN;
    if (spectra) s.spectral_energy = analysis::residual_spectrum(problem->fields(n, snx, snt).residual).energy;
    if (want_fields || ro.keep_level_fields) s.fields = problem->fields(n, fnx, fny);
    res.levels.push_back(std::move(s));
  };
  if (!ro.quiet) {
    opt.on_step = [](const multilevel::StepRecord& r) {
      if (r.step % 100 == 0) std::fprintf(stderr, "step %ld level %d loss %.6e\n", r.step, r.level, r.loss.total);
    };
  }

  const auto t0 = std::chrono::steady_clock::now();
  res.train = multilevel::nested_train(std::move(net), *problem, opt);
  const double total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  const auto& tr = res.train;
  json s;
  s["schema_version"] = kSummarySchemaVersion;
  s["experiment"] = cfg.at("experiment");
  s["seed"] = cfg.at("seed");
  s["basis"] = cfg.at("model").at("basis");
  s["model"] = cfg.at("model").at("kind");
  s["schedule"] = opt.schedule;
  s["params_per_level"] = tr.params_per_level;
  if (cfg.at("model").at("kind") == "kan" && opt.prolong == multilevel::ProlongKind::Dyadic)
    s["mask_constant"] = multilevel::dyadic_mask_constant(cfg.at("model").at("order"));
  s["final_loss"] = parts_json(tr.final_loss);
  s["final_metric"] = tr.final_metric;
  s["evaluations"] = tr.evaluations;
  s["steps"] = tr.log.size();
  s["diverged"] = tr.diverged;
  s["error"] = tr.error;
  if (out.at("wallclock")) s["wall_ms"] = total_ms;
  json trans = json::array();
  for (const auto& t : tr.transitions) {
    trans.push_back({{"from_level", t.from_level}, {"step", t.step}, {"before", t.before}, {"after", t.after},
                     {"rel_jump", t.rel_jump}});
  }
  s["transitions"] = trans;
  json levels = json::array();
  for (const auto& l : res.levels) {
    levels.push_back({{"level", l.level}, {"params", l.params}, {"loss", l.loss}, {"metric", l.metric},
                      {"spectral_energy", l.spectral_energy}});
  }
  s["levels"] = levels;
  s["config"] = cfg;
  res.summary = s;

  if (!ro.out_dir.empty()) {
    fs::create_directories(ro.out_dir);
    const fs::path dir(ro.out_dir);
    write_metrics_csv((dir / "metrics.csv").string(), tr.log);
    {
      std::ofstream os(dir / "summary.json");
      os << std::setw(2) << s << '\n';
    }
    if (want_fields) {
      std::ofstream os(dir / "fields.csv");
      os << "level,x,y,value,residual,reference\n";
      for (const auto& l : res.levels) write_fields(os, l);
    }
    if (spectra) {
      std::ofstream os(dir / "spectra.csv");
      os << "level,omega_x,omega_t,magnitude\n";
      // recomputed from the level grids only when the fields were kept
      for (const auto& l : res.levels) {
        if (l.fields.x.empty()) continue;
        const auto rep = analysis::residual_spectrum(l.fields.residual);
        for (std::size_t i = 0; i < rep.omega_t.size(); ++i)
          for (std::size_t j = 0; j < rep.omega_x.size(); ++j)
            os << l.level << ',' << rep.omega_x[j] << ',' << rep.omega_t[i] << ',' << fmt(rep.magnitude(i, j)) << '\n';
      }
    }
    {
      std::ofstream os(dir / "weights.txt");
      model::save_weights(tr.net, os);
    }
  }
  if (!ro.keep_level_fields)
    for (auto& l : res.levels) l.fields = {};
  return res;
}

EnsembleResult run_ensemble(const json& cfg, const std::vector<std::uint64_t>& seeds, const RunOptions& ro) {
  if (seeds.size() < 2) throw std::invalid_argument("ensemble needs at least two seeds");
  EnsembleResult er;
  json members = json::array();
  for (auto seed : seeds) {
    json c = cfg;
    c["seed"] = seed;
    RunOptions r = ro;
    if (!ro.out_dir.empty()) r.out_dir = (fs::path(ro.out_dir) / ("seed_" + std::to_string(seed))).string();
    try {
      const auto run = run_experiment(c, r);
      if (run.train.diverged) throw std::runtime_error(run.train.error);
      const double v = std::isnan(run.train.final_metric) ? run.train.final_loss.total : run.train.final_metric;
      er.seeds.push_back(seed);
      er.finals.push_back(v);
      members.push_back({{"seed", seed}, {"final", v}, {"final_loss", run.train.final_loss.total}});
    } catch (const std::exception& e) {
      er.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
      members.push_back({{"seed", seed}, {"error", e.what()}});
    }
  }
  er.mean = mean_of(er.finals);
  double var = 0.0;
  for (double v : er.finals) var += (v - er.mean) * (v - er.mean);
  er.stdev = er.finals.size() > 1 ? std::sqrt(var / static_cast<double>(er.finals.size() - 1)) : kNaN;
  er.summary = {{"schema_version", kSummarySchemaVersion},
                {"experiment", cfg.at("experiment")},
                {"members", members},
                {"mean", er.mean},
                {"stdev", er.stdev},
                {"survivors", er.finals.size()},
                {"failures", er.failures}};
  if (!ro.out_dir.empty()) {
    fs::create_directories(ro.out_dir);
    std::ofstream os(fs::path(ro.out_dir) / "ensemble.json");
    os << std::setw(2) << er.summary << '\n';
  }
  return er;
}

json run_analyze(const AnalyzeOptions& opt) {
  json s;
  s["schema_version"] = kSummarySchemaVersion;
  std::ofstream eig, ratio, bounds;
  const bool files = !opt.out_dir.empty();
  if (files) {
    fs::create_directories(opt.out_dir);
    const fs::path d(opt.out_dir);
    eig.open(d / "eigen_report.csv");
    ratio.open(d / "ratio_scaling.csv");
    bounds.open(d / "bounds.csv");
    eig << "r,n,index,eigenvalue,sign_changes\n";
    ratio << "r,n,ratio\n";
    bounds << "kind,r,n,value,bound,holds\n";
  }
  json orders = json::array();
  for (int r : opt.orders) {
    json entry;
    entry["r"] = r;
    json ratios = json::array();
    for (int n : opt.sizes) {
      const auto rep = analysis::eigen_report(r, n);
      ratios.push_back({{"n", n}, {"ratio", rep.ratio}, {"spearman", rep.spearman}});
      if (files) {
        for (std::size_t k = 0; k < rep.eigenvalues.size(); ++k)
          eig << r << ',' << n << ',' << k << ',' << fmt(rep.eigenvalues[k]) << ',' << rep.sign_changes[k] << '\n';
        ratio << r << ',' << n << ',' << fmt(rep.ratio) << '\n';
      }
      const auto sb = analysis::singular_bound_check(r, n);
      if (files) bounds << "sigma_max," << r << ',' << n << ',' << fmt(sb.sigma_max) << ',' << fmt(sb.bound) << ','
                        << (sb.holds ? 1 : 0) << '\n';
    }
    entry["ratios"] = ratios;
    if (opt.sizes.size() >= 2) entry["slope"] = analysis::ratio_scaling(r, opt.sizes);
    entry["fd_stencil_deviation"] = analysis::fd_stencil_check(r, 12, 1.0 / 12.0);

    std::mt19937_64 rng(opt.seed + static_cast<std::uint64_t>(r));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    model::KanSpec spec;
    spec.widths = {2, 5, 1};
    spec.order = r;
    spec.intervals = 8;
    auto net = model::make_kan(spec, rng);
    std::vector<std::vector<double>> batch(32);
    for (auto& x : batch) x = {u(rng), u(rng)};
    const auto nb = analysis::ntk_bound_check(net, batch);
    entry["ntk"] = {{"rho_spline", nb.rho_spline}, {"rho_relu", nb.rho_relu}, {"ratio", nb.ratio}, {"holds", nb.holds}};
    if (files) bounds << "ntk_ratio," << r << ",8," << fmt(nb.ratio) << ",4," << (nb.holds ? 1 : 0) << '\n';
    orders.push_back(entry);
  }
  s["orders"] = orders;
  if (files) {
    std::ofstream os(fs::path(opt.out_dir) / "analyze.json");
    os << std::setw(2) << s << '\n';
  }
  return s;
}

std::vector<BenchRow> bench_forward(const BenchOptions& opt) {
  if (opt.reps < 1 || opt.batch < 1 || opt.width < 1 || opt.layers < 1) {
    throw std::invalid_argument("bench: reps, batch, width and layers must be positive");
  }
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.1);
  using clock = std::chrono::steady_clock;
  for (int n : opt.sizes) {
    for (int r : opt.orders) {
      const auto knots = basis::make_uniform_knots(-1.0, 1.0, n, r);
      model::InputMap im;
      im.kind = model::NormKind::Affine;
      im.lo.assign(static_cast<std::size_t>(opt.width), -1.0);
      im.hi.assign(static_cast<std::size_t>(opt.width), 1.0);
      std::vector<model::KanLayer> layers;
      std::vector<std::vector<double>> inputs;
      for (int l = 0; l < opt.layers; ++l) {
        model::KanLayer L(opt.width, opt.width, knots, model::BasisMode::Spline, im);
        for (auto& w : L.weights) w = g(rng);
        layers.push_back(std::move(L));
        std::vector<double> x(static_cast<std::size_t>(opt.batch) * opt.width);
        for (auto& v : x) v = u(rng);
        inputs.push_back(std::move(x));
      }
      model::LayerPassBuffers buf;
      auto pass = [&](bool fast) {
        const auto t0 = clock::now();
        for (int l = 0; l < opt.layers; ++l) model::layer_pass(layers[l], inputs[l], opt.batch, fast, buf);
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      };
      pass(true);
      pass(false);
      // alternate the two paths so drifts in machine load hit both alike
      std::vector<double> fast_ms, slow_ms;
      for (int rep = 0; rep < opt.reps; ++rep) {
        fast_ms.push_back(pass(true));
        slow_ms.push_back(pass(false));
      }
      auto stats = [](const std::vector<double>& ms) {
        const double m = mean_of(ms);
        double v = 0.0;
        for (double x : ms) v += (x - m) * (x - m);
        return std::pair<double, double>{m, ms.size() > 1 ? std::sqrt(v / (ms.size() - 1)) : 0.0};
      };
      BenchRow row;
      row.r = r;
      row.n = n;
      std::tie(row.fast_mean_ms, row.fast_std_ms) = stats(fast_ms);
      std::tie(row.slow_mean_ms, row.slow_std_ms) = stats(slow_ms);
      row.speedup = row.slow_mean_ms / row.fast_mean_ms;
      row.flop_model = (static_cast<double>(n) * r + r * r) / (n + r);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "r,n,fast_mean_ms,fast_std_ms,coxdeboor_mean_ms,coxdeboor_std_ms,speedup,flop_model\n";
  for (const auto& b : rows) {
    os << b.r << ',' << b.n << ',' << fmt(b.fast_mean_ms) << ',' << fmt(b.fast_std_ms) << ',' << fmt(b.slow_mean_ms)
       << ',' << fmt(b.slow_std_ms) << ',' << fmt(b.speedup) << ',' << fmt(b.flop_model) << '\n';
  }
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("'" + s + "' is not a comma-separated integer list");
    }
    if (used != item.size()) throw std::invalid_argument("'" + s + "' is not a comma-separated integer list");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

}  // namespace mlkan::experiment
