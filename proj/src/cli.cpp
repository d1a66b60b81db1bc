#include "dyntx/cli.hpp"

#include "dyntx/assumptions.hpp"
#include "dyntx/bounds.hpp"
#include "dyntx/designs.hpp"
#include "dyntx/errors.hpp"
#include "dyntx/inference.hpp"
#include "dyntx/io.hpp"
#include "dyntx/regimes.hpp"
#include "dyntx/simulate.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace dyntx {

namespace {

struct Flags {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string backend;
  std::string data;
  bool trace = false;
};

// Everything a command needs after the config is read and flags applied.
struct Run {
  Flags flags;
  json config;
  std::string config_text;
  std::string hash;
  std::uint64_t seed = 1;
  Backend backend = Backend::Exact;
  StructuralModel model;
  bool has_model = false;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Line of the first occurrence of "key" in the raw config text, or 0.
std::size_t key_line(const std::string& text, const std::string& key) {
  auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n'));
}

// Attaches the config line to a key-naming error message.
[[noreturn]] void rethrow_with_line(const ConfigError& e, const std::string& text) {
  std::string msg = e.what();
  auto q1 = msg.find('\'');
  auto q2 = q1 == std::string::npos ? q1 : msg.find('\'', q1 + 1);
  if (q2 != std::string::npos) {
    std::string path = msg.substr(q1 + 1, q2 - q1 - 1);
    std::string leaf = path.substr(path.find_last_of('.') + 1);
    leaf = leaf.substr(0, leaf.find('['));
    if (std::size_t line = key_line(text, leaf)) msg += " (config line " + std::to_string(line) + ")";
  }
  throw ConfigError(msg);
}

Backend parse_backend(const std::string& s) {
  if (s == "exact") return Backend::Exact;
  if (s == "mc") return Backend::McPopulation;
  if (s == "empirical") return Backend::Empirical;
  throw ConfigError("'backend' must be exact, mc or empirical, got '" + s + "'");
}

std::string resolve(const std::string& path, const std::string& config_path) {
  std::filesystem::path p(path);
  if (p.is_absolute() || config_path.empty() || std::filesystem::exists(p)) return path;
  return (std::filesystem::path(config_path).parent_path() / p).string();
}

StructuralModel design_model(const json& d) {
  std::string name = d.is_string() ? d.get<std::string>() : d.value("name", std::string());
  double rho_uv = d.is_object() ? d.value("rho_uv", 0.5) : 0.5;
  double rho_t = d.is_object() ? d.value("rho_t", 0.3) : 0.3;
  if (name == "dgp_a") return dgp_a(rho_uv, rho_t);
  if (name == "dgp_b") return dgp_b(dgp_a(rho_uv, rho_t));
  throw ConfigError("'design' must be dgp_a or dgp_b");
}

std::optional<StructuralModel> model_of(const json& c, const std::string& config_path) {
  if (c.contains("horizon")) return model_from_json(c);
  if (c.contains("model")) return model_from_json(c.at("model"));
  if (c.contains("model_file")) return model_from_json(read_json_file(resolve(c.at("model_file"), config_path)));
  if (c.contains("design")) return design_model(c.at("design"));
  return std::nullopt;
}

Run prepare(const Flags& f) {
  Run run;
  run.flags = f;
  if (f.config_path.empty()) throw ConfigError("--config is required");
  run.config_text = slurp(f.config_path);
  run.config = parse_json_text(run.config_text, f.config_path);
  if (!run.config.is_object()) throw ConfigError("config must be a JSON object");
  json& c = run.config;
  if (f.seed) c["seed"] = *f.seed;
  if (!f.backend.empty()) c["backend"] = f.backend;
  if (!f.data.empty()) c["data"] = f.data;
  try {
    run.seed = c.value("seed", std::uint64_t{1});
    run.backend = parse_backend(c.value("backend", std::string("exact")));
    if (auto m = model_of(c, f.config_path)) {
      run.model = *m;
      run.has_model = true;
    }
  } catch (const ConfigError& e) {
    rethrow_with_line(e, run.config_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  run.hash = config_hash(c);
  return run;
}

const StructuralModel& need_model(const Run& run) {
  if (!run.has_model) throw ConfigError("config needs a model: 'model', 'model_file', 'design' or a top-level model");
  return run.model;
}

std::vector<int> grid_sizes(const Evaluator& ev) {
  std::vector<int> K;
  for (int t = 1; t <= ev.horizon(); ++t) K.push_back(ev.grid_size(t));
  return K;
}

std::vector<int> grid_sizes(const StructuralModel& m) {
  std::vector<int> K;
  for (int t = 1; t <= m.T; ++t) K.push_back(m.K(t));
  return K;
}

json section(const Run& run, const std::string& key) {
  return run.config.contains(key) ? run.config.at(key) : json::object();
}

Tolerances tolerances_of(const Run& run) {
  Tolerances t;
  json j = section(run, "tolerances");
  t.h = j.value("h", t.h);
  t.relevance = j.value("relevance", t.relevance);
  t.spread_factor = j.value("spread_factor", t.spread_factor);
  t.denominator_floor = j.value("denominator_floor", t.denominator_floor);
  for (double v : {t.spread_factor, t.denominator_floor})
    if (!(v > 0.0)) throw ConfigError("'tolerances' must be positive");
  return t;
}

PanelData load_or_simulate(const Run& run) {
  if (run.config.contains("data")) return read_panel_csv(resolve(run.config.at("data"), run.flags.config_path));
  json ev = section(run, "evaluator");
  std::size_t n = ev.value("n", std::size_t{100000});
  return simulate_panel(need_model(run), n, run.seed, run.config.value("w0", 0));
}

double empirical_floor(const Run& run) { return section(run, "evaluator").value("min_count", 1.0); }

struct EvalBox {
  std::unique_ptr<Evaluator> ev;
  json meta;
};

EvalBox make_evaluator(const Run& run, const PanelData* panel = nullptr) {
  json e = section(run, "evaluator");
  EvalBox box;
  box.meta["backend"] = backend_name(run.backend);
  switch (run.backend) {
    case Backend::Exact: {
      int q = e.value("quad_order", 16);
      box.ev = std::make_unique<ExactEvaluator>(need_model(run), q);
      box.meta["quad_order"] = q;
      break;
    }
    case Backend::McPopulation: {
      std::size_t draws = e.value("draws", std::size_t{1000000});
      double floor = e.value("min_count", 200.0);
      box.ev = std::make_unique<McEvaluator>(need_model(run), draws, run.seed, floor);
      box.meta["draws"] = draws;
      box.meta["min_count"] = floor;
      box.meta["seed"] = run.seed;
      break;
    }
    case Backend::Empirical: {
      PanelData own;
      if (!panel) {
        own = load_or_simulate(run);
        panel = &own;
      }
      std::vector<int> K = run.has_model ? grid_sizes(run.model) : std::vector<int>{};
      double floor = empirical_floor(run);
      box.ev = std::make_unique<EmpiricalEvaluator>(*panel, floor, K);
      box.meta["n"] = panel->n;
      box.meta["min_count"] = floor;
      box.meta["data"] = run.config.contains("data") ? run.config.at("data").get<std::string>() : "simulated";
      break;
    }
  }
  return box;
}

Bits x_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("'query.x' must be an array of grid indices");
  Bits x;
  for (const auto& v : j) x.push_back(v.get<int>());
  return x;
}

Bits y_minus_from_json(const json& j) {
  Bits y;
  for (char c : j.get<std::string>()) {
    if (c == '*' || c == '.')
      y.push_back(-1);
    else if (c == '0' || c == '1')
      y.push_back(c - '0');
    else
      throw ConfigError("'query.y_minus' takes 0, 1 or * per period");
  }
  return y;
}

std::vector<Regime> regimes_of(const json& q, const StructuralModel* m, bool irreversible_d) {
  std::vector<Regime> out;
  if (q.contains("regimes")) {
    for (const auto& r : q.at("regimes")) out.push_back(regime_from_json(r));
  } else if (q.contains("regime")) {
    out.push_back(regime_from_json(q.at("regime")));
  } else if (m) {
    out = enumerate_regimes(m->T, irreversible_d);
  }
  if (out.empty()) throw ConfigError("'query.regime' is required");
  return out;
}

std::vector<Bits> xs_of(const json& q, const std::vector<int>& K) {
  std::vector<Bits> out;
  if (!q.contains("x")) {
    // default: the middle grid point in every period
    Bits x;
    for (int k : K) x.push_back(k / 2);
    return {x};
  }
  const json& x = q.at("x");
  if (x.is_array() && !x.empty() && x.front().is_array())
    for (const auto& v : x) out.push_back(x_from_json(v));
  else
    out.push_back(x_from_json(x));
  return out;
}

IdentifyOptions identify_options(const Run& run, const json& q) {
  IdentifyOptions o;
  o.tol = tolerances_of(run);
  o.irreversible_y = q.value("irreversible_y", run.has_model && run.model.irreversible_y);
  o.pool_matching = q.value("pool_matching", o.pool_matching);
  o.skip_sparse_paths = q.value("skip_sparse_paths", o.skip_sparse_paths);
  return o;
}

FunctionalSpec functional_of(const Run& run, const Evaluator& ev) {
  json q = section(run, "query");
  FunctionalSpec f;
  f.kind = parse_functional(q.value("functional", std::string("arsf")));
  bool irr_d = q.value("irreversible_d", run.has_model && run.model.irreversible_d);
  f.identify = identify_options(run, q);
  f.horizon = q.value("horizon", -1);
  f.x = xs_of(q, grid_sizes(ev)).front();
  f.min_count = empirical_floor(run);
  if (f.kind == FunctionalSpec::Ranking) {
    f.regimes = regimes_of(q, run.has_model ? &run.model : nullptr, irr_d);
    f.objective = objective_from_json(q.value("objective", json::object()));
    f.rank.identify = f.identify;
    f.rank.allow_bounds = q.value("allow_bounds", false);
    f.rank.irreversible_d = irr_d;
    return f;
  }
  if (f.kind != FunctionalSpec::PeriodAte) f.regime = regimes_of(q, nullptr, irr_d).front();
  if (f.kind == FunctionalSpec::Ate || f.kind == FunctionalSpec::TransitionAte) {
    if (!q.contains("regime_b")) throw ConfigError("'query.regime_b' is required for " + functional_name(f.kind));
    f.regime_b = regime_from_json(q.at("regime_b"));
  }
  if (f.kind == FunctionalSpec::TransitionAte) {
    if (!q.contains("y_minus")) throw ConfigError("'query.y_minus' is required for transition_ate");
    f.y_minus = y_minus_from_json(q.at("y_minus"));
  }
  f.y_prev = q.value("y_prev", 0);
  return f;
}

json stamp(const Run& run, json j) {
  j["config_hash"] = run.hash;
  j["seed"] = run.seed;
  return j;
}

void emit(const Run& run, const std::string& text, std::ostream& out) {
  if (run.flags.out.empty())
    out << text;
  else
    write_text_file(run.flags.out, text);
}

void emit_json(const Run& run, const json& j, std::ostream& out) { emit(run, j.dump(2) + "\n", out); }

int cmd_validate(const Run& run, std::ostream& out) {
  auto box = make_evaluator(run);
  AssumptionReport rep = assess_assumptions(*box.ev, run.has_model ? &run.model : nullptr, tolerances_of(run));
  json j = report_to_json(rep);
  j["evaluator"] = box.meta;
  emit_json(run, stamp(run, j), out);
  return rep.all_pass() ? 0 : 2;
}

int cmd_simulate(const Run& run, std::ostream& out) {
  json s = section(run, "simulate");
  std::size_t n = s.value("n", std::size_t{10000});
  const StructuralModel& m = need_model(run);
  PanelData p;
  if (s.contains("strata")) {
    // one block of rows per stratum label, seeds offset by the label
    for (const auto& w : s.at("strata")) {
      int w0 = w.get<int>();
      PanelData part = simulate_panel(m, n, run.seed + static_cast<std::uint64_t>(w0), w0);
      if (p.n == 0) {
        p = part;
        continue;
      }
      p.n += part.n;
      for (auto [dst, src] : {std::pair{&p.y, &part.y}, {&p.d, &part.d}, {&p.x, &part.x}, {&p.z, &part.z},
                              {&p.w0, &part.w0}})
        dst->insert(dst->end(), src->begin(), src->end());
    }
  } else {
    p = simulate_panel(m, n, run.seed, run.config.value("w0", 0));
  }
  emit(run, panel_to_csv(p), out);
  return 0;
}

int cmd_oracle(const Run& run, std::ostream& out) {
  const StructuralModel& m = need_model(run);
  json q = section(run, "query");
  std::vector<Regime> regimes = regimes_of(q, &m, m.irreversible_d);
  std::vector<Bits> xs = xs_of(q, grid_sizes(m));
  std::size_t draws = section(run, "oracle").value("draws", std::size_t{1000000});
  json records = json::array();
  std::optional<ExactOracle> exact;
  if (run.backend == Backend::Exact) exact.emplace(m, section(run, "evaluator").value("quad_order", 16));
  else if (run.backend != Backend::McPopulation) throw ConfigError("oracle runs on the exact or mc backend");
  for (const auto& r : regimes)
    for (const auto& x : xs) {
      if (exact) {
        for (int t = 1; t <= m.T; ++t)
          records.push_back({{"regime", regime_to_json(r)}, {"x", x}, {"t", t}, {"value", exact->arsf(r, x, t)},
                             {"std_error", 0.0}, {"draws", 0}, {"seed", run.seed}});
      } else {
        OracleResult o = oracle_arsf(m, r, x, draws, run.seed);
        for (int t = 1; t <= m.T; ++t)
          records.push_back({{"regime", regime_to_json(r)}, {"x", x}, {"t", t}, {"value", o.value[t - 1]},
                             {"std_error", o.std_error[t - 1]}, {"draws", o.draws}, {"seed", o.seed}});
      }
    }
  emit_json(run, stamp(run, {{"backend", backend_name(run.backend)}, {"records", records}}), out);
  return 0;
}

json single_or_list(json list) { return list.size() == 1 ? list.front() : json{{"results", list}}; }

int cmd_identify(const Run& run, std::ostream& out) {
  auto box = make_evaluator(run);
  FunctionalSpec f = functional_of(run, *box.ev);
  json q = section(run, "query");
  json results = json::array();
  if (f.kind == FunctionalSpec::Arsf) {
    IdentifyOptions o = f.identify;
    o.fallback_bounds = q.value("allow_bounds", false);
    for (const auto& r : regimes_of(q, nullptr, false))
      for (const auto& x : xs_of(q, grid_sizes(*box.ev))) {
        ArsfResult a = identify_arsf(*box.ev, r, x, o, f.horizon);
        json j = arsf_to_json(a, run.flags.trace);
        if (a.status != Status::Point) {
          j.erase("value");
          j["interval"] = {a.lo, a.hi};
        }
        results.push_back(j);
      }
  } else if (f.kind == FunctionalSpec::Ranking) {
    results.push_back(ranking_to_json(rank_regimes(*box.ev, f.objective, 0, f.regimes, f.x, f.rank)));
  } else {
    results.push_back({{"functional", functional_name(f.kind)}, {"x", f.x}, {"value", evaluate_scalar(*box.ev, f)},
                       {"status", "point"}});
  }
  json j = single_or_list(results);
  j["evaluator"] = box.meta;
  emit_json(run, stamp(run, j), out);
  return 0;
}

int cmd_bounds(const Run& run, std::ostream& out) {
  auto box = make_evaluator(run);
  json q = section(run, "query");
  IdentifyOptions o = identify_options(run, q);
  int horizon = q.value("horizon", -1);
  json results = json::array();
  for (const auto& r : regimes_of(q, nullptr, false))
    for (const auto& x : xs_of(q, grid_sizes(*box.ev))) results.push_back(bounds_to_json(bound_arsf(*box.ev, r, x, o, horizon)));
  json j = single_or_list(results);
  j["evaluator"] = box.meta;
  emit_json(run, stamp(run, j), out);
  return 0;
}

int cmd_optimize(const Run& run, std::ostream& out) {
  json q = section(run, "query");
  json strata = json::array();
  auto rank_one = [&](const Evaluator& ev, int w0, const std::vector<Regime>& regimes, bool irr_d) {
    ObjectiveSpec obj = objective_from_json(q.value("objective", json::object()));
    RankOptions ro;
    ro.identify = identify_options(run, q);
    ro.allow_bounds = q.value("allow_bounds", false);
    ro.irreversible_d = irr_d;
    for (const auto& x : xs_of(q, grid_sizes(ev))) strata.push_back(ranking_to_json(rank_regimes(ev, obj, w0, regimes, x, ro)));
  };
  bool irr_d = q.value("irreversible_d", run.has_model && run.model.irreversible_d);
  json meta;
  if (run.backend == Backend::Empirical) {
    PanelData all = load_or_simulate(run);
    for (int w0 : all.strata()) {
      PanelData part = all.subset_w0(w0);
      auto box = make_evaluator(run, &part);
      meta = box.meta;
      rank_one(*box.ev, w0, regimes_of(q, run.has_model ? &run.model : nullptr, irr_d), irr_d);
    }
  } else if (run.config.contains("strata")) {
    // population backends: one model per stratum label
    for (const auto& s : run.config.at("strata")) {
      Run sub = run;
      auto m = model_of(s, run.flags.config_path);
      if (!m) throw ConfigError("'strata' entries need a model or design");
      sub.model = *m;
      sub.has_model = true;
      auto box = make_evaluator(sub);
      meta = box.meta;
      rank_one(*box.ev, s.value("w0", 0), regimes_of(q, &sub.model, irr_d), irr_d);
    }
  } else {
    auto box = make_evaluator(run);
    meta = box.meta;
    rank_one(*box.ev, run.config.value("w0", 0), regimes_of(q, &need_model(run), irr_d), irr_d);
  }
  emit_json(run, stamp(run, {{"strata", strata}, {"evaluator", meta}}), out);
  return 0;
}

int cmd_estimate(const Run& run, std::ostream& out) {
  if (!run.config.contains("data")) throw ConfigError("estimate needs a panel: 'data' or --data");
  PanelData panel = read_panel_csv(resolve(run.config.at("data"), run.flags.config_path));
  EmpiricalEvaluator shape(panel, 1.0);
  FunctionalSpec f = functional_of(run, shape);
  json j;
  json b = section(run, "bootstrap");
  j["functional"] = functional_name(f.kind);
  if (f.kind == FunctionalSpec::Ranking) {
    EstimateResult e = estimate(panel, f);
    j["ranking"] = ranking_to_json(*e.ranking);
    j["ci"] = nullptr;
    j["B"] = 0;
    j["failures"] = 0;
  } else if (b.contains("B")) {
    BootstrapResult r = bootstrap(panel, f, b.at("B").get<int>(), run.seed, b.value("alpha", 0.05));
    j = bootstrap_to_json(r);
  } else {
    EstimateResult e = estimate(panel, f);
    j["estimate"] = e.value;
    if (e.arsf) j["status"] = status_name(e.arsf->status);
    j["ci"] = nullptr;
    j["B"] = 0;
    j["failures"] = 0;
  }
  j["x"] = f.x;
  j["n"] = panel.n;
  j["min_count"] = f.min_count;
  emit_json(run, stamp(run, j), out);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic treatment effects under dynamic selection", "dyntx"};
  app.require_subcommand(1);
  Flags f;
  const char* names[] = {"validate", "simulate", "oracle", "identify", "bounds", "optimize", "estimate"};
  const char* help[] = {"check model and identifying assumptions",
                        "write a simulated panel as CSV",
                        "forced-regime outcome means",
                        "point identification of regime functionals",
                        "outcome-mean bounds when matching fails",
                        "rank regimes per stratum",
                        "estimate a functional from a panel CSV"};
  for (int i = 0; i < 7; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", f.config_path, "JSON config")->required();
    sub->add_option("--seed", f.seed, "random seed");
    sub->add_option("--out", f.out, "output path (stdout if omitted)");
    sub->add_option("--backend", f.backend, "exact|mc|empirical")
        ->check(CLI::IsMember({"exact", "mc", "empirical"}));
    sub->add_option("--data", f.data, "panel CSV");
    sub->add_flag("--trace", f.trace, "include the recursion trace");
    sub->callback([&f, i, &names] { f.command = names[i]; });
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    Run run = prepare(f);
    if (f.command == "validate") return cmd_validate(run, out);
    if (f.command == "simulate") return cmd_simulate(run, out);
    if (f.command == "oracle") return cmd_oracle(run, out);
    if (f.command == "identify") return cmd_identify(run, out);
    if (f.command == "bounds") return cmd_bounds(run, out);
    if (f.command == "optimize") return cmd_optimize(run, out);
    if (f.command == "estimate") return cmd_estimate(run, out);
  } catch (const Error& e) {
    err << "error [" << e.code() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace dyntx
