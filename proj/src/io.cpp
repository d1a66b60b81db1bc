#include "dyntx/io.hpp"

#include "dyntx/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dyntx {

namespace {

const json& need(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing key '" + where + "." + key + "'");
  return j.at(key);
}

template <class T>
T as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value at '" + where + "': " + e.what());
  }
}

std::vector<double> number_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError("'" + where + "' must be an array");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(as<double>(j[i], where + "[" + std::to_string(i) + "]"));
  return v;
}

std::string bits_key(const json& j, const std::string& key, const std::string& where, std::size_t len) {
  std::string s = j.contains(key) ? as<std::string>(j.at(key), where + "." + key) : std::string();
  if (s.size() != len)
    throw ConfigError("'" + where + "." + key + "' must have " + std::to_string(len) + " bits, got '" + s + "'");
  bits_from_string(s);
  return s;
}

}  // namespace

double threshold_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s == "+inf" || s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ConfigError("threshold at '" + where + "' must be a number, \"+inf\" or \"-inf\"");
}

json threshold_to_json(double v) {
  if (v == kInf) return "+inf";
  if (v == -kInf) return "-inf";
  return v;
}

StructuralModel model_from_json(const json& j) {
  const std::string w = "model";
  int T = as<int>(need(j, "horizon", w), w + ".horizon");
  if (T < 1 || T > kMaxHorizon) throw ConfigError("'model.horizon' must lie in [1, 6]");
  const json& grid = need(j, "x_grid", w);
  if (!grid.is_array() || static_cast<int>(grid.size()) != T)
    throw ConfigError("'model.x_grid' needs one list per period");
  std::vector<std::vector<double>> g;
  for (int t = 0; t < T; ++t) g.push_back(number_list(grid[t], w + ".x_grid[" + std::to_string(t) + "]"));
  StructuralModel m = StructuralModel::shaped(g);

  const json& mu = need(j, "mu_table", w);
  const json& pi = need(j, "pi_table", w);
  if (!mu.is_array() || static_cast<int>(mu.size()) != T) throw ConfigError("'model.mu_table' needs T period lists");
  if (!pi.is_array() || static_cast<int>(pi.size()) != T) throw ConfigError("'model.pi_table' needs T period lists");
  for (int t = 1; t <= T; ++t) {
    const std::string mw = w + ".mu_table[" + std::to_string(t - 1) + "]";
    std::vector<char> seen((std::size_t{1} << (2 * t - 1)), 0);
    for (std::size_t e = 0; e < mu[t - 1].size(); ++e) {
      const json& row = mu[t - 1][e];
      const std::string rw = mw + "[" + std::to_string(e) + "]";
      std::uint32_t y = pack(bits_from_string(bits_key(row, "y", rw, t - 1)));
      std::uint32_t d = pack(bits_from_string(bits_key(row, "d", rw, t)));
      const json& vals = need(row, "values", rw);
      if (!vals.is_array() || static_cast<int>(vals.size()) != m.K(t))
        throw ConfigError("'" + rw + ".values' needs one threshold per grid point");
      for (int k = 0; k < m.K(t); ++k)
        m.mu[t - 1][m.mu_index(t, y, d, k)] = threshold_from_json(vals[k], rw + ".values[" + std::to_string(k) + "]");
      seen[(y << t) | d] = 1;
    }
    for (std::size_t c = 0; c < seen.size(); ++c)
      if (!seen[c])
        throw ConfigError("'" + mw + "' misses y=" + bits_to_string(unpack(c >> t, t - 1)) +
                          " d=" + bits_to_string(unpack(c & ((1u << t) - 1), t)));

    const std::string pw = w + ".pi_table[" + std::to_string(t - 1) + "]";
    std::vector<char> pseen(std::size_t{1} << (2 * t - 2), 0);
    for (std::size_t e = 0; e < pi[t - 1].size(); ++e) {
      const json& row = pi[t - 1][e];
      const std::string rw = pw + "[" + std::to_string(e) + "]";
      std::uint32_t y = pack(bits_from_string(bits_key(row, "y", rw, t - 1)));
      std::uint32_t d = pack(bits_from_string(bits_key(row, "d", rw, t - 1)));
      const json& vals = need(row, "values", rw);
      if (!vals.is_array() || vals.size() != 2) throw ConfigError("'" + rw + ".values' needs [z=0, z=1]");
      for (int z = 0; z < 2; ++z)
        m.pi[t - 1][m.pi_index(t, y, d, z)] = threshold_from_json(vals[z], rw + ".values[" + std::to_string(z) + "]");
      pseen[(y << (t - 1)) | d] = 1;
    }
    for (std::size_t c = 0; c < pseen.size(); ++c)
      if (!pseen[c])
        throw ConfigError("'" + pw + "' misses y=" + bits_to_string(unpack(c >> (t - 1), t - 1)) +
                          " d=" + bits_to_string(unpack(c & ((1u << (t - 1)) - 1), t - 1)));
  }

  const json& lat = need(j, "latent", w);
  std::string mode = as<std::string>(need(lat, "mode", w + ".latent"), w + ".latent.mode");
  if (mode == "rank_invariant") {
    const json& c = need(lat, "corr", w + ".latent");
    if (!c.is_array() || static_cast<int>(c.size()) != 2 * T) throw ConfigError("'model.latent.corr' must be 2T x 2T");
    m.latent.corr.resize(2 * T, 2 * T);
    for (int r = 0; r < 2 * T; ++r) {
      auto row = number_list(c[r], w + ".latent.corr[" + std::to_string(r) + "]");
      if (static_cast<int>(row.size()) != 2 * T) throw ConfigError("'model.latent.corr' must be 2T x 2T");
      for (int k = 0; k < 2 * T; ++k) m.latent.corr(r, k) = row[k];
    }
  } else if (mode == "rs_general") {
    m.latent.mode = LatentMode::RSGeneral;
    m.latent.a = number_list(need(lat, "a", w + ".latent"), w + ".latent.a");
    m.latent.b = number_list(need(lat, "b", w + ".latent"), w + ".latent.b");
    m.latent.c = number_list(need(lat, "c", w + ".latent"), w + ".latent.c");
    m.latent.e = number_list(need(lat, "e", w + ".latent"), w + ".latent.e");
  } else {
    throw ConfigError("'model.latent.mode' must be rank_invariant or rs_general");
  }

  m.z_law = number_list(need(j, "z_law", w), w + ".z_law");
  const json& xl = need(j, "x_law", w);
  if (!xl.is_array()) throw ConfigError("'model.x_law' must be an array");
  m.x_law.clear();
  for (std::size_t t = 0; t < xl.size(); ++t) m.x_law.push_back(number_list(xl[t], w + ".x_law[" + std::to_string(t) + "]"));
  if (j.contains("irreversible_d")) m.irreversible_d = as<bool>(j.at("irreversible_d"), w + ".irreversible_d");
  if (j.contains("irreversible_y")) m.irreversible_y = as<bool>(j.at("irreversible_y"), w + ".irreversible_y");
  return m;
}

json model_to_json(const StructuralModel& m) {
  json j;
  j["horizon"] = m.T;
  j["x_grid"] = m.x_grid;
  json mu = json::array(), pi = json::array();
  for (int t = 1; t <= m.T; ++t) {
    json rows = json::array(), prows = json::array();
    for (std::uint32_t y = 0; y < (1u << (t - 1)); ++y) {
      for (std::uint32_t d = 0; d < (1u << t); ++d) {
        json vals = json::array();
        for (int k = 0; k < m.K(t); ++k) vals.push_back(threshold_to_json(m.mu_at(t, y, d, k)));
        rows.push_back({{"y", bits_to_string(unpack(y, t - 1))}, {"d", bits_to_string(unpack(d, t))}, {"values", vals}});
      }
      for (std::uint32_t d = 0; d < (1u << (t - 1)); ++d)
        prows.push_back({{"y", bits_to_string(unpack(y, t - 1))},
                         {"d", bits_to_string(unpack(d, t - 1))},
                         {"values", {threshold_to_json(m.pi_at(t, y, d, 0)), threshold_to_json(m.pi_at(t, y, d, 1))}}});
    }
    mu.push_back(rows);
    pi.push_back(prows);
  }
  j["mu_table"] = mu;
  j["pi_table"] = pi;
  if (m.latent.mode == LatentMode::RankInvariant) {
    json c = json::array();
    for (int r = 0; r < m.latent.corr.rows(); ++r) {
      json row = json::array();
      for (int k = 0; k < m.latent.corr.cols(); ++k) row.push_back(m.latent.corr(r, k));
      c.push_back(row);
    }
    j["latent"] = {{"mode", "rank_invariant"}, {"corr", c}};
  } else {
    j["latent"] = {{"mode", "rs_general"}, {"a", m.latent.a}, {"b", m.latent.b}, {"c", m.latent.c}, {"e", m.latent.e}};
  }
  j["z_law"] = m.z_law;
  j["x_law"] = m.x_law;
  j["irreversible_d"] = m.irreversible_d;
  j["irreversible_y"] = m.irreversible_y;
  return j;
}

Regime regime_from_json(const json& j) {
  if (j.is_string()) return Regime::parse(j.get<std::string>());
  if (j.is_object()) {
    std::string d = as<std::string>(need(j, "d", "regime"), "regime.d");
    std::string a = j.contains("active") ? as<std::string>(j.at("active"), "regime.active") : std::string();
    return Regime::parse(d, a);
  }
  throw ConfigError("a regime must be a bit string or {d, active}");
}

json regime_to_json(const Regime& r) {
  if (r.is_full()) return bits_to_string(r.d);
  return {{"d", bits_to_string(r.d)}, {"active", bits_to_string(r.active)}};
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": JSON parse error");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json trace_to_json(const std::vector<TraceNode>& trace) {
  json a = json::array();
  for (const auto& n : trace) {
    json j = {{"t", n.t},
              {"z", bits_to_string(n.z)},
              {"x", n.x},
              {"d", bits_to_string(n.d)},
              {"y", bits_to_string(n.y)},
              {"active", n.active},
              {"lo", n.lo},
              {"hi", n.hi}};
    if (n.active) {
      j["regime_d"] = n.r;
      j["w_consistent"] = n.w_consistent;
      j["w_flipped"] = n.w_flipped;
      j["y_consistent"] = n.y_consistent;
      j["y_flipped"] = n.y_flipped;
      if (n.substituted) {
        j["matched_x"] = n.matched_x;
        j["residual"] = n.residual;
        j["spread"] = n.spread;
      }
      if (n.bounded) {
        j["lower_x"] = n.lower_x;
        j["upper_x"] = n.upper_x;
      }
    } else {
      j["observed"] = n.observed;
    }
    a.push_back(j);
  }
  return a;
}

json arsf_to_json(const ArsfResult& r, bool with_trace) {
  json j = {{"regime", regime_to_json(r.regime)},
            {"x", r.x},
            {"status", status_name(r.status)},
            {"value", r.value},
            {"lo", r.lo},
            {"hi", r.hi}};
  json agg = json::array();
  for (const auto& [z, w] : r.aggregation) agg.push_back({{"z", bits_to_string(z)}, {"weight", w}});
  j["aggregation"] = agg;
  if (!r.skipped.empty()) {
    json s = json::array();
    for (const auto& [z, why] : r.skipped) s.push_back({{"z", bits_to_string(z)}, {"reason", why}});
    j["skipped_paths"] = s;
  }
  if (with_trace) j["trace"] = trace_to_json(r.trace);
  return j;
}

json bounds_to_json(const BoundsResult& b) {
  json ledger = json::array();
  for (const auto& n : b.ledger) {
    ledger.push_back({{"t", n.t},
                      {"z", bits_to_string(n.z)},
                      {"x", n.x},
                      {"d", bits_to_string(n.d)},
                      {"y", bits_to_string(n.y)},
                      {"lower_x", n.lower_x},
                      {"lower_side", n.lower_x >= 0 ? "substituted" : "trivial"},
                      {"lower_sign", n.lower_sign},
                      {"upper_x", n.upper_x},
                      {"upper_side", n.upper_x >= 0 ? "substituted" : "trivial"},
                      {"upper_sign", n.upper_sign}});
  }
  return {{"regime", regime_to_json(b.regime)},
          {"x", b.x},
          {"status", status_name(b.status)},
          {"lo", b.lo},
          {"hi", b.hi},
          {"ledger", ledger}};
}

json effect_to_json(const Effect& e) {
  return {{"status", status_name(e.status)}, {"value", e.value}, {"lo", e.lo}, {"hi", e.hi}};
}

json objective_to_json(const ObjectiveSpec& o) {
  json j = {{"kind", objective_kind_name(o.kind)}};
  if (o.kind == ObjectiveSpec::TerminalARSF) {
    j["w"] = o.w;
    j["cost"] = o.cost;
  } else {
    j["weights"] = o.weights;
    j["costs"] = o.costs;
  }
  return j;
}

ObjectiveSpec objective_from_json(const json& j) {
  ObjectiveSpec o;
  std::string kind = j.contains("kind") ? as<std::string>(j.at("kind"), "objective.kind") : "terminal_arsf";
  if (kind == "terminal_arsf") {
    o.kind = ObjectiveSpec::TerminalARSF;
    if (j.contains("w")) o.w = as<double>(j.at("w"), "objective.w");
    if (j.contains("cost")) o.cost = as<double>(j.at("cost"), "objective.cost");
  } else if (kind == "weighted_sum") {
    o.kind = ObjectiveSpec::WeightedSum;
    o.weights = number_list(need(j, "weights", "objective"), "objective.weights");
    o.costs = number_list(need(j, "costs", "objective"), "objective.costs");
  } else {
    throw ConfigError("'objective.kind' must be terminal_arsf or weighted_sum");
  }
  return o;
}

json ranking_to_json(const RegimeRanking& r) {
  json table = json::array();
  for (const auto& e : r.entries) {
    json row = {{"regime", regime_to_json(e.regime)}, {"status", status_name(e.status)}};
    if (e.status == Status::Point)
      row["value"] = e.value;
    else
      row["interval"] = {e.lo, e.hi};
    table.push_back(row);
  }
  json am = json::array(), ex = json::array();
  for (const auto& g : r.argmax) am.push_back(regime_to_json(g));
  for (const auto& g : r.excluded) ex.push_back(regime_to_json(g));
  return {{"w0", r.w0},
          {"x", r.x},
          {"objective", objective_to_json(r.objective)},
          {"table", table},
          {"argmax", am},
          {"excluded", ex},
          {"status", r.outcome == RegimeRanking::Decided ? "decided" : "inconclusive"}};
}

json report_to_json(const AssumptionReport& r) {
  json viol = json::array();
  for (const auto& v : r.model_violations) viol.push_back({{"code", v.code}, {"detail", v.detail}});
  json rel = json::array();
  for (const auto& e : r.relevance)
    rel.push_back({{"t", e.history.t},
                   {"history", e.history.str()},
                   {"relevant", e.result.relevant},
                   {"p_z1", e.result.p1},
                   {"p_z0", e.result.p0}});
  json sup = json::array();
  for (const auto& s : r.support) {
    json S = json::array(), T = json::array();
    for (const auto& p : s.S)
      S.push_back({{"y", bits_to_string(p.y)}, {"x", p.x}, {"x_alt", p.x_alt}, {"residual", p.residual}});
    for (const auto& [x, z] : s.T) T.push_back({x, z});
    sup.push_back({{"t", s.t},
                   {"d", bits_to_string(s.d)},
                   {"z_prefix", bits_to_string(s.z_prefix)},
                   {"x_prefix", s.x_prefix},
                   {"S", S},
                   {"T", T},
                   {"X", s.X},
                   {"nonempty", s.nonempty()}});
  }
  return {{"all_pass", r.all_pass()},
          {"model_violations", viol},
          {"relevance", rel},
          {"sp_support", sup},
          {"sx_holds", r.sx_holds},
          {"sx_note", r.sx_note},
          {"failures", r.failures}};
}

json bootstrap_to_json(const BootstrapResult& b) {
  return {{"functional", b.functional},
          {"estimate", b.point},
          {"ci", {b.lo, b.hi}},
          {"alpha", b.alpha},
          {"B", b.B},
          {"failures", b.failures},
          {"partners_fixed", b.partners_fixed},
          {"note", "partner sets are estimated; validity of the percentile interval in that case is not established"}};
}

}  // namespace dyntx
