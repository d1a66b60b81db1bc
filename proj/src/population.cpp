#include "dyntx/population.hpp"

#include "dyntx/errors.hpp"
#include "dyntx/parallel.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace dyntx {

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::Exact:
      return "exact";
    case Backend::McPopulation:
      return "mc";
    case Backend::Empirical:
      return "empirical";
  }
  return "unknown";
}

std::string History::str() const {
  std::ostringstream os;
  os << "t=" << t << " z=" << bits_to_string(z) << " x=[";
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << "] d=" << bits_to_string(d) << " y=" << bits_to_string(y);
  return os.str();
}

std::string History::key() const {
  std::string k;
  k.reserve(1 + 4 * t);
  k.push_back(static_cast<char>(t));
  for (int s = 0; s < t; ++s) {
    k.push_back(static_cast<char>(z[s]));
    k.push_back(static_cast<char>(x[s] & 0xff));
    k.push_back(static_cast<char>((x[s] >> 8) & 0xff));
    if (s + 1 < t) k.push_back(static_cast<char>(d[s] | (y[s] << 1)));
  }
  return k;
}

double CellTable::se(double q) const {
  if (std::isinf(n) || n <= 0.0) return 0.0;
  return std::sqrt(std::max(q * (1.0 - q), 0.0) / n);
}

bool Evaluator::reachable(const History& h) const {
  try {
    cell(h);
    return true;
  } catch (const UnreachableCell&) {
    return false;
  }
}

CellStats Evaluator::joint(const History& h, int y, int d) const {
  CellTable c = cell(h);
  double q = c.prob(y, d);
  return {c.n, q, c.se(q)};
}

CellStats Evaluator::propensity(const History& h, int d) const {
  CellTable c = cell(h);
  double q = c.prob(0, d) + c.prob(1, d);
  return {c.n, q, c.se(q)};
}

CellStats Evaluator::transition(const History& h, int d, int y) const {
  CellTable c = cell(h);
  double w = c.prob(0, d) + c.prob(1, d);
  double n = std::isinf(c.n) ? c.n : c.n * w;
  if (w <= 1e-15 || (!std::isinf(n) && (n < min_count() || n <= 0.0)))
    throw UnreachableCell(h.str() + " d_t=" + std::to_string(d));
  double q = c.prob(y, d) / w;
  CellTable sub{n, {}};
  return {n, q, sub.se(q)};
}

// ---------------------------------------------------------------- exact

namespace {

Eigen::MatrixXd exact_corr(const StructuralModel& m) {
  if (m.latent.mode != LatentMode::RankInvariant)
    throw UnsupportedLatent("the quadrature backend needs the rank-invariant mode");
  if (m.T > 3) throw UnsupportedLatent("the quadrature backend supports T <= 3");
  return m.latent.corr;
}

}  // namespace

ExactEvaluator::ExactEvaluator(const StructuralModel& m, int quad_order)
    : m_(m), rect_(exact_corr(m), quad_order) {
  if (quad_order < 8) throw ConfigError("quad_order must be at least 8");
}

CellTable ExactEvaluator::cell(const History& h) const {
  std::string key = h.key();
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  const int T = m_.T;
  std::vector<gauss::Side> sides(2 * T, gauss::Side::free());
  Bits dd = h.d, yy = h.y;
  for (int s = 1; s < h.t; ++s) {
    std::uint32_t yc = pack(Bits(yy.begin(), yy.begin() + (s - 1)));
    std::uint32_t dc = pack(Bits(dd.begin(), dd.begin() + (s - 1)));
    double p = m_.pi_at(s, yc, dc, h.z[s - 1]);
    sides[T + s - 1] = dd[s - 1] ? gauss::Side::le(p) : gauss::Side::gt(p);
    double u = m_.mu_at(s, yc, dc | (static_cast<std::uint32_t>(dd[s - 1]) << (s - 1)), h.x[s - 1]);
    sides[s - 1] = yy[s - 1] ? gauss::Side::le(u) : gauss::Side::gt(u);
  }
  const int t = h.t;
  std::uint32_t yc = pack(yy);
  std::uint32_t dc = pack(dd);
  double p = m_.pi_at(t, yc, dc, h.z[t - 1]);
  CellTable out;
  out.n = kInf;
  double total = 0.0;
  for (int d = 0; d < 2; ++d) {
    sides[T + t - 1] = d ? gauss::Side::le(p) : gauss::Side::gt(p);
    double u = m_.mu_at(t, yc, dc | (static_cast<std::uint32_t>(d) << (t - 1)), h.x[t - 1]);
    for (int y = 0; y < 2; ++y) {
      sides[t - 1] = y ? gauss::Side::le(u) : gauss::Side::gt(u);
      out.p[2 * y + d] = rect_(sides);
      total += out.p[2 * y + d];
    }
  }
  if (!(total > 1e-14)) throw UnreachableCell(h.str());
  for (double& q : out.p) q /= total;
  std::lock_guard<std::mutex> lock(mu_);
  cache_.emplace(std::move(key), out);
  return out;
}

double ExactEvaluator::z_weight(const Bits& z, const Bits&) const {
  double w = 1.0;
  for (std::size_t s = 0; s < z.size(); ++s) w *= z[s] ? m_.z_law[s] : 1.0 - m_.z_law[s];
  return w;
}

// ---------------------------------------------------------------- latent draws

LatentSampler::LatentSampler(const StructuralModel& m) : T_(m.T), spec_(m.latent) {
  if (spec_.mode == LatentMode::RankInvariant) {
    Eigen::LLT<Eigen::MatrixXd> llt(spec_.corr);
    if (llt.info() != Eigen::Success) throw ConfigError("latent correlation is not positive definite");
    chol_ = llt.matrixL();
  }
}

LatentDraw LatentSampler::draw(std::mt19937_64& rng) const {
  std::normal_distribution<double> N(0.0, 1.0);
  LatentDraw out;
  if (spec_.mode == LatentMode::RankInvariant) {
    Eigen::VectorXd e(2 * T_);
    for (int i = 0; i < 2 * T_; ++i) e[i] = N(rng);
    Eigen::VectorXd w = chol_ * e;
    for (int t = 0; t < T_; ++t) {
      out.u0[t] = out.u1[t] = w[t];
      out.v[t] = w[T_ + t];
    }
    return out;
  }
  double alpha = N(rng);
  for (int t = 0; t < T_; ++t) {
    double e0 = N(rng), e1 = N(rng), eta = N(rng);
    out.u0[t] = spec_.a[t] * alpha + spec_.b[t] * e0;
    out.u1[t] = spec_.a[t] * alpha + spec_.b[t] * e1;
    out.v[t] = spec_.c[t] * alpha + spec_.e[t] * eta;
  }
  return out;
}

std::mt19937_64 block_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t block) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(block),
                    static_cast<std::uint32_t>(block >> 32)};
  return std::mt19937_64(seq);
}

// ---------------------------------------------------------------- Monte Carlo

namespace {
constexpr std::size_t kBlock = 4096;
}

McEvaluator::McEvaluator(const StructuralModel& m, std::size_t draws, std::uint64_t seed, double floor)
    : m_(m), draws_(draws), seed_(seed), floor_(floor) {
  LatentSampler sampler(m_);
  std::size_t blocks = (draws + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t b) {
    auto rng = block_engine(seed_, 1, b);
    std::size_t end = std::min(draws, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) draws_[i] = sampler.draw(rng);
  });
}

const std::vector<double>& McEvaluator::path_counts(int t, const Bits& z, const Bits& x) const {
  std::string key(1, static_cast<char>(t));
  for (int s = 0; s < t; ++s) {
    key.push_back(static_cast<char>(z[s]));
    key.append(std::to_string(x[s])).push_back(',');
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = paths_.find(key);
    if (it != paths_.end()) return it->second;
  }
  std::size_t blocks = (draws_.size() + kBlock - 1) / kBlock;
  std::vector<std::vector<double>> partial(blocks, std::vector<double>(std::size_t{1} << (2 * t), 0.0));
  parallel_for(blocks, [&](std::size_t b) {
    auto& acc = partial[b];
    std::size_t end = std::min(draws_.size(), (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      const LatentDraw& w = draws_[i];
      std::uint32_t yc = 0, dc = 0;
      for (int s = 1; s <= t; ++s) {
        int d = m_.pi_at(s, yc, dc, z[s - 1]) >= w.v[s - 1];
        dc |= static_cast<std::uint32_t>(d) << (s - 1);
        double u = d ? w.u1[s - 1] : w.u0[s - 1];
        int y = m_.mu_at(s, yc, dc, x[s - 1]) >= u;
        yc |= static_cast<std::uint32_t>(y) << (s - 1);
      }
      acc[(static_cast<std::size_t>(yc) << t) | dc] += 1.0;
    }
  });
  std::vector<double> counts(std::size_t{1} << (2 * t), 0.0);
  for (const auto& p : partial)
    for (std::size_t j = 0; j < counts.size(); ++j) counts[j] += p[j];
  std::lock_guard<std::mutex> lock(mu_);
  return paths_.emplace(std::move(key), std::move(counts)).first->second;
}

CellTable McEvaluator::cell(const History& h) const {
  const auto& counts = path_counts(h.t, h.z, h.x);
  const int t = h.t;
  std::uint32_t yc = pack(h.y), dc = pack(h.d);
  CellTable out;
  for (int y = 0; y < 2; ++y)
    for (int d = 0; d < 2; ++d) {
      std::uint32_t yy = yc | (static_cast<std::uint32_t>(y) << (t - 1));
      std::uint32_t dd = dc | (static_cast<std::uint32_t>(d) << (t - 1));
      out.p[2 * y + d] = counts[(static_cast<std::size_t>(yy) << t) | dd];
      out.n += out.p[2 * y + d];
    }
  if (out.n < floor_ || out.n <= 0.0) throw UnreachableCell(h.str());
  for (double& q : out.p) q /= out.n;
  return out;
}

double McEvaluator::z_weight(const Bits& z, const Bits&) const {
  double w = 1.0;
  for (std::size_t s = 0; s < z.size(); ++s) w *= z[s] ? m_.z_law[s] : 1.0 - m_.z_law[s];
  return w;
}

// ---------------------------------------------------------------- panel data

PanelData PanelData::subset_w0(int label) const {
  PanelData out;
  out.T = T;
  for (std::size_t i = 0; i < n; ++i) {
    if (w0[i] != label) continue;
    for (int t = 0; t < T; ++t) {
      std::size_t j = i * T + t;
      out.y.push_back(y[j]);
      out.d.push_back(d[j]);
      out.x.push_back(x[j]);
      out.z.push_back(z[j]);
    }
    out.w0.push_back(label);
    ++out.n;
  }
  return out;
}

std::vector<int> PanelData::strata() const {
  std::vector<int> s(w0.begin(), w0.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

int to_int(const std::string& s, int line, const char* col) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("panel csv line " + std::to_string(line) + ": bad value '" + s + "' in column " + col);
  }
}

}  // namespace

PanelData read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open panel file " + path);
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,t,y,d,x,z,w0") throw ConfigError("panel csv header must be id,t,y,d,x,z,w0");
  struct Row {
    int t, y, d, x, z, w0;
  };
  std::vector<long long> order;
  std::map<long long, std::vector<Row>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv(line);
    if (f.size() != 7) throw ConfigError("panel csv line " + std::to_string(lineno) + ": expected 7 fields");
    long long id = to_int(f[0], lineno, "id");
    Row r{to_int(f[1], lineno, "t"), to_int(f[2], lineno, "y"), to_int(f[3], lineno, "d"),
          to_int(f[4], lineno, "x"), to_int(f[5], lineno, "z"), f[6].empty() ? 0 : to_int(f[6], lineno, "w0")};
    auto [it, fresh] = rows.try_emplace(id);
    if (fresh) order.push_back(id);
    if (static_cast<int>(it->second.size()) + 1 != r.t)
      throw ConfigError("panel csv line " + std::to_string(lineno) + ": periods must be 1..T in order within id");
    if ((r.y | r.d | r.z) & ~1 || r.x < 0)
      throw ConfigError("panel csv line " + std::to_string(lineno) + ": y,d,z must be 0/1 and x a grid index");
    it->second.push_back(r);
  }
  PanelData p;
  if (order.empty()) throw ConfigError("panel file " + path + " has no rows");
  p.T = static_cast<int>(rows[order[0]].size());
  p.n = order.size();
  for (long long id : order) {
    const auto& rs = rows[id];
    if (static_cast<int>(rs.size()) != p.T) throw ConfigError("panel id " + std::to_string(id) + " has wrong length");
    for (const Row& r : rs) {
      p.y.push_back(r.y);
      p.d.push_back(r.d);
      p.x.push_back(r.x);
      p.z.push_back(r.z);
    }
    p.w0.push_back(rs[0].w0);
  }
  return p;
}

std::string panel_to_csv(const PanelData& p) {
  std::string s = "id,t,y,d,x,z,w0\n";
  s.reserve(s.size() + p.n * p.T * 16);
  for (std::size_t i = 0; i < p.n; ++i)
    for (int t = 1; t <= p.T; ++t) {
      s += std::to_string(i + 1);
      s += ',' + std::to_string(t) + ',' + std::to_string(p.at(p.y, i, t)) + ',' + std::to_string(p.at(p.d, i, t)) +
           ',' + std::to_string(p.at(p.x, i, t)) + ',' + std::to_string(p.at(p.z, i, t)) + ',' +
           std::to_string(p.w0[i]) + '\n';
    }
  return s;
}

void write_panel_csv(const PanelData& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write panel file " + path);
  out << panel_to_csv(p);
}

// ---------------------------------------------------------------- empirical

namespace {

std::string prefix_key(char tag, const Bits& a, const Bits* b, int len) {
  std::string k(1, tag);
  for (int s = 0; s < len; ++s) {
    if (b) k.push_back(static_cast<char>((*b)[s]));
    k.push_back(static_cast<char>(a[s] & 0xff));
    k.push_back(static_cast<char>((a[s] >> 8) & 0xff));
  }
  return k;
}

int intern(std::unordered_map<std::string, int>& ids, std::string key) {
  auto [it, fresh] = ids.try_emplace(std::move(key), static_cast<int>(ids.size()));
  return it->second;
}

}  // namespace

std::shared_ptr<const PanelIndex> PanelIndex::build(const PanelData& p, std::vector<int> grid_sizes) {
  if (p.n == 0) throw ConfigError("empty panel");
  auto idx = std::make_shared<PanelIndex>();
  idx->T = p.T;
  idx->n = p.n;
  idx->K.assign(p.T, 1);
  for (std::size_t i = 0; i < p.n; ++i)
    for (int t = 1; t <= p.T; ++t) idx->K[t - 1] = std::max(idx->K[t - 1], p.at(p.x, i, t) + 1);
  if (!grid_sizes.empty()) {
    if (static_cast<int>(grid_sizes.size()) != p.T) throw ConfigError("grid sizes do not match the panel horizon");
    for (int t = 0; t < p.T; ++t) {
      if (idx->K[t] > grid_sizes[t]) throw ConfigError("panel x index outside the grid at t=" + std::to_string(t + 1));
      idx->K[t] = grid_sizes[t];
    }
  }
  std::size_t cells = p.n * p.T;
  idx->cell_of.resize(cells);
  idx->outcome_of.resize(cells);
  idx->zx_of.resize(cells);
  idx->x_of.resize(cells);
  for (std::size_t i = 0; i < p.n; ++i) {
    History h;
    h.z.assign(p.z.begin() + i * p.T, p.z.begin() + (i + 1) * p.T);
    h.x.assign(p.x.begin() + i * p.T, p.x.begin() + (i + 1) * p.T);
    h.d.assign(p.d.begin() + i * p.T, p.d.begin() + (i + 1) * p.T);
    h.y.assign(p.y.begin() + i * p.T, p.y.begin() + (i + 1) * p.T);
    for (int t = 1; t <= p.T; ++t) {
      std::size_t j = i * p.T + (t - 1);
      h.t = t;
      idx->cell_of[j] = intern(idx->cell_id, h.key());
      idx->outcome_of[j] = 2 * p.y[j] + p.d[j];
      idx->zx_of[j] = intern(idx->zx_id, prefix_key('z', h.x, &h.z, t));
      idx->x_of[j] = intern(idx->x_id, prefix_key('x', h.x, nullptr, t));
    }
  }
  return idx;
}

EmpiricalEvaluator::EmpiricalEvaluator(const PanelData& data, double floor, std::vector<int> grid_sizes)
    : index_(PanelIndex::build(data, std::move(grid_sizes))), floor_(floor) {
  tally(nullptr);
}

EmpiricalEvaluator::EmpiricalEvaluator(std::shared_ptr<const PanelIndex> index, const std::vector<double>& weights,
                                       double floor)
    : index_(std::move(index)), floor_(floor) {
  if (weights.size() != index_->n) throw ConfigError("bootstrap weights must have one entry per unit");
  tally(&weights);
}

void EmpiricalEvaluator::tally(const std::vector<double>* weights) {
  const PanelIndex& ix = *index_;
  cells_.assign(4 * ix.cell_id.size(), 0.0);
  zx_.assign(ix.zx_id.size(), 0.0);
  xs_.assign(ix.x_id.size(), 0.0);
  for (std::size_t i = 0; i < ix.n; ++i) {
    double w = weights ? (*weights)[i] : 1.0;
    if (w == 0.0) continue;
    for (int t = 0; t < ix.T; ++t) {
      std::size_t j = i * ix.T + t;
      cells_[4 * ix.cell_of[j] + ix.outcome_of[j]] += w;
      zx_[ix.zx_of[j]] += w;
      xs_[ix.x_of[j]] += w;
    }
  }
}

CellTable EmpiricalEvaluator::cell(const History& h) const {
  auto it = index_->cell_id.find(h.key());
  if (it == index_->cell_id.end()) throw UnreachableCell(h.str() + " (empty)");
  CellTable out;
  for (int o = 0; o < 4; ++o) {
    out.p[o] = cells_[4 * it->second + o];
    out.n += out.p[o];
  }
  if (out.n <= 0.0 || out.n < floor_)
    throw UnreachableCell(h.str() + " (count " + std::to_string(static_cast<long long>(out.n)) + ")");
  for (double& q : out.p) q /= out.n;
  return out;
}

double EmpiricalEvaluator::z_weight(const Bits& z, const Bits& x) const {
  int len = static_cast<int>(z.size());
  auto xi = index_->x_id.find(prefix_key('x', x, nullptr, len));
  if (xi == index_->x_id.end() || xs_[xi->second] <= 0.0)
    throw UnreachableCell("x=" + prefix_key('x', x, nullptr, len).substr(1) + " never observed");
  auto zi = index_->zx_id.find(prefix_key('z', x, &z, len));
  if (zi == index_->zx_id.end()) return 0.0;
  return zx_[zi->second] / xs_[xi->second];
}

}  // namespace dyntx
