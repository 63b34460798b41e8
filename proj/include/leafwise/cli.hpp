#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "leafwise/attractor_theory.hpp"
#include "leafwise/circle_dynamics.hpp"
#include "leafwise/curvature.hpp"
#include "leafwise/error.hpp"
#include "leafwise/grid.hpp"
#include "leafwise/heatflow.hpp"
#include "leafwise/param_sweep.hpp"
#include "leafwise/schrodinger.hpp"

namespace leafwise::cli {

using json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Malformed configuration; the message starts with the JSON path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what) : Error(path + ": " + what) {}
};

// ------------------------------------------------------------ field catalog

/// Coefficient offset + s1 q1 + s2 q2; plain numbers have no q part.
struct Coef {
  double offset = 0.0;
  std::array<double, 2> q{0.0, 0.0};
  double at(const QPoint& p) const { return offset + q[0] * p[0] + q[1] * p[1]; }
  bool depends_on_q() const { return q[0] != 0.0 || q[1] != 0.0; }
};

/// const c | a + b sin(k x_dim) | a + b cos(k x_dim) | product of factors.
struct FieldSpec {
  enum class Kind { constant, sin, cos, product } kind = Kind::constant;
  Coef a;
  Coef b;
  double k = 1.0;
  std::size_t dim = 0;
  std::vector<FieldSpec> factors;

  double value(const Coord& x, const QPoint& q) const {
    switch (kind) {
      case Kind::constant: return a.at(q);
      case Kind::sin: return a.at(q) + b.at(q) * std::sin(k * x[dim]);
      case Kind::cos: return a.at(q) + b.at(q) * std::cos(k * x[dim]);
      case Kind::product: {
        double v = 1.0;
        for (const auto& f : factors) v *= f.value(x, q);
        return v;
      }
    }
    return 0.0;
  }
  ScalarField sample(const Grid& g, const QPoint& q = {0.0, 0.0}) const {
    return ScalarField::sample(g, [&](const Coord& x) { return value(x, q); });
  }
};

// ------------------------------------------------------------ typed configs

struct GroundStateConfig {
  std::vector<GridDim> grid;
  FieldSpec beta;
  double tol = 1e-13;
};

struct RootsConfig {
  double lambda0 = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
  std::optional<double> epsilon;
  std::size_t samples = 400;
};

struct AttractConfig {
  std::vector<GridDim> grid;
  FieldSpec beta, psi1, psi2, u0;
  double tol = 1e-9;
  double t_max = 1e5;
  std::optional<double> epsilon;
  bool richardson = true;
};

struct OdeConfig {
  OdeParams params;
  std::vector<double> y0;
  double T = 50.0;
  double dt = 0.01;
};

struct PortraitWindow {
  double u_lo, u_hi, v_lo, v_hi;
  std::size_t nu = 81, nv = 81;
};

struct ClosedFormSpec {
  double C1 = 0.0;
  double C2 = 0.0;
  std::size_t points = 256;
};

struct PhaseConfig {
  OdeParams params;
  PlanarState start;
  double T = 100.0;
  double dt = 1e-3;
  std::size_t record_every = 10;
  std::optional<PortraitWindow> portrait;
  std::optional<ClosedFormSpec> closed_form;
};

struct CurvatureConfig {
  enum class Mode { twisted, ground_state_twist, scaling } mode = Mode::twisted;
  std::vector<GridDim> base, fiber;
  std::optional<FieldSpec> v, u;
  double s_mix = 0.0, h_sq = 0.0, t_sq = 0.0, u_const = 1.0;
};

struct SweepConfig {
  std::vector<GridDim> grid;
  FieldSpec beta;
  std::optional<FieldSpec> psi1, psi2;
  std::vector<QAxis> q;
  bool attractor = false;
  double tol = 1e-9;
  double t_max = 1e5;
  bool warm_start = true;
};

struct RunConfig {
  std::string command;
  std::filesystem::path output = "leafwise_out";
  std::variant<GroundStateConfig, RootsConfig, AttractConfig, OdeConfig, PhaseConfig,
               CurvatureConfig, SweepConfig>
      body;
};

// ------------------------------------------------------------ parsing

namespace detail {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }
  const std::string& path() const { return path_; }
  std::string child(const std::string& key) const { return path_ + "." + key; }

  /// Every key must be in `allowed`.
  void allow(std::initializer_list<const char*> allowed) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) throw ConfigError(child(it.key()), "unknown key");
    }
  }
  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const {
    if (!j_.contains(key)) throw ConfigError(child(key), "missing required key");
    return j_.at(key);
  }
  double number(const char* key) const { return as_number(at(key), child(key)); }
  double number(const char* key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  std::optional<double> maybe_number(const char* key) const {
    if (!has(key)) return std::nullopt;
    return number(key);
  }
  double positive(const char* key, double fallback) const {
    const double v = number(key, fallback);
    if (!(v > 0.0)) throw ConfigError(child(key), "must be positive");
    return v;
  }
  std::size_t count(const char* key, std::size_t fallback, std::size_t min = 1) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
      throw ConfigError(child(key), "expected an integer >= " + std::to_string(min));
    return v.get<std::size_t>();
  }
  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!at(key).is_boolean()) throw ConfigError(child(key), "expected true or false");
    return at(key).get<bool>();
  }
  std::string string(const char* key) const {
    if (!at(key).is_string()) throw ConfigError(child(key), "expected a string");
    return at(key).get<std::string>();
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
    return d;
  }

 private:
  const json& j_;
  std::string path_;
};

inline std::vector<GridDim> parse_grid(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || j.size() > kMaxDims)
    throw ConfigError(path, "expected a list of 1 to 3 {length, points} objects");
  std::vector<GridDim> dims;
  for (std::size_t d = 0; d < j.size(); ++d) {
    Reader r(j[d], path + "[" + std::to_string(d) + "]");
    r.allow({"length", "points"});
    const double len = r.number("length");
    if (!(len > 0.0)) throw ConfigError(r.child("length"), "must be positive");
    dims.push_back({len, r.count("points", 0, kMinPoints)});
    if (dims.back().points == 0) throw ConfigError(r.child("points"), "missing required key");
  }
  return dims;
}

inline Coef parse_coef(const json& j, const std::string& path, bool allow_q) {
  if (j.is_number()) return {Reader::as_number(j, path), {0.0, 0.0}};
  if (!allow_q) throw ConfigError(path, "expected a number");
  Reader r(j, path);
  r.allow({"offset", "q1", "q2"});
  return {r.number("offset", 0.0), {r.number("q1", 0.0), r.number("q2", 0.0)}};
}

inline FieldSpec parse_field(const json& j, const std::string& path, std::size_t rank,
                             bool allow_q) {
  FieldSpec f;
  if (j.is_number()) {
    f.a = parse_coef(j, path, false);
    return f;
  }
  Reader r(j, path);
  const std::string type = r.string("type");
  if (type == "const") {
    r.allow({"type", "value"});
    f.a = parse_coef(r.at("value"), r.child("value"), allow_q);
  } else if (type == "sin" || type == "cos") {
    r.allow({"type", "a", "b", "k", "dim"});
    f.kind = type == "sin" ? FieldSpec::Kind::sin : FieldSpec::Kind::cos;
    f.a = r.has("a") ? parse_coef(r.at("a"), r.child("a"), allow_q) : Coef{};
    f.b = r.has("b") ? parse_coef(r.at("b"), r.child("b"), allow_q) : Coef{1.0, {0.0, 0.0}};
    f.k = r.number("k", 1.0);
    f.dim = r.count("dim", 0, 0);
    if (f.dim >= rank)
      throw ConfigError(r.child("dim"), "dimension out of range for a rank-" +
                                            std::to_string(rank) + " grid");
  } else if (type == "product") {
    r.allow({"type", "factors"});
    f.kind = FieldSpec::Kind::product;
    const json& fs = r.at("factors");
    if (!fs.is_array() || fs.empty()) throw ConfigError(r.child("factors"), "expected a list");
    for (std::size_t i = 0; i < fs.size(); ++i)
      f.factors.push_back(
          parse_field(fs[i], r.child("factors") + "[" + std::to_string(i) + "]", rank, allow_q));
  } else {
    throw ConfigError(r.child("type"), "unknown field type '" + type +
                                           "' (const, sin, cos, product)");
  }
  return f;
}

inline PlanarState parse_state(const json& j, const std::string& path) {
  Reader r(j, path);
  r.allow({"u", "v"});
  PlanarState s{r.number("u"), r.number("v", 0.0)};
  if (!(s.u > 0.0)) throw ConfigError(r.child("u"), "must be positive");
  return s;
}

inline OdeParams parse_ode_params(const Reader& r) {
  OdeParams p{r.number("beta"), r.number("psi1"), r.number("psi2")};
  if (p.psi1 < 0.0) throw ConfigError(r.child("psi1"), "must be nonnegative");
  if (p.psi2 < 0.0) throw ConfigError(r.child("psi2"), "must be nonnegative");
  return p;
}

}  // namespace detail

/// Validates a parsed JSON document into a RunConfig.
inline RunConfig parse_config(const json& j) {
  detail::Reader top(j, "$");
  RunConfig cfg;
  cfg.command = top.string("command");
  if (top.has("output")) cfg.output = top.string("output");
  const auto& c = cfg.command;
  if (c == "ground-state") {
    top.allow({"command", "output", "grid", "beta", "tol"});
    GroundStateConfig g;
    g.grid = detail::parse_grid(top.at("grid"), top.child("grid"));
    g.beta = detail::parse_field(top.at("beta"), top.child("beta"), g.grid.size(), false);
    g.tol = top.positive("tol", g.tol);
    cfg.body = g;
  } else if (c == "roots") {
    top.allow({"command", "output", "lambda0", "psi1", "psi2", "epsilon", "samples"});
    RootsConfig r{top.number("lambda0"), top.number("psi1"), top.number("psi2"),
                  top.maybe_number("epsilon"), top.count("samples", 400, 2)};
    cfg.body = r;
  } else if (c == "attract") {
    top.allow({"command", "output", "grid", "beta", "psi1", "psi2", "u0", "tol", "t_max",
               "epsilon", "richardson"});
    AttractConfig a;
    a.grid = detail::parse_grid(top.at("grid"), top.child("grid"));
    const auto rank = a.grid.size();
    a.beta = detail::parse_field(top.at("beta"), top.child("beta"), rank, false);
    a.psi1 = detail::parse_field(top.at("psi1"), top.child("psi1"), rank, false);
    a.psi2 = detail::parse_field(top.at("psi2"), top.child("psi2"), rank, false);
    a.u0 = detail::parse_field(top.at("u0"), top.child("u0"), rank, false);
    a.tol = top.positive("tol", a.tol);
    a.t_max = top.positive("t_max", a.t_max);
    a.epsilon = top.maybe_number("epsilon");
    a.richardson = top.boolean("richardson", true);
    cfg.body = a;
  } else if (c == "ode") {
    top.allow({"command", "output", "beta", "psi1", "psi2", "y0", "T", "dt"});
    OdeConfig o;
    o.params = detail::parse_ode_params(top);
    const json& ys = top.at("y0");
    if (!ys.is_array() || ys.empty()) throw ConfigError(top.child("y0"), "expected a list");
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const auto path = top.child("y0") + "[" + std::to_string(i) + "]";
      const double y = detail::Reader::as_number(ys[i], path);
      if (!(y > 0.0)) throw ConfigError(path, "must be positive");
      o.y0.push_back(y);
    }
    o.T = top.positive("T", o.T);
    o.dt = top.positive("dt", o.dt);
    cfg.body = o;
  } else if (c == "phase") {
    top.allow({"command", "output", "beta", "psi1", "psi2", "start", "T", "dt", "record_every",
               "portrait", "closed_form"});
    PhaseConfig p;
    p.params = detail::parse_ode_params(top);
    p.start = detail::parse_state(top.at("start"), top.child("start"));
    p.T = top.positive("T", p.T);
    p.dt = top.positive("dt", p.dt);
    p.record_every = top.count("record_every", p.record_every);
    if (top.has("portrait")) {
      detail::Reader w(top.at("portrait"), top.child("portrait"));
      w.allow({"u_lo", "u_hi", "v_lo", "v_hi", "nu", "nv"});
      PortraitWindow pw{w.number("u_lo"), w.number("u_hi"), w.number("v_lo"), w.number("v_hi"),
                        w.count("nu", 81, 2), w.count("nv", 81, 2)};
      if (!(pw.u_lo > 0.0) || !(pw.u_hi > pw.u_lo) || !(pw.v_hi > pw.v_lo))
        throw ConfigError(w.path(), "need 0 < u_lo < u_hi and v_lo < v_hi");
      p.portrait = pw;
    }
    if (top.has("closed_form")) {
      detail::Reader w(top.at("closed_form"), top.child("closed_form"));
      w.allow({"C1", "C2", "points"});
      p.closed_form = ClosedFormSpec{w.number("C1"), w.number("C2", 0.0),
                                     w.count("points", 256, kMinPoints)};
      if (p.params.psi1 != 0.0 || !(p.params.psi2 > 0.0))
        throw ConfigError(w.path(), "closed forms need psi1 = 0 and psi2 > 0");
    }
    cfg.body = p;
  } else if (c == "curvature") {
    CurvatureConfig k;
    const std::string mode = top.string("mode");
    if (mode == "scaling") {
      top.allow({"command", "output", "mode", "s_mix", "h_sq", "t_sq", "u"});
      k.mode = CurvatureConfig::Mode::scaling;
      k.s_mix = top.number("s_mix");
      k.h_sq = top.number("h_sq");
      k.t_sq = top.number("t_sq");
      k.u_const = top.number("u");
      if (k.h_sq < 0.0 || k.t_sq < 0.0) throw ConfigError("$", "h_sq and t_sq must be >= 0");
      if (!(k.u_const > 0.0)) throw ConfigError(top.child("u"), "must be positive");
    } else if (mode == "twisted" || mode == "ground_state_twist") {
      const bool twisted = mode == "twisted";
      if (twisted)
        top.allow({"command", "output", "mode", "base", "fiber", "v", "u"});
      else
        top.allow({"command", "output", "mode", "base", "fiber", "v"});
      k.mode = twisted ? CurvatureConfig::Mode::twisted
                       : CurvatureConfig::Mode::ground_state_twist;
      k.base = detail::parse_grid(top.at("base"), top.child("base"));
      k.fiber = detail::parse_grid(top.at("fiber"), top.child("fiber"));
      const auto rank = k.base.size() + k.fiber.size();
      if (rank > kMaxDims) throw ConfigError("$", "base and fiber together exceed 3 dimensions");
      k.v = detail::parse_field(top.at("v"), top.child("v"), rank, false);
      if (twisted) k.u = detail::parse_field(top.at("u"), top.child("u"), rank, false);
    } else {
      throw ConfigError(top.child("mode"), "unknown mode (twisted, ground_state_twist, scaling)");
    }
    cfg.body = k;
  } else if (c == "sweep") {
    top.allow({"command", "output", "grid", "beta", "psi1", "psi2", "q", "mode", "tol", "t_max",
               "warm_start"});
    SweepConfig s;
    s.grid = detail::parse_grid(top.at("grid"), top.child("grid"));
    const auto rank = s.grid.size();
    s.beta = detail::parse_field(top.at("beta"), top.child("beta"), rank, true);
    const std::string mode = top.has("mode") ? top.string("mode") : "ground_state";
    if (mode != "ground_state" && mode != "attractor")
      throw ConfigError(top.child("mode"), "unknown mode (ground_state, attractor)");
    s.attractor = mode == "attractor";
    if (s.attractor) {
      s.psi1 = detail::parse_field(top.at("psi1"), top.child("psi1"), rank, true);
      s.psi2 = detail::parse_field(top.at("psi2"), top.child("psi2"), rank, true);
    } else if (top.has("psi1") || top.has("psi2")) {
      throw ConfigError("$", "psi1/psi2 are only used in attractor mode");
    }
    const json& axes = top.at("q");
    if (!axes.is_array() || axes.empty() || axes.size() > 2)
      throw ConfigError(top.child("q"), "expected 1 or 2 {lo, hi, step} axes");
    for (std::size_t i = 0; i < axes.size(); ++i) {
      detail::Reader a(axes[i], top.child("q") + "[" + std::to_string(i) + "]");
      a.allow({"lo", "hi", "step"});
      try {
        s.q.push_back(QAxis::uniform(a.number("lo"), a.number("hi"), a.number("step")));
      } catch (const InvalidInput& e) {
        throw ConfigError(a.path(), e.what());
      }
    }
    s.tol = top.positive("tol", s.tol);
    s.t_max = top.positive("t_max", s.t_max);
    s.warm_start = top.boolean("warm_start", true);
    cfg.body = s;
  } else {
    throw ConfigError(top.child("command"),
                      "unknown command '" + c +
                          "' (ground-state, roots, attract, ode, phase, curvature, sweep)");
  }
  return cfg;
}

/// Parses JSON text; syntax errors carry line and column.
inline RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", e.what());
  }
  return parse_config(j);
}

// ------------------------------------------------------------ runners

namespace detail {

/// A pass/fail flag together with the number it is decided on.
inline json flag(bool pass, double value, double threshold, const char* relation) {
  return {{"pass", pass}, {"value", value}, {"threshold", threshold}, {"relation", relation}};
}

// Closure gap between the first two section crossings; with fewer than two
// crossings the flag is decided on the crossing count instead.
inline json closure_flag(const OrbitResult& o) {
  if (o.crossing_u.size() < 2)
    return flag(false, static_cast<double>(o.crossing_u.size()), 2.0, ">=");
  return flag(o.closed, std::abs(o.crossing_u[1] - o.crossing_u[0]), 1e-6, "<");
}

inline json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << s;
}

template <class F>
void write_csv(const std::filesystem::path& p, F&& writer) {
  std::ostringstream os;
  writer(os);
  write_text(p, os.str());
}

inline json profile_json(const PhiProfile& p) {
  return {{"lambda0", p.lambda0}, {"A", p.A}, {"B", p.B}, {"y1", p.y1},
          {"y2", opt(p.y2)},      {"y3", opt(p.y3)}, {"y4", opt(p.y4)}};
}

inline double interval_default_epsilon(const PhiProfile& p) { return 0.5 * sigma_limit(p); }

inline json run_ground_state(const GroundStateConfig& c, const std::filesystem::path& out) {
  const Grid g(c.grid);
  const auto beta = c.beta.sample(g);
  const auto gs = ground_state(g, beta, c.tol);
  write_csv(out / "e0.csv", [&](std::ostream& os) { write_field_csv(os, gs.e0); });
  const double lo = -beta.max(), hi = -beta.min();
  const double enclosure = std::max({lo - gs.lambda0, gs.lambda0 - hi, 0.0});
  const double limit = 1e-10 * std::max(1.0, std::abs(gs.lambda0));
  return {{"lambda0", gs.lambda0},
          {"lambda1", gs.lambda1},
          {"gap", gs.gap},
          {"iterations", gs.iterations},
          {"residual", gs.residual},
          {"e0_min", gs.e0.min()},
          {"e0_max", gs.e0.max()},
          {"enclosure", {{"lower", lo}, {"upper", hi}, {"violation", enclosure}}},
          {"checks",
           {{"gap_positive", flag(gs.gap > 0.0, gs.gap, 0.0, ">")},
            {"e0_positive", flag(gs.e0.min() > 0.0, gs.e0.min(), 0.0, ">")},
            {"residual", flag(gs.residual <= limit, gs.residual, limit, "<=")},
            {"enclosure", flag(enclosure <= 1e-10, enclosure, 1e-10, "<=")}}}};
}

inline json run_roots(const RootsConfig& c, const std::filesystem::path& out) {
  const auto p = make_profile(c.lambda0, c.psi1, c.psi2);
  const ExtremaCoeffs coeffs{c.psi1, c.psi1, c.psi2, c.psi2};
  const auto adm = check_admissible(c.lambda0, coeffs);
  const double eps = c.epsilon.value_or(interval_default_epsilon(p));
  const double mu0 = decay_rate_mu(0.0, p);
  const double mu_eps = decay_rate_mu(eps, p);
  const double mu_sampled = decay_rate_mu_sampled(eps, p);
  write_csv(out / "profile.csv", [&](std::ostream& os) {
    os << "y,phi,phi_prime\n";
    const double lo = 0.25 * (p.y2 ? *p.y2 : p.y1), hi = 2.0 * p.y1;
    char buf[96];
    for (std::size_t i = 0; i < c.samples; ++i) {
      const double y = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(c.samples - 1);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", y, phi(y, p), phi_derivative(y, p));
      os << buf;
    }
  });
  const double mu_gap = std::abs(mu_eps - mu_sampled);
  return {{"profile", profile_json(p)},
          {"y1", p.y1},
          {"y2", opt(p.y2)},
          {"y3", opt(p.y3)},
          {"y4", opt(p.y4)},
          {"sigma_limit", sigma_limit(p)},
          {"epsilon", eps},
          {"mu0", mu0},
          {"mu_epsilon", mu_eps},
          {"mu_epsilon_sampled", mu_sampled},
          {"margin", adm.margin},
          {"admissible", flag(adm.admissible, adm.margin, 0.0, ">")},
          {"checks", {{"mu_cross_check", flag(mu_gap <= 1e-6 * std::max(1.0, mu_eps), mu_gap,
                                              1e-6 * std::max(1.0, mu_eps), "<=")}}}};
}

inline json run_attract(const AttractConfig& c, const std::filesystem::path& out) {
  const Grid g(c.grid);
  const auto build = [&](const Grid& grid) {
    return build_problem(grid, c.beta.sample(grid), c.psi1.sample(grid), c.psi2.sample(grid));
  };
  const auto p = build(g);
  const double eps = c.epsilon.value_or(interval_default_epsilon(p.profile_minus));
  const auto u0 = c.u0.sample(g);
  const auto member = initial_condition_check(u0, p, eps);
  const auto run = evolve_to_attractor(u0, p, c.tol, c.t_max);

  double tol_h = 0.0;
  json richardson = nullptr;
  if (c.richardson) {
    std::vector<GridDim> fine_dims = c.grid;
    for (auto& d : fine_dims) d.points *= 2;
    const Grid fine(fine_dims);
    const auto pf = build(fine);
    std::vector<double> start(fine.total_points());
    for (std::size_t i = 0; i < start.size(); ++i) start[i] = pf.profile_minus.y1 * pf.e0()[i];
    const auto rf = evolve_to_attractor(ScalarField(fine, start), pf, c.tol, c.t_max);
    tol_h = richardson_error(attractor_ratio(run.u_star, p), attractor_ratio(rf.u_star, pf));
    richardson = {{"fine_points", fine.total_points()}, {"tol_h", tol_h}};
  }
  const double slack = time_convergence_slack(run.residual, p);
  const auto sw = certify_sandwich(run.u_star, p, tol_h + slack);
  const auto eb = certify_exponential_bound(run.trace, p, eps);

  write_csv(out / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, run.trace); });
  write_csv(out / "u_star.csv", [&](std::ostream& os) { write_field_csv(os, run.u_star); });
  const double res_limit = 10.0 * c.tol;
  return {
      {"lambda0", p.lambda0()},
      {"gap", p.spectral.gap},
      {"coeffs",
       {{"psi1_minus", p.coeffs.psi1_minus},
        {"psi1_plus", p.coeffs.psi1_plus},
        {"psi2_minus", p.coeffs.psi2_minus},
        {"psi2_plus", p.coeffs.psi2_plus}}},
      {"profile_minus", profile_json(p.profile_minus)},
      {"profile_plus", profile_json(p.profile_plus)},
      {"epsilon", eps},
      {"initial",
       {{"min_ratio", member.min_ratio},
        {"max_ratio", member.max_ratio},
        {"in_u1_eps", flag(member.in_u1_eps, member.min_ratio, member.lower_level, ">=")},
        {"in_u1", flag(member.in_u1, member.min_ratio, member.critical_level, ">")}}},
      {"steps", run.steps},
      {"converged_at", opt(run.trace.converged_at)},
      {"richardson", richardson},
      {"sandwich",
       {{"min_ratio", sw.min_ratio},
        {"max_ratio", sw.max_ratio},
        {"lower", sw.lower},
        {"upper", sw.upper},
        {"tol_h", tol_h},
        {"time_slack", slack},
        {"tolerance", sw.tol_h},
        {"violation", sw.violation},
        {"pass", flag(sw.pass, sw.violation, sw.tol_h, "<=")}}},
      {"exponential_bound",
       {{"mu", eb.mu},
        {"delta", eb.delta},
        {"worst_ratio", eb.worst_ratio},
        {"worst_ratio_w", eb.worst_ratio_w},
        {"pass", flag(eb.pass, eb.worst_ratio, 1.0 + 1e-6, "<=")},
        {"pass_w", flag(eb.pass_w, eb.worst_ratio_w, 1.0 + 1e-6, "<=")}}},
      {"residual", flag(run.residual <= res_limit, run.residual, res_limit, "<=")}};
}

inline json run_ode(const OdeConfig& c, const std::filesystem::path& out) {
  const auto& q = c.params;
  json fixed = json::array();
  std::vector<FixedPoint> fps;
  if (q.psi1 > 0.0) fps = classify_fixed_points(q.beta, q.psi1, q.psi2);
  for (const auto& fp : fps)
    fixed.push_back({{"root", fp.root},
                     {"slope", fp.slope},
                     {"stability", to_string(fp.stability)},
                     {"residual", std::abs(ode_rhs(fp.root, q.beta, q.psi1, q.psi2))}});
  json flows = json::array();
  std::ostringstream csv;
  csv << "index,t,y\n";
  char buf[96];
  for (std::size_t i = 0; i < c.y0.size(); ++i) {
    const auto f = [&](double y) { return ode_rhs(y, q.beta, q.psi1, q.psi2); };
    json entry{{"y0", c.y0[i]}};
    try {
      const auto tr = integrate_positive(f, c.y0[i], c.T, c.dt);
      for (std::size_t k = 0; k < tr.t.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, tr.t[k], tr.y[k]);
        csv << buf;
      }
      entry["status"] = "finished";
      entry["y_final"] = tr.y.back();
      json limit = nullptr;
      for (const auto& fp : fps)
        if (std::abs(tr.y.back() - fp.root) < 1e-6 * std::max(1.0, fp.root)) limit = fp.root;
      entry["limit_root"] = limit;
    } catch (const BasinViolation& e) {
      entry["status"] = "left_half_line";
      entry["exit_time"] = e.time();
    }
    flows.push_back(entry);
  }
  write_text(out / "flows.csv", csv.str());
  return {{"beta", q.beta}, {"psi1", q.psi1}, {"psi2", q.psi2},
          {"fixed_points", fixed}, {"flows", flows}};
}

inline json run_phase(const PhaseConfig& c, const std::filesystem::path& out) {
  const auto& q = c.params;
  json fixed = json::array();
  for (const auto& fp : fixed_points_and_types(q)) {
    const Eigen::EigenSolver<Eigen::Matrix2d> es(linearization(fp.u, q));
    const auto ev = es.eigenvalues();
    fixed.push_back({{"u", fp.u},
                     {"slope", fp.slope},
                     {"type", to_string(fp.type)},
                     {"eigenvalues",
                      {{{"re", ev(0).real()}, {"im", ev(0).imag()}},
                       {{"re", ev(1).real()}, {"im", ev(1).imag()}}}}});
  }
  const auto orbit = integrate_orbit(c.start, q, c.T, c.dt, c.record_every);
  write_csv(out / "orbit.csv", [&](std::ostream& os) { write_orbit_csv(os, orbit, q); });
  if (c.portrait) {
    const auto& w = *c.portrait;
    write_csv(out / "portrait.csv", [&](std::ostream& os) {
      write_portrait_csv(os, q, w.u_lo, w.u_hi, w.v_lo, w.v_hi, w.nu, w.nv);
    });
  }
  json summary{{"beta", q.beta},
               {"psi1", q.psi1},
               {"psi2", q.psi2},
               {"fixed_points", fixed},
               {"separatrix_level", opt(separatrix_level(q))},
               {"orbit",
                {{"start", {{"u", c.start.u}, {"v", c.start.v}}},
                 {"energy", hamiltonian(c.start, q)},
                 {"energy_drift", flag(orbit.energy_drift < 1e-8, orbit.energy_drift, 1e-8, "<")},
                 {"crossings", orbit.crossing_times.size()},
                 {"closed", closure_flag(orbit)},
                 {"period", opt(orbit.period)}}},
               {"periodicity", to_string(periodicity_gate(q.beta))}};
  if (c.closed_form) {
    const auto& cf = *c.closed_form;
    const Grid g = make_circle_grid(2.0 * M_PI, cf.points);
    std::vector<double> u(g.total_points());
    std::size_t undefined = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const auto v = closed_form_case_c(q.beta, q.psi2, cf.C1, cf.C2, g.coordinates(i)[0]);
      if (v) u[i] = *v;
      else ++undefined;
    }
    const bool defined = undefined == 0;
    json block{{"C1", cf.C1}, {"C2", cf.C2}, {"points", cf.points},
               {"defined", flag(defined, static_cast<double>(undefined), 0.0, "==")}};
    if (defined) {
      const ScalarField uf(g, u);
      write_csv(out / "closed_form.csv", [&](std::ostream& os) { write_field_csv(os, uf); });
      block["residual"] = stationary_residual(uf, ScalarField::constant(g, q.beta),
                                              ScalarField::constant(g, 0.0),
                                              ScalarField::constant(g, q.psi2));
      block["min"] = uf.min();
      block["max"] = uf.max();
    }
    summary["closed_form"] = block;
  }
  return summary;
}

inline json run_curvature(const CurvatureConfig& c, const std::filesystem::path& out) {
  using Mode = CurvatureConfig::Mode;
  if (c.mode == Mode::scaling) {
    return {{"mode", "scaling"},
            {"s_mix", c.s_mix},
            {"s_mix_tilde", scaling_smix(c.s_mix, c.h_sq, c.t_sq, c.u_const)}};
  }
  const Grid base(c.base), fiber(c.fiber);
  const Grid g = product_grid(base, fiber);
  const auto v = c.v->sample(g);
  if (c.mode == Mode::twisted) {
    const auto smix = twisted_smix(TwistedProduct(base, fiber, v, c.u->sample(g)));
    write_csv(out / "smix.csv", [&](std::ostream& os) { write_field_csv(os, smix); });
    return {{"mode", "twisted"}, {"smix_min", smix.min()}, {"smix_max", smix.max()}};
  }
  const auto gs = ground_state_twist(base, fiber, v);
  write_csv(out / "smix.csv", [&](std::ostream& os) { write_field_csv(os, gs.smix); });
  write_csv(out / "u.csv", [&](std::ostream& os) { write_field_csv(os, gs.u); });
  double mismatch = 0.0;
  for (std::size_t j = 0; j < gs.leaf_smix.size(); ++j) {
    const auto s = leaf_slice(gs.smix.values(), fiber.total_points(), j);
    for (double x : s) mismatch = std::max(mismatch, std::abs(x - gs.leaf_smix[j]));
  }
  const auto [lo, hi] = std::minmax_element(gs.leaf_lambda0.begin(), gs.leaf_lambda0.end());
  return {{"mode", "ground_state_twist"},
          {"leaves", gs.leaf_lambda0.size()},
          {"leaf_lambda0_min", *lo},
          {"leaf_lambda0_max", *hi},
          {"max_leaf_oscillation", gs.max_oscillation},
          {"max_mismatch_n_lambda0", mismatch},
          {"checks",
           {{"leafwise_constant", flag(gs.max_oscillation <= 1e-8, gs.max_oscillation, 1e-8, "<=")},
            {"equals_n_lambda0", flag(mismatch <= 1e-8, mismatch, 1e-8, "<=")}}}};
}

inline json run_sweep(const SweepConfig& c, const std::filesystem::path& out) {
  const Grid g(c.grid);
  ParamFamily fam{g, c.q, [&](const QPoint& q) { return c.beta.sample(g, q); }, nullptr, nullptr};
  std::optional<SweepResult> found;
  if (c.attractor) {
    fam.psi1_of_q = [&](const QPoint& q) { return c.psi1->sample(g, q); };
    fam.psi2_of_q = [&](const QPoint& q) { return c.psi2->sample(g, q); };
    AttractorSweepOptions opts;
    opts.t_max = c.t_max;
    opts.warm_start = c.warm_start;
    found.emplace(sweep_attractor(fam, c.tol, opts));
  } else {
    found.emplace(sweep_ground_state(fam));
  }
  const auto& r = *found;
  write_csv(out / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, r); });
  double min_gap = INFINITY, enclosure = 0.0;
  for (std::size_t k = 0; k < r.q.size(); ++k) {
    min_gap = std::min(min_gap, r.gap[k]);
    enclosure = std::max({enclosure, -r.beta_max[k] - r.lambda0[k], r.lambda0[k] + r.beta_min[k]});
  }
  json axes = json::array();
  for (std::size_t a = 0; a < r.axes.size(); ++a) {
    double d1 = 0.0, d2 = 0.0;
    for (double v : r.first_difference[a])
      if (std::isfinite(v)) d1 = std::max(d1, std::abs(v));
    for (double v : r.second_difference[a])
      if (std::isfinite(v)) d2 = std::max(d2, std::abs(v));
    json ax{{"lo", r.axes[a].lo},
            {"step", r.axes[a].step},
            {"count", r.axes[a].count},
            {"max_first_difference", d1},
            {"max_second_difference", d2}};
    if (r.axes[a].count >= 2) {
      ax["e0_lipschitz"] = e0_lipschitz(r, a);
      if (c.attractor) ax["u_star_lipschitz"] = u_star_lipschitz(r, a);
    }
    axes.push_back(ax);
  }
  return {{"mode", c.attractor ? "attractor" : "ground_state"},
          {"points", r.q.size()},
          {"axes", axes},
          {"min_gap", min_gap},
          {"enclosure_violation", enclosure},
          {"checks",
           {{"gap", flag(min_gap >= kMinSweepGap, min_gap, kMinSweepGap, ">=")},
            {"enclosure", flag(enclosure <= 1e-10, enclosure, 1e-10, "<=")}}}};
}

}  // namespace detail

struct RunOutcome {
  int exit_code = kExitOk;
  json summary;
};

/// Runs one configuration and writes its CSVs and summary.json into the
/// output directory (created if needed).
inline RunOutcome run(const RunConfig& cfg, const std::optional<std::filesystem::path>& out_dir = {}) {
  const auto out = out_dir.value_or(cfg.output);
  std::filesystem::create_directories(out);
  RunOutcome o;
  o.summary = {{"schema", 1}, {"command", cfg.command}};
  try {
    json result = std::visit(
        [&](const auto& body) -> json {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, GroundStateConfig>) return detail::run_ground_state(body, out);
          else if constexpr (std::is_same_v<T, RootsConfig>) return detail::run_roots(body, out);
          else if constexpr (std::is_same_v<T, AttractConfig>) return detail::run_attract(body, out);
          else if constexpr (std::is_same_v<T, OdeConfig>) return detail::run_ode(body, out);
          else if constexpr (std::is_same_v<T, PhaseConfig>) return detail::run_phase(body, out);
          else if constexpr (std::is_same_v<T, CurvatureConfig>) return detail::run_curvature(body, out);
          else return detail::run_sweep(body, out);
        },
        cfg.body);
    o.summary["status"] = "ok";
    o.summary["result"] = std::move(result);
  } catch (const InvalidInput& e) {
    o.exit_code = kExitConfig;
    o.summary["status"] = "config_error";
    o.summary["reason"] = {{"kind", "invalid_input"}, {"message", e.what()}};
  } catch (const Inadmissible& e) {
    o.exit_code = kExitNumerical;
    o.summary["status"] = "numerical_failure";
    o.summary["reason"] = {{"kind", "inadmissible"}, {"message", e.what()}, {"margin", e.margin()}};
  } catch (const ConvergenceFailure& e) {
    o.exit_code = kExitNumerical;
    o.summary["status"] = "numerical_failure";
    o.summary["reason"] = {
        {"kind", "convergence_failure"}, {"message", e.what()}, {"residual", e.residual()}};
  } catch (const BasinViolation& e) {
    o.exit_code = kExitNumerical;
    o.summary["status"] = "numerical_failure";
    o.summary["reason"] = {{"kind", "basin_violation"}, {"message", e.what()}, {"time", e.time()}};
  }
  detail::write_text(out / "summary.json", o.summary.dump(2) + "\n");
  return o;
}

/// Entry point shared by the executable and the tests.
inline int run_file(const std::filesystem::path& config_path,
                    const std::optional<std::filesystem::path>& out_dir, std::ostream& err) {
  std::ifstream in(config_path);
  if (!in) {
    err << "error: cannot read " << config_path.string() << "\n";
    return kExitConfig;
  }
  std::stringstream text;
  text << in.rdbuf();
  try {
    const auto cfg = parse_config_text(text.str());
    const auto outcome = run(cfg, out_dir);
    if (outcome.exit_code != kExitOk)
      err << "error: " << outcome.summary["reason"]["message"].get<std::string>() << "\n";
    return outcome.exit_code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace leafwise::cli
