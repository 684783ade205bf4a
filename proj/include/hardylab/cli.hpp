#pragma once

#include "hardylab/functionals.hpp"
#include "hardylab/spectral.hpp"

#include "json.hpp"

#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace hardylab::cli {

using nlohmann::json;

inline constexpr std::string_view kToolName = "hardylab";
inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::uint64_t kDefaultSeed = 0xA4D1;

enum class TaskKind { Potential, Identity, Sharpness, Audit, Heisenberg, Eigen };

inline constexpr std::array<std::pair<TaskKind, std::string_view>, 6> kTaskNames{{
    {TaskKind::Potential, "potential"},
    {TaskKind::Identity, "identity"},
    {TaskKind::Sharpness, "sharpness"},
    {TaskKind::Audit, "audit"},
    {TaskKind::Heisenberg, "heisenberg"},
    {TaskKind::Eigen, "eigen"},
}};

inline std::string_view to_string(TaskKind k) {
  for (const auto& [kind, name] : kTaskNames)
    if (kind == k) return name;
  return "?";
}

inline TaskKind parse_task(std::string_view s) {
  for (const auto& [kind, name] : kTaskNames)
    if (name == s) return kind;
  throw Error(ErrorKind::InvalidArgument, "unknown task: " + std::string(s));
}

// ---- number formatting -----------------------------------------------------

/// Shortest form up to 17 significant digits; round-trips every double.
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

inline std::string fmt(bool b) { return b ? "true" : "false"; }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(const std::string& s) { return s; }

class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  template <typename... Ts>
  void row(const Ts&... cells) {
    std::vector<std::string> r{fmt(cells)...};
    if (r.size() != header_.size()) throw Error(ErrorKind::InvalidArgument, "csv row width");
    rows_.push_back(std::move(r));
  }
  void row_cells(std::vector<std::string> r) {
    if (r.size() != header_.size()) throw Error(ErrorKind::InvalidArgument, "csv row width");
    rows_.push_back(std::move(r));
  }

  std::size_t size() const noexcept { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// ---- JSON readers ----------------------------------------------------------

namespace detail {

inline Error config_error(const std::string& what) {
  return Error(ErrorKind::InvalidArgument, what);
}

inline double number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw config_error(std::string("expected number '") + key + "'");
  return j.at(key).get<double>();
}

inline double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  return number(j, key);
}

inline std::vector<double> numbers(const json& j) {
  if (!j.is_array()) throw config_error("expected an array of numbers");
  std::vector<double> v;
  for (const auto& e : j) {
    if (!e.is_number()) throw config_error("expected an array of numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

inline Vec point(const json& j, int dim) {
  const std::vector<double> v = numbers(j);
  if (static_cast<int>(v.size()) != dim) throw config_error("point has wrong dimension");
  Vec p(dim);
  for (int k = 0; k < dim; ++k) p[k] = v[k];
  return p;
}

} // namespace detail

/// Named potential families: power_mean, geometric_mean, max, min, f_mean,
/// cross_term, sum, remainder, heisenberg_weight.
inline PotentialFamily parse_family(const json& j, std::vector<std::string>* warnings = nullptr) {
  std::string name;
  if (j.is_string()) name = j.get<std::string>();
  else if (j.is_object() && j.contains("family") && j.at("family").is_string())
    name = j.at("family").get<std::string>();
  else throw detail::config_error("potential needs a 'family' name");
  const json params = j.is_object() ? j : json::object();
  if (name == "power_mean") {
    const double l = detail::number(params, "lambda");
    if (l == 0.0) {
      if (warnings) warnings->push_back("power_mean with lambda = 0 rewritten to geometric_mean");
      return family::GeometricMean{};
    }
    return family::PowerMean{l};
  }
  if (name == "geometric_mean") return family::GeometricMean{};
  if (name == "max") return family::MaxInverseSquare{};
  if (name == "min") return family::MinInverseSquare{};
  if (name == "f_mean") {
    const std::string f = params.value("f", std::string("log"));
    if (f == "log") return fmean_log();
    if (f == "power") return fmean_power(detail::number(params, "p"));
    throw detail::config_error("unknown f-mean: " + f);
  }
  if (name == "cross_term") return family::CrossTerm{};
  if (name == "sum") return family::SumInverseSquare{};
  if (name == "remainder") return family::Remainder{};
  if (name == "heisenberg_weight") return family::HeisenbergWeight{detail::number(params, "lambda")};
  throw detail::config_error("unknown potential family: " + name);
}

/// {"box": {"lo", "hi"}}, {"ball": {"center", "radius"}}, {"union_balls": [...]},
/// "whole_space" or {"whole_space": {"tail": "compactify"|"truncate"}}.
inline Domain parse_domain(const json& j, int dim) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "whole_space") return WholeSpaceDomain{};
    if (s == "unit_cube") {
      Vec one(dim);
      for (int k = 0; k < dim; ++k) one[k] = 1.0;
      return BoxDomain{Vec(dim), one};
    }
    throw detail::config_error("unknown domain: " + s);
  }
  if (!j.is_object() || j.size() != 1) throw detail::config_error("domain needs exactly one key");
  const auto& [key, body] = *j.items().begin();
  if (key == "box") return BoxDomain{detail::point(body.at("lo"), dim), detail::point(body.at("hi"), dim)};
  if (key == "ball")
    return BallDomain{detail::point(body.at("center"), dim), detail::number(body, "radius")};
  if (key == "union_balls") {
    UnionBallsDomain u;
    for (const auto& b : body)
      u.balls.push_back({detail::point(b.at("center"), dim), detail::number(b, "radius")});
    return u;
  }
  if (key == "whole_space") {
    const std::string tail = body.value("tail", std::string("compactify"));
    if (tail == "compactify") return WholeSpaceDomain{TailPolicy::Compactify};
    if (tail == "truncate") return WholeSpaceDomain{TailPolicy::Truncate};
    throw detail::config_error("unknown tail policy: " + tail);
  }
  throw detail::config_error("unknown domain: " + key);
}

/// Field by "kind" name with its parameters; optional "scale".
inline ScalarField parse_field(const json& j, const std::shared_ptr<const PoleConfiguration>& cfg) {
  if (!j.is_object() || !j.contains("kind")) throw detail::config_error("field needs a 'kind'");
  const std::string k = j.at("kind").get<std::string>();
  const int dim = cfg->dim();
  const double scale = detail::number_or(j, "scale", 1.0);
  auto make = [&](FieldKind fk) { return ScalarField(cfg, std::move(fk), scale); };
  if (k == "ground_state_max") return make(kind::GroundStateMax{});
  if (k == "ground_state_min") return make(kind::GroundStateMin{});
  if (k == "product_power") return make(kind::ProductPower{detail::number(j, "beta")});
  if (k == "sum_power") return make(kind::SumPower{});
  if (k == "cutoff_log")
    return make(kind::CutoffLog{detail::number(j, "eps"), j.value("pole", 0)});
  if (k == "minimizer_max")
    return make_minimizer(cfg, detail::number(j, "eps"), MinimizerVariant::Max).scaled(scale);
  if (k == "minimizer_min")
    return make_minimizer(cfg, detail::number(j, "eps"), MinimizerVariant::Min).scaled(scale);
  if (k == "bump")
    return make(kind::Bump{detail::point(j.at("center"), dim), detail::number(j, "radius")});
  if (k == "gaussian")
    return make(kind::Gaussian{detail::point(j.at("center"), dim), detail::number(j, "sigma")});
  if (k == "linear") return make(kind::Linear{detail::point(j.at("coeffs"), dim)});
  if (k == "product") {
    std::vector<kind::Factor> fs;
    for (const auto& f : j.at("factors"))
      fs.push_back(factor(parse_field(f.at("field"), cfg), detail::number_or(f, "exponent", 1.0)));
    return make_product(std::move(fs)).scaled(scale);
  }
  throw detail::config_error("unknown field kind: " + k);
}

/// Pole configuration from "poles", optional "dimension" and "weights"
/// (array, "uniform" or omitted).
inline std::shared_ptr<const PoleConfiguration> parse_poles(const json& j) {
  if (!j.contains("poles") || !j.at("poles").is_array() || j.at("poles").empty())
    throw Error(ErrorKind::InvalidConfiguration, "config needs a non-empty 'poles' array");
  const json& ps = j.at("poles");
  const int dim = j.contains("dimension") ? j.at("dimension").get<int>()
                                          : static_cast<int>(ps.at(0).size());
  if (dim < 3 || dim > kMaxDim)
    throw Error(ErrorKind::InvalidConfiguration, "dimension must be in [3, 8]");
  std::vector<Vec> poles;
  for (const auto& p : ps) poles.push_back(detail::point(p, dim));
  if (poles.size() >= 2) min_pairwise_distance(poles);
  if (!j.contains("weights") ||
      (j.at("weights").is_string() && j.at("weights").get<std::string>() == "uniform"))
    return std::make_shared<const PoleConfiguration>(dim, std::move(poles));
  std::vector<double> w = detail::numbers(j.at("weights"));
  if (w.size() != poles.size())
    throw Error(ErrorKind::InvalidConfiguration, "weights and poles differ in length");
  double sum = 0.0;
  for (double x : w) sum += x;
  if (!(std::abs(sum - 1.0) <= 1e-9))
    throw Error(ErrorKind::InvalidConfiguration, "weights must sum to 1");
  for (double& x : w) x /= sum;
  return std::make_shared<const PoleConfiguration>(dim, std::move(poles), std::move(w));
}

// ---- task parameters -------------------------------------------------------

struct PotentialTask {
  PotentialFamily family;
  std::string family_name;
  std::vector<Vec> points;
};

struct IdentityTask {
  ScalarField u;
  GroundState ground_state;
  std::vector<double> alphas;
  Domain domain;
};

struct SharpnessTask {
  MinimizerVariant variant;
  std::vector<double> schedule;
};

struct AuditCase {
  InequalityId id;
  std::string label;
  AuditParams params;
};

struct AuditTask {
  std::vector<AuditCase> cases;
  std::vector<std::pair<std::string, ScalarField>> fields;
};

struct HeisenbergTask {
  ScalarField u;
  std::vector<double> lambdas;
  Domain domain;
};

enum class EigenMode { BestConstant, ShrinkingBalls, Laplacian };

struct EigenTask {
  EigenMode mode;
  BoxDomain box;
  PotentialFamily family;
  std::vector<double> h_list;
  /// rho = rho_factor * h + rho_abs.
  double rho_factor;
  double rho_abs;
  std::vector<double> radii;
  int nodes_per_radius;
  double eig_tol;
};

using TaskParams = std::variant<PotentialTask, IdentityTask, SharpnessTask, AuditTask,
                                HeisenbergTask, EigenTask>;

struct TaskConfig {
  TaskKind kind;
  json raw;
  TaskParams params;
};

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_nodes;
  std::optional<bool> parallel;
  std::optional<std::string> out;
  std::optional<std::string> h_list;
  std::optional<std::string> rho;
  std::optional<std::string> domain;
  std::optional<std::string> potential;
};

struct RunConfig {
  std::shared_ptr<const PoleConfiguration> poles;
  json raw;
  std::vector<TaskConfig> tasks;
  double tol = 1e-6;
  std::uint64_t seed = kDefaultSeed;
  std::size_t max_nodes = 40'000'000;
  bool parallel = false;
  std::filesystem::path out = "hardylab-out";
  std::vector<std::string> warnings;

  IntegrationOptions integration() const {
    IntegrationOptions opt;
    opt.rel_tol = tol;
    opt.max_nodes = max_nodes;
    opt.seed = seed;
    opt.reference_length = poles->length_scale(1.0);
    return opt;
  }
};

/// Bumps with support inside `omega` (or near the poles when absent), drawn
/// from a seeded generator.
inline std::vector<ScalarField> bump_corpus(const std::shared_ptr<const PoleConfiguration>& cfg,
                                            int count, std::uint64_t seed,
                                            const std::optional<Domain>& omega = std::nullopt) {
  const int dim = cfg->dim();
  const double ell = cfg->length_scale(1.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<ScalarField> out;
  Vec lo(dim), hi(dim);
  const Vec c = cfg->centroid();
  const double span = cfg->extent() + ell;
  for (int k = 0; k < dim; ++k) {
    lo[k] = c[k] - span;
    hi[k] = c[k] + span;
  }
  if (omega) {
    if (auto* b = std::get_if<BoxDomain>(&*omega)) {
      lo = b->lo;
      hi = b->hi;
    } else if (auto* s = std::get_if<BallDomain>(&*omega)) {
      for (int k = 0; k < dim; ++k) {
        lo[k] = s->center[k] - s->radius;
        hi[k] = s->center[k] + s->radius;
      }
    } else {
      throw detail::config_error("bump corpus domain must be a box or a ball");
    }
  }
  while (static_cast<int>(out.size()) < count) {
    Vec x(dim);
    for (int k = 0; k < dim; ++k) x[k] = lo[k] + (hi[k] - lo[k]) * uni(rng);
    double room = std::numeric_limits<double>::infinity();
    if (omega) {
      if (auto* b = std::get_if<BoxDomain>(&*omega)) {
        for (int k = 0; k < dim; ++k) room = std::min({room, x[k] - b->lo[k], b->hi[k] - x[k]});
      } else {
        const auto& s = std::get<BallDomain>(*omega);
        room = s.radius - distance(x, s.center);
      }
    }
    double r = ell * (0.2 + 0.8 * uni(rng));
    if (omega) r = std::min(r, 0.999 * room);
    if (!(r > 0.05 * ell)) continue;
    out.emplace_back(cfg, kind::Bump{x, r});
  }
  return out;
}

namespace detail {

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    double x = 0.0;
    auto r = std::from_chars(item.data(), item.data() + item.size(), x);
    if (r.ec != std::errc() || r.ptr != item.data() + item.size())
      throw config_error("bad number in list: " + item);
    v.push_back(x);
  }
  return v;
}

inline json text_or_json(const std::string& s) {
  if (!s.empty() && (s.front() == '{' || s.front() == '[')) return json::parse(s);
  return json(s);
}

inline std::vector<double> schedule_of(const json& p, const char* key, std::vector<double> fallback) {
  return p.contains(key) ? numbers(p.at(key)) : std::move(fallback);
}

inline void check_decreasing(const std::vector<double>& v, const char* what) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) throw config_error(std::string(what) + " must be decreasing");
}

inline std::string family_label(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  std::string s = j.value("family", std::string("?"));
  if (j.contains("lambda")) s += "(lambda=" + fmt(j.at("lambda").get<double>()) + ")";
  return s;
}

inline TaskParams build_task(TaskKind kind, const json& p, const RunConfig& rc, std::size_t index,
                             const Overrides& ov, std::vector<std::string>& warnings) {
  const auto& cfg = rc.poles;
  const int dim = cfg->dim();
  const double ell = cfg->length_scale(1.0);
  switch (kind) {
  case TaskKind::Potential: {
    json fam = p.contains("potential") ? p.at("potential") : json{{"family", "power_mean"}, {"lambda", 1.0}};
    if (ov.potential) fam = text_or_json(*ov.potential);
    PotentialTask t{parse_family(fam, &warnings), family_label(fam), {}};
    PotentialSpec check(cfg, t.family);
    (void)check;
    if (p.contains("points")) {
      for (const auto& x : p.at("points")) t.points.push_back(point(x, dim));
    } else {
      const int samples = p.value("samples", 100);
      if (samples < 0) throw config_error("samples must be nonnegative");
      std::mt19937_64 rng(rc.seed + index);
      std::uniform_real_distribution<double> uni(-1.0, 1.0);
      const Vec c = cfg->centroid();
      const double span = cfg->extent() + ell;
      while (static_cast<int>(t.points.size()) < samples) {
        Vec x(dim);
        for (int k = 0; k < dim; ++k) x[k] = c[k] + span * uni(rng);
        if (cfg->pole_index_at(x) < 0) t.points.push_back(x);
      }
    }
    return t;
  }
  case TaskKind::Identity: {
    const std::vector<double> a0(cfg->pole(0).c.begin(), cfg->pole(0).c.begin() + dim);
    json f = p.contains("field") ? p.at("field")
                                 : json{{"kind", "bump"},
                                        {"center", a0},
                                        {"radius", cfg->size() > 1 ? 0.4 * ell : 1.0}};
    const std::string gs = p.value("ground_state", std::string("max"));
    if (gs != "max" && gs != "min") throw config_error("ground_state must be max or min");
    IdentityTask t{parse_field(f, cfg), gs == "max" ? GroundState::Max : GroundState::Min,
                   schedule_of(p, "alphas", {1.0, 0.0, 0.5, 2.0}),
                   p.contains("domain") ? parse_domain(p.at("domain"), dim) : Domain{WholeSpaceDomain{}}};
    if (t.alphas.empty()) throw config_error("alphas must be non-empty");
    return t;
  }
  case TaskKind::Sharpness: {
    const std::string v = p.value("variant", std::string("max"));
    if (v != "max" && v != "min") throw config_error("variant must be max or min");
    SharpnessTask t{v == "max" ? MinimizerVariant::Max : MinimizerVariant::Min,
                    schedule_of(p, "schedule", {0.2, 0.1, 0.05, 0.02, 0.01})};
    if (t.schedule.size() < 2) throw config_error("schedule needs >= 2 values");
    check_decreasing(t.schedule, "eps schedule");
    const double cap = std::min(0.5, 0.5 * cfg->min_separation());
    for (double e : t.schedule)
      if (!(e > 0.0 && e < cap)) throw config_error("eps outside (0, min(1/2, d/2))");
    return t;
  }
  case TaskKind::Audit: {
    AuditTask t;
    AuditParams base;
    base.q = number_or(p, "q", 2.0);
    base.k_n = number_or(p, "k_n", base.k_n);
    if (p.contains("mu")) base.mu = number(p, "mu");
    if (p.contains("omega")) base.omega = parse_domain(p.at("omega"), dim);
    std::vector<std::string> ids;
    if (p.contains("ids")) {
      ids = p.at("ids").get<std::vector<std::string>>();
    } else {
      for (const auto& [id, name] : kInequalityNames) {
        if (id == InequalityId::BDE && cfg->size() < 2) continue;
        if ((id == InequalityId::T4_1 || id == InequalityId::T4_2) && !base.omega) continue;
        ids.emplace_back(name);
      }
    }
    const std::vector<double> lambdas = schedule_of(p, "lambdas", {-1.0, 0.0, 1.0, 2.0});
    for (const std::string& s : ids) {
      const InequalityId id = parse_inequality(s);
      if ((id == InequalityId::T4_1 || id == InequalityId::T4_2) && !base.omega)
        throw config_error(s + " needs an 'omega' domain");
      if (id == InequalityId::BDE && cfg->size() < 2)
        throw config_error("BDE needs at least two poles");
      if (id == InequalityId::C2_3) {
        for (double l : lambdas) {
          AuditParams a = base;
          a.lambda = l;
          t.cases.push_back({id, s + "[lambda=" + fmt(l) + "]", a});
        }
      } else {
        t.cases.push_back({id, s, base});
      }
    }
    if (p.contains("fields"))
      for (std::size_t i = 0; i < p.at("fields").size(); ++i)
        t.fields.emplace_back("field" + std::to_string(i), parse_field(p.at("fields").at(i), cfg));
    const int nb = p.value("random_bumps", p.contains("fields") ? 0 : 10);
    if (nb < 0) throw config_error("random_bumps must be nonnegative");
    const auto bumps = bump_corpus(cfg, nb, rc.seed + index, base.omega);
    for (std::size_t i = 0; i < bumps.size(); ++i)
      t.fields.emplace_back("bump" + std::to_string(i), bumps[i]);
    return t;
  }
  case TaskKind::Heisenberg: {
    std::vector<double> c(cfg->centroid().c.begin(), cfg->centroid().c.begin() + dim);
    json f = p.contains("field") ? p.at("field")
                                 : json{{"kind", "gaussian"}, {"center", c}, {"sigma", 1.0}};
    HeisenbergTask t{parse_field(f, cfg), schedule_of(p, "lambdas", {1.0}),
                     p.contains("domain") ? parse_domain(p.at("domain"), dim) : Domain{WholeSpaceDomain{}}};
    if (t.lambdas.empty()) throw config_error("lambdas must be non-empty");
    return t;
  }
  case TaskKind::Eigen: {
    if (dim != 3) throw Error(ErrorKind::InvalidGrid, "grid solver needs N = 3");
    const std::string mode = p.value("mode", std::string("best_constant"));
    EigenTask t{};
    if (mode == "best_constant") t.mode = EigenMode::BestConstant;
    else if (mode == "shrinking_balls") t.mode = EigenMode::ShrinkingBalls;
    else if (mode == "laplacian") t.mode = EigenMode::Laplacian;
    else throw config_error("unknown eigen mode: " + mode);
    json dom = p.contains("domain") ? p.at("domain")
                                    : json{{"box", {{"lo", {0.0, 0.0, 0.0}}, {"hi", {1.0, 1.0, 1.0}}}}};
    if (ov.domain) dom = text_or_json(*ov.domain);
    const Domain d = parse_domain(dom, dim);
    if (!std::holds_alternative<BoxDomain>(d)) throw Error(ErrorKind::InvalidGrid, "grid domain must be a box");
    t.box = std::get<BoxDomain>(d);
    json fam = p.contains("potential") ? p.at("potential") : json("sum");
    if (ov.potential) fam = text_or_json(*ov.potential);
    t.family = parse_family(fam, &warnings);
    t.h_list = schedule_of(p, "h_list", {1.0 / 16, 1.0 / 32, 1.0 / 64});
    if (ov.h_list) t.h_list = parse_list(*ov.h_list);
    check_decreasing(t.h_list, "h_list");
    if (t.mode != EigenMode::ShrinkingBalls && t.h_list.size() < 2)
      throw config_error("h_list needs >= 2 entries");
    std::string rho = "h";
    if (p.contains("rho")) rho = p.at("rho").is_string() ? p.at("rho").get<std::string>() : fmt(p.at("rho").get<double>());
    if (ov.rho) rho = *ov.rho;
    if (!rho.empty() && rho.back() == 'h') {
      const std::string f = rho.substr(0, rho.size() - 1);
      t.rho_factor = f.empty() ? 1.0 : parse_list(f).at(0);
      t.rho_abs = 0.0;
    } else {
      t.rho_factor = 0.0;
      t.rho_abs = parse_list(rho).at(0);
    }
    t.radii = schedule_of(p, "radii", {});
    if (t.mode == EigenMode::ShrinkingBalls) {
      if (t.radii.empty()) {
        const double r0 = cfg->size() > 1 ? 0.4 * cfg->min_separation() : 0.5;
        for (int k = 0; k <= 4; ++k) t.radii.push_back(r0 / std::pow(2.0, k));
      }
      check_decreasing(t.radii, "radii");
    }
    t.nodes_per_radius = p.value("nodes_per_radius", 16);
    t.eig_tol = number_or(p, "eig_tol", 1e-9);
    return t;
  }
  }
  throw config_error("unknown task");
}

} // namespace detail

/// Parses and range-checks a JSON run configuration. `default_task` names the
/// task used for entries without an explicit "task" and for a config without
/// a "tasks" array.
inline RunConfig validate_config(const std::string& text, std::optional<TaskKind> default_task,
                                 const Overrides& ov = {}) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
  RunConfig rc;
  rc.raw = j;
  try {
    rc.poles = parse_poles(j);
    rc.tol = ov.tol.value_or(detail::number_or(j, "tol", rc.tol));
    if (!(rc.tol > 0.0 && rc.tol < 1.0)) throw detail::config_error("tol must lie in (0, 1)");
    if (ov.seed) rc.seed = *ov.seed;
    else if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
    if (ov.max_nodes) rc.max_nodes = *ov.max_nodes;
    else if (j.contains("max_nodes")) rc.max_nodes = j.at("max_nodes").get<std::size_t>();
    rc.parallel = ov.parallel.value_or(j.value("parallel", false));
    if (ov.out) rc.out = *ov.out;
    else if (j.contains("output")) rc.out = j.at("output").get<std::string>();
    if (const char* env = std::getenv("HARDYLAB_OUT"); env && *env) rc.out = env;

    std::vector<json> entries;
    if (j.contains("tasks")) {
      if (!j.at("tasks").is_array()) throw detail::config_error("'tasks' must be an array");
      for (const auto& t : j.at("tasks")) entries.push_back(t);
    } else if (default_task) {
      entries.push_back(json::object());
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const json& e = entries[i];
      if (!e.is_object()) throw detail::config_error("task entries must be objects");
      TaskKind k;
      if (e.contains("task")) k = parse_task(e.at("task").get<std::string>());
      else if (default_task) k = *default_task;
      else throw detail::config_error("task entry without 'task'");
      rc.tasks.push_back({k, e, detail::build_task(k, e, rc, i, ov, rc.warnings)});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
  return rc;
}

// ---- execution -------------------------------------------------------------

struct TaskOutcome {
  std::size_t index;
  TaskKind kind;
  bool pass = false;
  std::string csv;
  json summary = json::object();
  std::optional<std::string> error;
  /// File stem for `<stem>.csv`.
  std::string stem;
};

namespace detail {

inline TaskOutcome run_one(const TaskConfig& task, const RunConfig& rc, std::size_t index) {
  TaskOutcome out;
  out.index = index;
  out.kind = task.kind;
  const auto& cfg = rc.poles;
  const IntegrationOptions opt = rc.integration();
  const int dim = cfg->dim();

  if (auto* t = std::get_if<PotentialTask>(&task.params)) {
    std::vector<std::string> head{"index"};
    for (int k = 0; k < dim; ++k) head.push_back("x" + std::to_string(k));
    head.push_back("value");
    CsvTable csv(head);
    const PotentialSpec v(cfg, t->family);
    bool ok = true;
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (std::size_t i = 0; i < t->points.size(); ++i) {
      const double val = v.eval(t->points[i]);
      ok = ok && std::isfinite(val) && val >= 0.0;
      vmin = std::min(vmin, val);
      vmax = std::max(vmax, val);
      std::vector<std::string> r{fmt(i)};
      for (int k = 0; k < dim; ++k) r.push_back(fmt(t->points[i][k]));
      r.push_back(fmt(val));
      csv.row_cells(std::move(r));
    }
    out.pass = ok;
    out.csv = csv.str();
    out.summary = {{"family", t->family_name}, {"points", t->points.size()}};
    if (!t->points.empty()) out.summary["min"] = vmin, out.summary["max"] = vmax;
    return out;
  }

  if (auto* t = std::get_if<IdentityTask>(&task.params)) {
    CsvTable csv({"alpha", "lhs", "rhs", "residual", "error", "pass"});
    const ScalarField phi(cfg, t->ground_state == GroundState::Max ? FieldKind{kind::GroundStateMax{}}
                                                                    : FieldKind{kind::GroundStateMin{}});
    bool all = true;
    double worst = 0.0;
    for (double a : t->alphas) {
      const IdentityResidual r = hardy_identity_residual(t->u, phi, t->domain, a, opt);
      const bool ok = r.residual <= 3.0 * r.error;
      all = all && ok;
      worst = std::max(worst, r.error > 0.0 ? r.residual / r.error : r.residual);
      csv.row(a, r.lhs, r.rhs, r.residual, r.error, ok);
    }
    out.pass = all;
    out.csv = csv.str();
    out.summary = {{"rows", t->alphas.size()}, {"worst_residual_over_error", worst}};
    return out;
  }

  if (auto* t = std::get_if<SharpnessTask>(&task.params)) {
    const PotentialSpec v(cfg, t->variant == MinimizerVariant::Max
                                   ? PotentialFamily{family::MaxInverseSquare{}}
                                   : PotentialFamily{family::MinInverseSquare{}});
    const SweepReport rep = sharpness_sweep(v, t->schedule, opt);
    CsvTable csv({"eps", "quotient", "numerator", "denominator", "fit_c", "fit_limit", "fit_r_squared"});
    for (const auto& r : rep.records)
      csv.row(r.eps, r.quotient, r.numerator.value, r.denominator.value, rep.fit.c, rep.fit.limit,
              rep.fit.r_squared);
    const bool fit_ok = rep.fit.r_squared >= 0.98;
    const bool limit_ok = std::abs(rep.fit.limit - rep.reference) <= 0.05 * rep.reference;
    out.pass = rep.strictly_decreasing && fit_ok && limit_ok;
    out.csv = csv.str();
    out.summary = {{"strictly_decreasing", rep.strictly_decreasing},
                   {"fit_c", rep.fit.c},
                   {"fit_limit", rep.fit.limit},
                   {"fit_r_squared", rep.fit.r_squared},
                   {"reference", rep.reference}};
    return out;
  }

  if (auto* t = std::get_if<AuditTask>(&task.params)) {
    CsvTable csv({"id", "test_function", "lhs", "rhs", "margin", "error", "pass"});
    json failures = json::array();
    std::optional<double> min_implied;
    for (const auto& c : t->cases)
      for (const auto& [label, u] : t->fields) {
        const AuditReport r = inequality_audit(u, c.id, c.params, opt);
        csv.row(c.label, label, r.lhs, r.rhs, r.margin, r.error, r.pass);
        if (!r.pass) failures.push_back({{"id", c.label}, {"test_function", label}, {"margin", r.margin}});
        if (r.implied_constant)
          min_implied = std::min(min_implied.value_or(*r.implied_constant), *r.implied_constant);
      }
    out.pass = failures.empty();
    out.csv = csv.str();
    out.summary = {{"rows", csv.size()}, {"failures", failures}};
    if (min_implied) out.summary["min_implied_constant"] = *min_implied;
    return out;
  }

  if (auto* t = std::get_if<HeisenbergTask>(&task.params)) {
    CsvTable csv({"lambda", "product", "gradient", "weighted", "mass", "error", "pass"});
    const double bound = hardy_constant(dim);
    bool all = true;
    double pmin = std::numeric_limits<double>::infinity();
    for (double l : t->lambdas) {
      const HeisenbergResult r = heisenberg_product_detail(t->u, l, t->domain, opt);
      const bool ok = r.product >= bound - 3.0 * r.error();
      all = all && ok;
      pmin = std::min(pmin, r.product);
      csv.row(l, r.product, r.gradient.value, r.weighted.value, r.mass.value, r.error(), ok);
    }
    out.pass = all;
    out.csv = csv.str();
    out.summary = {{"bound", bound}, {"min_product", pmin}};
    return out;
  }

  const auto& t = std::get<EigenTask>(task.params);
  const auto rho_of = [&t](double h) { return t.rho_factor * h + t.rho_abs; };
  if (t.mode == EigenMode::Laplacian) {
    CsvTable csv({"h", "mu", "residual", "iterations", "extrapolated"});
    std::vector<EigenEstimate> runs;
    for (double h : t.h_list) runs.push_back(min_generalized_eig(assemble_laplacian(t.box, h), t.eig_tol));
    const std::size_t k = runs.size();
    const double ex = richardson(runs[k - 2].h, runs[k - 2].mu, runs[k - 1].h, runs[k - 1].mu);
    for (std::size_t i = 0; i < k; ++i)
      csv.row_cells({fmt(runs[i].h), fmt(runs[i].mu), fmt(runs[i].residual), fmt(runs[i].iterations),
                     i + 1 == k ? fmt(ex) : std::string()});
    double exact = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double side = t.box.hi[a] - t.box.lo[a];
      exact += std::numbers::pi * std::numbers::pi / (side * side);
    }
    out.pass = std::abs(ex - exact) <= 0.01 * exact;
    out.csv = csv.str();
    out.summary = {{"mode", "laplacian"}, {"extrapolated", ex}, {"exact", exact}};
    return out;
  }
  const PotentialSpec v(cfg, t.family);
  if (t.mode == EigenMode::BestConstant) {
    const BestConstantReport rep = best_constant_estimate(t.box, v, t.h_list, rho_of, t.eig_tol);
    CsvTable csv({"h", "rho", "mu", "residual", "iterations", "extrapolated"});
    for (std::size_t i = 0; i < rep.runs.size(); ++i) {
      const auto& r = rep.runs[i];
      csv.row_cells({fmt(r.h), fmt(r.rho), fmt(r.mu), fmt(r.residual), fmt(r.iterations),
                     r.extrapolated ? fmt(*r.extrapolated) : std::string()});
    }
    out.pass = rep.in_range;
    out.csv = csv.str();
    out.summary = {{"mode", "best_constant"}, {"extrapolated", rep.extrapolated},
                   {"margin", rep.margin},    {"lower", rep.lower},
                   {"upper", rep.upper},      {"in_range", rep.in_range}};
    if (rep.observed_order) out.summary["observed_order"] = *rep.observed_order;
    return out;
  }
  const auto recs = shrinking_balls_study(*cfg, t.radii, t.nodes_per_radius, t.eig_tol);
  CsvTable csv({"r", "mu", "residual", "iterations", "w1_min", "w1_max"});
  const double hc = hardy_constant(dim);
  bool increasing = true, toward = true;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    csv.row(r.r, r.estimate.mu, r.estimate.residual, r.estimate.iterations, r.w1_min, r.w1_max);
    if (i > 0) {
      increasing = increasing && r.estimate.mu > recs[i - 1].estimate.mu;
      toward = toward && std::abs(r.estimate.mu - hc) <= std::abs(recs[i - 1].estimate.mu - hc);
    }
  }
  const double final_mu = recs.empty() ? 0.0 : recs.back().estimate.mu;
  const bool final_ok = final_mu >= hc - 0.03;
  out.pass = increasing && toward && final_ok;
  out.csv = csv.str();
  out.summary = {{"mode", "shrinking_balls"}, {"increasing", increasing},
                 {"toward_reference", toward}, {"final", final_mu}, {"reference", hc}};
  return out;
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp.string());
    f << text;
    if (!f.flush()) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

} // namespace detail

/// Executes every task, writes `<out>/<task>.csv` per task and
/// `<out>/manifest.json`, and returns the manifest.
inline json run(const RunConfig& rc) {
  const std::string started = detail::utc_now();
  std::filesystem::create_directories(rc.out);

  std::vector<TaskOutcome> outcomes(rc.tasks.size());
  auto job = [&rc](std::size_t i) {
    try {
      return detail::run_one(rc.tasks[i], rc, i);
    } catch (const std::exception& e) {
      TaskOutcome o;
      o.index = i;
      o.kind = rc.tasks[i].kind;
      o.error = e.what();
      return o;
    }
  };
  if (rc.parallel) {
    std::vector<std::future<TaskOutcome>> fs;
    for (std::size_t i = 0; i < rc.tasks.size(); ++i) fs.push_back(std::async(std::launch::async, job, i));
    for (std::size_t i = 0; i < fs.size(); ++i) outcomes[i] = fs[i].get();
  } else {
    for (std::size_t i = 0; i < rc.tasks.size(); ++i) outcomes[i] = job(i);
  }

  std::map<TaskKind, int> counts;
  for (const auto& t : rc.tasks) ++counts[t.kind];
  json tasks = json::array();
  int passed = 0;
  for (auto& o : outcomes) {
    o.stem = std::string(to_string(o.kind));
    if (counts[o.kind] > 1) o.stem += "_" + std::to_string(o.index);
    json entry = {{"index", o.index}, {"task", to_string(o.kind)}, {"pass", o.pass && !o.error},
                  {"summary", o.summary}};
    if (o.error) {
      entry["error"] = *o.error;
      entry["files"] = json::array();
    } else {
      detail::write_atomic(rc.out / (o.stem + ".csv"), o.csv);
      json files = {o.stem + ".csv"};
      if (o.kind == TaskKind::Eigen) {
        detail::write_atomic(rc.out / (o.stem + ".json"), o.summary.dump(2) + "\n");
        files.push_back(o.stem + ".json");
      }
      entry["files"] = files;
    }
    if (o.pass && !o.error) ++passed;
    tasks.push_back(std::move(entry));
  }
  const int executed = static_cast<int>(outcomes.size());
  json manifest = {
      {"tool", kToolName},
      {"version", kVersion},
      {"config", rc.raw},
      {"seed", rc.seed},
      {"tol", rc.tol},
      {"max_nodes", rc.max_nodes},
      {"started", started},
      {"finished", detail::utc_now()},
      {"warnings", rc.warnings},
      {"tasks", tasks},
      {"summary", {{"executed", executed}, {"passed", passed}, {"failed", executed - passed},
                   {"pass", passed == executed}}},
  };
  detail::write_atomic(rc.out / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

/// Per-task pass/fail lines with headline numbers; ends with PASS or FAIL.
inline std::string emit_report(const json& manifest) {
  std::ostringstream os;
  for (const auto& w : manifest.value("warnings", json::array()))
    os << "warning: " << w.get<std::string>() << "\n";
  for (const auto& t : manifest.at("tasks")) {
    const bool pass = t.at("pass").get<bool>();
    const std::string task = t.at("task").get<std::string>();
    const json& s = t.at("summary");
    os << (pass ? "PASS " : "FAIL ") << task << " #" << t.at("index").get<std::size_t>();
    if (t.contains("error")) {
      os << ": error: " << t.at("error").get<std::string>() << "\n";
      continue;
    }
    if (task == "potential") {
      os << ": " << s.at("family").get<std::string>() << ", " << s.at("points") << " points";
    } else if (task == "identity") {
      os << ": worst residual/error " << fmt(s.at("worst_residual_over_error").get<double>());
    } else if (task == "sharpness") {
      os << ": fitted limit " << fmt(s.at("fit_limit").get<double>()) << " (R^2 "
         << fmt(s.at("fit_r_squared").get<double>()) << ", reference "
         << fmt(s.at("reference").get<double>()) << "), strictly decreasing "
         << (s.at("strictly_decreasing").get<bool>() ? "yes" : "no");
    } else if (task == "audit") {
      os << ": " << s.at("rows") << " rows";
      for (const auto& f : s.at("failures"))
        os << "\n  " << f.at("id").get<std::string>() << " on " << f.at("test_function").get<std::string>()
           << ": margin " << fmt(f.at("margin").get<double>());
    } else if (task == "heisenberg") {
      os << ": min product " << fmt(s.at("min_product").get<double>()) << " (bound "
         << fmt(s.at("bound").get<double>()) << ")";
    } else if (task == "eigen") {
      const std::string mode = s.at("mode").get<std::string>();
      if (mode == "best_constant") {
        os << ": mu_hat " << fmt(s.at("extrapolated").get<double>()) << " +- "
           << fmt(s.at("margin").get<double>()) << " versus (" << fmt(s.at("lower").get<double>())
           << ", " << fmt(s.at("upper").get<double>()) << "]";
      } else if (mode == "laplacian") {
        os << ": extrapolated " << fmt(s.at("extrapolated").get<double>()) << " versus "
           << fmt(s.at("exact").get<double>());
      } else {
        os << ": final mu_hat " << fmt(s.at("final").get<double>()) << ", increasing "
           << (s.at("increasing").get<bool>() ? "yes" : "no") << ", toward "
           << fmt(s.at("reference").get<double>()) << " "
           << (s.at("toward_reference").get<bool>() ? "yes" : "no");
      }
    }
    os << "\n";
  }
  const json& sum = manifest.at("summary");
  os << sum.at("passed") << "/" << sum.at("executed") << " tasks passed\n";
  os << (sum.at("pass").get<bool>() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

} // namespace hardylab::cli
