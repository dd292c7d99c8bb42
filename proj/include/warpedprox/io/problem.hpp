#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "warpedprox/catalog.hpp"
#include "warpedprox/policy.hpp"

namespace warpedprox::io {

struct Location {
  int line = 0;
  int column = 0;
};

// Malformed text: bad YAML, wrong node shape, unknown key.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, Location at, const std::string& what)
      : Error(source + ":" + std::to_string(at.line) + ":" + std::to_string(at.column) + ": " + what), at_(at) {}
  Location location() const { return at_; }

 private:
  Location at_;
};

// Well-formed file whose content fails a dimension or constant check.
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string key, const std::string& what) : ConfigError(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ScheduleSpec {
  enum class Rule { constant, geometric };
  Rule rule = Rule::constant;
  double value = 1.0;  // the constant, or the geometric start
  double ratio = 1.0;
  double floor = 0.0;

  static ScheduleSpec constant(double v) { return {Rule::constant, v, 1.0, 0.0}; }

  Schedule build() const {
    if (rule == Rule::constant) return constant_schedule(value);
    return geometric_schedule(value, ratio, floor);
  }
  double sup() const {
    if (rule == Rule::constant) return value;
    if (ratio > 1.0) return std::numeric_limits<double>::infinity();
    return std::max(value, floor);
  }
  double inf() const {
    if (rule == Rule::constant || ratio >= 1.0) return std::max(value, floor);
    return std::min(value, floor);
  }
  bool operator==(const ScheduleSpec&) const = default;
};

struct PolicySpec {
  enum class Kind { none, additive, inertial, memory };
  Kind kind = Kind::none;
  ScheduleSpec alpha = ScheduleSpec::constant(0.0);  // inertial
  std::vector<double> weights;                       // memory, oldest first
  std::vector<double> error;                         // e_n = error·decayⁿ
  double decay = 0.5;
  bool operator==(const PolicySpec&) const = default;
};

struct KernelSpec {
  std::string type = "identity";  // identity | scaled_identity | fbf | cubic_planar
  double scale = 1.0;
  std::vector<std::vector<double>> metric;  // fbf: W = metric·x, otherwise W = scale·Id
  double reach = 1.0;
  bool operator==(const KernelSpec&) const = default;
};

struct SolverSpec {
  std::string algo = "weak";  // weak | strong | fbf | tseng | coupled
  double epsilon = 1e-3;
  std::optional<ScheduleSpec> gamma;
  std::optional<ScheduleSpec> relaxation;
  std::size_t max_iter = 1000;
  double tol_residual = 1e-8;
  double tol_step = 1e-8;
  std::size_t stall_limit = 50;
  PolicySpec policy;
  bool operator==(const SolverSpec&) const = default;
};

struct PrimalSpec {
  Index dim = 0;
  OperatorSpec A;
  std::optional<OperatorSpec> C;
  std::vector<double> s;
  double alpha = 1.0, chi = 1.0, epsilon = 0.1;
  bool operator==(const PrimalSpec&) const = default;
};

struct DualSpec {
  Index dim = 0;
  OperatorSpec B;
  std::optional<OperatorSpec> D;
  std::vector<double> r;
  double beta = 1.0, kappa = 1.0, delta = 0.1;
  bool operator==(const DualSpec&) const = default;
};

struct CouplingSpec {
  std::size_t dual = 0;
  std::size_t primal = 0;
  std::vector<std::vector<double>> matrix;
  bool operator==(const CouplingSpec&) const = default;
};

struct SolutionSpec {
  std::vector<double> point;
  double tolerance = 1e-6;
  bool operator==(const SolutionSpec&) const = default;
};

// Key path → position in the source text. Ignored by equality.
struct SourceMap {
  std::string source;
  std::map<std::string, Location> at;
  bool operator==(const SourceMap&) const { return true; }
};

struct ProblemFile {
  std::string kind = "inclusion";  // inclusion | coupled
  // inclusion
  Index dim = 0;
  OperatorSpec A;
  std::optional<OperatorSpec> B;
  KernelSpec kernel;
  // coupled
  std::vector<PrimalSpec> primal;
  std::vector<DualSpec> dual;
  std::vector<CouplingSpec> couplings;

  SolverSpec solver;
  std::vector<double> start;               // empty: origin. Coupled: (x, v*)
  std::vector<std::vector<double>> zeros;  // tracked for Fejér gaps
  std::optional<SolutionSpec> solution;
  bool allow_nonmonotone = false;
  SourceMap where;

  bool operator==(const ProblemFile&) const = default;
};

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline Location where(const YAML::Node& n) {
  auto m = n.Mark();
  return {m.line + 1, m.column + 1};
}

class Reader {
 public:
  explicit Reader(std::string source) { map_.source = std::move(source); }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& what) const { throw ParseError(map_.source, where(n), what); }

  void note(const std::string& key, const YAML::Node& n) { map_.at[key] = where(n); }
  SourceMap take() { return std::move(map_); }

  void expect_map(const YAML::Node& n, const std::string& key) const {
    if (!n.IsMap()) fail(n, "'" + key + "' must be a mapping");
  }

  void allow_keys(const YAML::Node& n, const std::string& key, std::initializer_list<const char*> keys) const {
    expect_map(n, key);
    for (auto it = n.begin(); it != n.end(); ++it) {
      auto k = it->first.as<std::string>();
      bool ok = false;
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) fail(it->first, "unknown key '" + k + "' in '" + key + "'");
    }
  }

  double number(const YAML::Node& n, const std::string& key) {
    note(key, n);
    if (!n.IsScalar()) fail(n, "'" + key + "' must be a number");
    double v;
    try {
      v = n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, "'" + key + "' must be a number, got '" + n.Scalar() + "'");
    }
    if (!std::isfinite(v)) fail(n, "'" + key + "' must be finite");
    return v;
  }

  std::size_t count(const YAML::Node& n, const std::string& key) {
    double v = number(n, key);
    if (v < 0 || v != std::floor(v) || v > 1e15) fail(n, "'" + key + "' must be a nonnegative integer");
    return static_cast<std::size_t>(v);
  }

  bool flag(const YAML::Node& n, const std::string& key) {
    note(key, n);
    try {
      return n.as<bool>();
    } catch (const YAML::Exception&) {
      fail(n, "'" + key + "' must be true or false");
    }
  }

  std::string word(const YAML::Node& n, const std::string& key) {
    note(key, n);
    if (!n.IsScalar()) fail(n, "'" + key + "' must be a name");
    return n.Scalar();
  }

  std::vector<double> list(const YAML::Node& n, const std::string& key) {
    note(key, n);
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(number(n[i], key + "[" + std::to_string(i) + "]"));
    note(key, n);
    return out;
  }

  std::vector<std::vector<double>> rows(const YAML::Node& n, const std::string& key) {
    note(key, n);
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a list of rows");
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(list(n[i], key + "[" + std::to_string(i) + "]"));
    note(key, n);
    return out;
  }

  Param param(const YAML::Node& n, const std::string& key) {
    if (n.IsScalar()) return number(n, key);
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a number, a list or a list of rows");
    bool nested = n.size() > 0 && n[0].IsSequence();
    if (nested) return rows(n, key);
    return list(n, key);
  }

  OperatorSpec op(const YAML::Node& n, const std::string& key) {
    note(key, n);
    expect_map(n, key);
    OperatorSpec spec;
    if (!n["type"]) fail(n, "'" + key + "' needs a 'type'");
    for (auto it = n.begin(); it != n.end(); ++it) {
      auto k = it->first.as<std::string>();
      if (k == "type")
        spec.type = word(it->second, key + ".type");
      else
        spec.params[k] = param(it->second, key + "." + k);
    }
    return spec;
  }

  ScheduleSpec schedule(const YAML::Node& n, const std::string& key) {
    note(key, n);
    if (n.IsScalar()) return ScheduleSpec::constant(number(n, key));
    allow_keys(n, key, {"rule", "value", "start", "ratio", "floor"});
    ScheduleSpec s;
    std::string rule = n["rule"] ? word(n["rule"], key + ".rule") : "constant";
    if (rule == "constant") {
      if (!n["value"]) fail(n, "'" + key + "' needs a 'value'");
      if (n["start"] || n["ratio"] || n["floor"]) fail(n, "'" + key + "': a constant rule takes only 'value'");
      s.value = number(n["value"], key + ".value");
    } else if (rule == "geometric") {
      if (!n["start"] || !n["ratio"]) fail(n, "'" + key + "': a geometric rule needs 'start' and 'ratio'");
      if (n["value"]) fail(n, "'" + key + "': a geometric rule takes 'start', not 'value'");
      s.rule = ScheduleSpec::Rule::geometric;
      s.value = number(n["start"], key + ".start");
      s.ratio = number(n["ratio"], key + ".ratio");
      if (n["floor"]) s.floor = number(n["floor"], key + ".floor");
    } else {
      fail(n["rule"], "unknown schedule rule '" + rule + "' (constant, geometric)");
    }
    return s;
  }

  PolicySpec policy(const YAML::Node& n, const std::string& key) {
    note(key, n);
    allow_keys(n, key, {"type", "alpha", "weights", "error", "decay"});
    PolicySpec p;
    std::string type = n["type"] ? word(n["type"], key + ".type") : "none";
    auto only = [&](std::initializer_list<const char*> keys) {
      for (auto it = n.begin(); it != n.end(); ++it) {
        auto k = it->first.as<std::string>();
        bool ok = k == "type";
        for (const char* a : keys) ok = ok || k == a;
        if (!ok) fail(it->first, "policy '" + type + "' takes no '" + k + "'");
      }
    };
    if (type == "none") {
      only({});
    } else if (type == "additive") {
      only({"error", "decay"});
      p.kind = PolicySpec::Kind::additive;
      if (!n["error"]) fail(n, "additive policy needs 'error'");
    } else if (type == "inertial") {
      only({"alpha"});
      p.kind = PolicySpec::Kind::inertial;
      if (!n["alpha"]) fail(n, "inertial policy needs 'alpha'");
      p.alpha = schedule(n["alpha"], key + ".alpha");
    } else if (type == "memory") {
      only({"weights", "error", "decay"});
      p.kind = PolicySpec::Kind::memory;
      if (!n["weights"]) fail(n, "memory policy needs 'weights'");
      p.weights = list(n["weights"], key + ".weights");
    } else {
      fail(n["type"], "unknown policy '" + type + "' (none, additive, inertial, memory)");
    }
    if (n["error"]) p.error = list(n["error"], key + ".error");
    if (n["decay"]) p.decay = number(n["decay"], key + ".decay");
    return p;
  }

  KernelSpec kernel(const YAML::Node& n, const std::string& key) {
    note(key, n);
    allow_keys(n, key, {"type", "scale", "metric", "reach"});
    KernelSpec k;
    if (n["type"]) k.type = word(n["type"], key + ".type");
    if (n["scale"]) k.scale = number(n["scale"], key + ".scale");
    if (n["metric"]) k.metric = rows(n["metric"], key + ".metric");
    if (n["reach"]) k.reach = number(n["reach"], key + ".reach");
    return k;
  }

  SolverSpec solver(const YAML::Node& n, const std::string& key, SolverSpec s) {
    note(key, n);
    allow_keys(n, key,
               {"algo", "epsilon", "gamma", "relaxation", "max_iter", "tol_residual", "tol_step", "stall_limit", "policy"});
    if (n["algo"]) s.algo = word(n["algo"], key + ".algo");
    if (n["epsilon"]) s.epsilon = number(n["epsilon"], key + ".epsilon");
    if (n["gamma"]) s.gamma = schedule(n["gamma"], key + ".gamma");
    if (n["relaxation"]) s.relaxation = schedule(n["relaxation"], key + ".relaxation");
    if (n["max_iter"]) s.max_iter = count(n["max_iter"], key + ".max_iter");
    if (n["tol_residual"]) s.tol_residual = number(n["tol_residual"], key + ".tol_residual");
    if (n["tol_step"]) s.tol_step = number(n["tol_step"], key + ".tol_step");
    if (n["stall_limit"]) s.stall_limit = count(n["stall_limit"], key + ".stall_limit");
    if (n["policy"]) s.policy = policy(n["policy"], key + ".policy");
    return s;
  }

  PrimalSpec primal(const YAML::Node& n, const std::string& key) {
    note(key, n);
    allow_keys(n, key, {"dim", "A", "C", "s", "alpha", "chi", "epsilon"});
    PrimalSpec b;
    if (!n["dim"] || !n["A"]) fail(n, "'" + key + "' needs 'dim' and 'A'");
    b.dim = static_cast<Index>(count(n["dim"], key + ".dim"));
    b.A = op(n["A"], key + ".A");
    if (n["C"]) b.C = op(n["C"], key + ".C");
    if (n["s"]) b.s = list(n["s"], key + ".s");
    if (n["alpha"]) b.alpha = number(n["alpha"], key + ".alpha");
    if (n["chi"]) b.chi = number(n["chi"], key + ".chi");
    if (n["epsilon"]) b.epsilon = number(n["epsilon"], key + ".epsilon");
    return b;
  }

  DualSpec dual(const YAML::Node& n, const std::string& key) {
    note(key, n);
    allow_keys(n, key, {"dim", "B", "D", "r", "beta", "kappa", "delta"});
    DualSpec b;
    if (!n["dim"] || !n["B"]) fail(n, "'" + key + "' needs 'dim' and 'B'");
    b.dim = static_cast<Index>(count(n["dim"], key + ".dim"));
    b.B = op(n["B"], key + ".B");
    if (n["D"]) b.D = op(n["D"], key + ".D");
    if (n["r"]) b.r = list(n["r"], key + ".r");
    if (n["beta"]) b.beta = number(n["beta"], key + ".beta");
    if (n["kappa"]) b.kappa = number(n["kappa"], key + ".kappa");
    if (n["delta"]) b.delta = number(n["delta"], key + ".delta");
    return b;
  }

  CouplingSpec coupling(const YAML::Node& n, const std::string& key) {
    note(key, n);
    allow_keys(n, key, {"dual", "primal", "matrix"});
    if (!n["dual"] || !n["primal"] || !n["matrix"]) fail(n, "'" + key + "' needs 'dual', 'primal' and 'matrix'");
    return {count(n["dual"], key + ".dual"), count(n["primal"], key + ".primal"), rows(n["matrix"], key + ".matrix")};
  }

  template <class F>
  auto sequence(const YAML::Node& n, const std::string& key, F&& item) {
    note(key, n);
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a list");
    std::vector<decltype(item(n, key))> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(item(n[i], key + "[" + std::to_string(i) + "]"));
    return out;
  }

 private:
  SourceMap map_;
};

}  // namespace detail

// Structural parse only; see validate_problem in run.hpp for the regime checks.
inline ProblemFile read_problem_text(const std::string& text, const std::string& source = "<text>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(source, {e.mark.line + 1, e.mark.column + 1}, e.msg);
  }
  detail::Reader in(source);
  if (!root.IsMap()) throw ParseError(source, detail::where(root), "top level must be a mapping");
  in.allow_keys(root, "problem",
                {"kind", "dim", "A", "B", "kernel", "primal", "dual", "couplings", "solver", "start", "zeros", "solution",
                 "allow_nonmonotone"});

  ProblemFile pf;
  if (root["kind"]) pf.kind = in.word(root["kind"], "kind");
  if (pf.kind == "inclusion") {
    for (const char* k : {"primal", "dual", "couplings"})
      if (root[k]) in.fail(root[k], std::string("'") + k + "' belongs to coupled problems");
    if (!root["dim"] || !root["A"]) in.fail(root, "an inclusion problem needs 'dim' and 'A'");
    pf.dim = static_cast<Index>(in.count(root["dim"], "dim"));
    pf.A = in.op(root["A"], "A");
    if (root["B"]) pf.B = in.op(root["B"], "B");
    if (root["kernel"]) pf.kernel = in.kernel(root["kernel"], "kernel");
  } else if (pf.kind == "coupled") {
    for (const char* k : {"dim", "A", "B", "kernel"})
      if (root[k]) in.fail(root[k], std::string("'") + k + "' belongs to inclusion problems");
    if (!root["primal"] || !root["dual"]) in.fail(root, "a coupled problem needs 'primal' and 'dual'");
    pf.primal = in.sequence(root["primal"], "primal", [&](const YAML::Node& n, const std::string& k) { return in.primal(n, k); });
    pf.dual = in.sequence(root["dual"], "dual", [&](const YAML::Node& n, const std::string& k) { return in.dual(n, k); });
    if (root["couplings"])
      pf.couplings = in.sequence(root["couplings"], "couplings",
                                 [&](const YAML::Node& n, const std::string& k) { return in.coupling(n, k); });
    pf.solver.algo = "coupled";
  } else {
    in.fail(root["kind"], "unknown problem kind '" + pf.kind + "' (inclusion, coupled)");
  }
  if (root["solver"]) pf.solver = in.solver(root["solver"], "solver", pf.solver);
  if (root["start"]) pf.start = in.list(root["start"], "start");
  if (root["zeros"]) pf.zeros = in.rows(root["zeros"], "zeros");
  if (root["solution"]) {
    const auto& n = root["solution"];
    in.note("solution", n);
    in.allow_keys(n, "solution", {"point", "tolerance"});
    if (!n["point"]) in.fail(n, "'solution' needs a 'point'");
    SolutionSpec s;
    s.point = in.list(n["point"], "solution.point");
    if (n["tolerance"]) s.tolerance = in.number(n["tolerance"], "solution.tolerance");
    pf.solution = s;
  }
  if (root["allow_nonmonotone"]) pf.allow_nonmonotone = in.flag(root["allow_nonmonotone"], "allow_nonmonotone");
  pf.where = in.take();
  return pf;
}

// ---- serialization ----

namespace detail {

inline std::string flow(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s + "]";
}

inline std::string flow(const std::vector<std::vector<double>>& m) {
  std::string s = "[";
  for (std::size_t i = 0; i < m.size(); ++i) s += (i ? ", " : "") + flow(m[i]);
  return s + "]";
}

inline std::string flow(const Param& p) {
  return std::visit(
      [](const auto& v) -> std::string {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, double>)
          return format_double(v);
        else
          return flow(v);
      },
      p);
}

inline std::string flow(const OperatorSpec& op) {
  std::string s = "{type: " + op.type;
  for (const auto& [k, v] : op.params) s += ", " + k + ": " + flow(v);
  return s + "}";
}

inline std::string flow(const ScheduleSpec& s) {
  if (s.rule == ScheduleSpec::Rule::constant) return format_double(s.value);
  return "{rule: geometric, start: " + format_double(s.value) + ", ratio: " + format_double(s.ratio) +
         ", floor: " + format_double(s.floor) + "}";
}

}  // namespace detail

inline std::string write_problem_text(const ProblemFile& pf) {
  using detail::flow;
  std::ostringstream out;
  out << "kind: " << pf.kind << "\n";
  if (pf.kind == "inclusion") {
    out << "dim: " << pf.dim << "\n";
    out << "A: " << flow(pf.A) << "\n";
    if (pf.B) out << "B: " << flow(*pf.B) << "\n";
    const auto& k = pf.kernel;
    out << "kernel: {type: " << k.type << ", scale: " << format_double(k.scale);
    if (!k.metric.empty()) out << ", metric: " << flow(k.metric);
    out << ", reach: " << format_double(k.reach) << "}\n";
  } else {
    out << "primal:\n";
    for (const auto& b : pf.primal) {
      out << "  - dim: " << b.dim << "\n    A: " << flow(b.A) << "\n";
      if (b.C) out << "    C: " << flow(*b.C) << "\n";
      if (!b.s.empty()) out << "    s: " << flow(b.s) << "\n";
      out << "    alpha: " << format_double(b.alpha) << "\n    chi: " << format_double(b.chi)
          << "\n    epsilon: " << format_double(b.epsilon) << "\n";
    }
    out << "dual:\n";
    for (const auto& b : pf.dual) {
      out << "  - dim: " << b.dim << "\n    B: " << flow(b.B) << "\n";
      if (b.D) out << "    D: " << flow(*b.D) << "\n";
      if (!b.r.empty()) out << "    r: " << flow(b.r) << "\n";
      out << "    beta: " << format_double(b.beta) << "\n    kappa: " << format_double(b.kappa)
          << "\n    delta: " << format_double(b.delta) << "\n";
    }
    if (!pf.couplings.empty()) {
      out << "couplings:\n";
      for (const auto& c : pf.couplings)
        out << "  - {dual: " << c.dual << ", primal: " << c.primal << ", matrix: " << flow(c.matrix) << "}\n";
    }
  }
  const auto& s = pf.solver;
  out << "solver:\n  algo: " << s.algo << "\n  epsilon: " << format_double(s.epsilon) << "\n";
  if (s.gamma) out << "  gamma: " << flow(*s.gamma) << "\n";
  if (s.relaxation) out << "  relaxation: " << flow(*s.relaxation) << "\n";
  out << "  max_iter: " << s.max_iter << "\n  tol_residual: " << format_double(s.tol_residual)
      << "\n  tol_step: " << format_double(s.tol_step) << "\n  stall_limit: " << s.stall_limit << "\n";
  const auto& p = s.policy;
  switch (p.kind) {
    case PolicySpec::Kind::none: out << "  policy: {type: none}\n"; break;
    case PolicySpec::Kind::additive:
      out << "  policy: {type: additive, error: " << flow(p.error) << ", decay: " << format_double(p.decay) << "}\n";
      break;
    case PolicySpec::Kind::inertial: out << "  policy: {type: inertial, alpha: " << flow(p.alpha) << "}\n"; break;
    case PolicySpec::Kind::memory:
      out << "  policy: {type: memory, weights: " << flow(p.weights);
      if (!p.error.empty()) out << ", error: " << flow(p.error);
      out << ", decay: " << format_double(p.decay) << "}\n";
      break;
  }
  if (!pf.start.empty()) out << "start: " << flow(pf.start) << "\n";
  if (!pf.zeros.empty()) out << "zeros: " << flow(pf.zeros) << "\n";
  if (pf.solution)
    out << "solution: {point: " << flow(pf.solution->point) << ", tolerance: " << format_double(pf.solution->tolerance)
        << "}\n";
  if (pf.allow_nonmonotone) out << "allow_nonmonotone: true\n";
  return out.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace warpedprox::io
