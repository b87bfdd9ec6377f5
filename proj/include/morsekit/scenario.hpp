#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "morsekit/bump.hpp"
#include "morsekit/common.hpp"

namespace morsekit {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Space

struct ScenarioSpace {
  int dim = 0;
  bool torus = false;
  Vec periods;  // size dim when torus

  // Reduce every coordinate into [0, period).
  Vec wrap(const Vec& x) const {
    if (!torus) return x;
    Vec y = x;
    for (int i = 0; i < dim; ++i) {
      double p = periods[i];
      y[i] = std::fmod(y[i], p);
      if (y[i] < 0) y[i] += p;
      if (y[i] >= p) y[i] -= p;  // fmod can round up to p
    }
    return y;
  }

  // Minimal representative of a - b in the quotient.
  Vec diff(const Vec& a, const Vec& b) const {
    Vec d = a - b;
    if (!torus) return d;
    for (int i = 0; i < dim; ++i) {
      double p = periods[i];
      d[i] = std::remainder(d[i], p);
    }
    return d;
  }

  double distance(const Vec& a, const Vec& b) const { return diff(a, b).norm(); }
};

// ---------------------------------------------------------------------------
// Derivative bundles and function families

struct DerivativeBundle {
  double value = 0;
  Vec gradient;
  Mat hessian;
  Tensor3 third;
};

class MorseFunction {
 public:
  virtual ~MorseFunction() = default;
  virtual int dim() const = 0;
  // Exact derivatives to the requested order (0..3).
  virtual DerivativeBundle eval(const Vec& x, int order = 3) const = 0;
  // Whether the family claims global properness on Euclidean space. The
  // quadratic_plus_term family is the local normal-form catalog and opts out.
  virtual bool declares_proper() const { return true; }
  double value(const Vec& x) const { return eval(x, 0).value; }
  Vec gradient(const Vec& x) const { return eval(x, 1).gradient; }
  Mat hessian(const Vec& x) const { return eval(x, 2).hessian; }
};

namespace detail {

inline DerivativeBundle zero_bundle(int n, int order) {
  DerivativeBundle b;
  b.value = 0;
  if (order >= 1) b.gradient = Vec::Zero(n);
  if (order >= 2) b.hessian = Mat::Zero(n, n);
  if (order >= 3) b.third.assign(n, Mat::Zero(n, n));
  return b;
}

}  // namespace detail

// Sum of c * cos(<w,x> + phase) / c * sin(...) terms with angular frequencies
// w_i = 2 pi m_i / L_i for integer wave vectors m.
class TrigPolynomial : public MorseFunction {
 public:
  struct Term {
    double coeff = 0;
    bool is_sin = false;
    Vec omega;  // angular frequency vector
    double phase = 0;
  };

  TrigPolynomial(int n, std::vector<Term> terms) : n_(n), terms_(std::move(terms)) {}

  int dim() const override { return n_; }

  DerivativeBundle eval(const Vec& x, int order) const override {
    DerivativeBundle b = detail::zero_bundle(n_, order);
    for (const auto& t : terms_) {
      double th = t.omega.dot(x) + t.phase;
      // Derivatives cycle through (g, g', g'', g''') for g = cos or sin.
      double g0 = t.is_sin ? std::sin(th) : std::cos(th);
      double g1 = t.is_sin ? std::cos(th) : -std::sin(th);
      double g2 = -g0;
      double g3 = -g1;
      b.value += t.coeff * g0;
      if (order >= 1) b.gradient += t.coeff * g1 * t.omega;
      if (order >= 2) b.hessian += t.coeff * g2 * (t.omega * t.omega.transpose());
      if (order >= 3)
        for (int k = 0; k < n_; ++k)
          b.third[k] += t.coeff * g3 * t.omega[k] * (t.omega * t.omega.transpose());
    }
    return b;
  }

  const std::vector<Term>& terms() const { return terms_; }

 private:
  int n_;
  std::vector<Term> terms_;
};

// Sum of monomials c * prod x_i^{e_i} with exact differentiation.
class Polynomial : public MorseFunction {
 public:
  struct Term {
    double coeff = 0;
    std::vector<int> exps;
  };

  Polynomial(int n, std::vector<Term> terms) : n_(n), terms_(std::move(terms)) {}

  int dim() const override { return n_; }

  DerivativeBundle eval(const Vec& x, int order) const override {
    DerivativeBundle b = detail::zero_bundle(n_, order);
    for (const auto& t : terms_) {
      b.value += t.coeff * mono(t.exps, x);
      if (order < 1) continue;
      for (int i = 0; i < n_; ++i) {
        auto [ci, ei] = diff(t.exps, i);
        if (ci == 0) continue;
        b.gradient[i] += t.coeff * ci * mono(ei, x);
        if (order < 2) continue;
        for (int j = 0; j < n_; ++j) {
          auto [cj, ej] = diff(ei, j);
          if (cj == 0) continue;
          b.hessian(i, j) += t.coeff * ci * cj * mono(ej, x);
          if (order < 3) continue;
          for (int k = 0; k < n_; ++k) {
            auto [ck, ek] = diff(ej, k);
            if (ck == 0) continue;
            b.third[k](i, j) += t.coeff * ci * cj * ck * mono(ek, x);
          }
        }
      }
    }
    return b;
  }

 private:
  static double mono(const std::vector<int>& e, const Vec& x) {
    double v = 1;
    for (size_t i = 0; i < e.size(); ++i)
      for (int r = 0; r < e[i]; ++r) v *= x[(int)i];
    return v;
  }
  static std::pair<int, std::vector<int>> diff(const std::vector<int>& e, int i) {
    if (e[i] == 0) return {0, e};
    auto out = e;
    out[i] -= 1;
    return {e[i], out};
  }

  int n_;
  std::vector<Term> terms_;
};

// f = sum_i sigma_i * x_i^2 / 2 + polynomial extra terms. The signature makes
// the quadratic part explicit for normal-form scenarios.
class QuadraticPlusTerm : public MorseFunction {
 public:
  QuadraticPlusTerm(std::vector<int> signature, std::vector<Polynomial::Term> extras)
      : n_((int)signature.size()),
        signature_(std::move(signature)),
        extra_(n_, std::move(extras)) {}

  int dim() const override { return n_; }

  DerivativeBundle eval(const Vec& x, int order) const override {
    DerivativeBundle b = extra_.eval(x, order);
    for (int i = 0; i < n_; ++i) {
      b.value += 0.5 * signature_[i] * x[i] * x[i];
      if (order >= 1) b.gradient[i] += signature_[i] * x[i];
      if (order >= 2) b.hessian(i, i) += signature_[i];
    }
    return b;
  }

  const std::vector<int>& signature() const { return signature_; }
  bool declares_proper() const override { return false; }

 private:
  int n_;
  std::vector<int> signature_;
  Polynomial extra_;
};

// ---------------------------------------------------------------------------
// Metric families

class MetricField {
 public:
  virtual ~MetricField() = default;
  virtual Mat A(const Vec& x) const = 0;
  // Partial derivative of A with respect to x_k.
  virtual Mat dA(const Vec& x, int k) const = 0;
};

class IdentityMetric : public MetricField {
 public:
  explicit IdentityMetric(int n) : n_(n) {}
  Mat A(const Vec&) const override { return Mat::Identity(n_, n_); }
  Mat dA(const Vec&, int) const override { return Mat::Zero(n_, n_); }

 private:
  int n_;
};

class ConstantMetric : public MetricField {
 public:
  explicit ConstantMetric(Mat m) : m_(std::move(m)) {}
  Mat A(const Vec&) const override { return m_; }
  Mat dA(const Vec&, int) const override { return Mat::Zero(m_.rows(), m_.cols()); }

 private:
  Mat m_;
};

// A(x) = exp(u(x)) * I for a scalar log-factor u from the function catalog.
class ConformalMetric : public MetricField {
 public:
  ConformalMetric(int n, std::shared_ptr<const MorseFunction> log_factor)
      : n_(n), u_(std::move(log_factor)) {}
  Mat A(const Vec& x) const override {
    return std::exp(u_->value(x)) * Mat::Identity(n_, n_);
  }
  Mat dA(const Vec& x, int k) const override {
    auto b = u_->eval(x, 1);
    return std::exp(b.value) * b.gradient[k] * Mat::Identity(n_, n_);
  }

 private:
  int n_;
  std::shared_ptr<const MorseFunction> u_;
};

// Interpolates from a constant SPD matrix near a marked point to the identity
// away from it, blended by the canonical bump profile.
class BlockConstantNearPointMetric : public MetricField {
 public:
  BlockConstantNearPointMetric(ScenarioSpace space, Vec point, Mat m, double radius)
      : space_(std::move(space)), p_(std::move(point)), m_(std::move(m)), r_(radius) {}

  Mat A(const Vec& x) const override {
    int n = space_.dim;
    double d = space_.distance(x, p_);
    double w = bump(d / r_);
    return Mat::Identity(n, n) + w * (m_ - Mat::Identity(n, n));
  }

  Mat dA(const Vec& x, int k) const override {
    int n = space_.dim;
    Vec delta = space_.diff(x, p_);
    double d = delta.norm();
    if (d < r_ / 2 || d >= r_) return Mat::Zero(n, n);
    double w1 = bump_deriv(d / r_) / r_;
    return w1 * (delta[k] / d) * (m_ - Mat::Identity(n, n));
  }

 private:
  ScenarioSpace space_;
  Vec p_;
  Mat m_;
  double r_;
};

// ---------------------------------------------------------------------------
// Vector fields

class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual Vec value(const Vec& x) const = 0;
  virtual Mat jacobian(const Vec& x) const = 0;
};

// X = -A(x)^{-1} grad f(x): the negative gradient with respect to the metric
// G with matrix A, i.e. the unique v with <v,w>_G = -Df(w).
class NegativeGradientField : public VectorField {
 public:
  NegativeGradientField(std::shared_ptr<const MorseFunction> f,
                        std::shared_ptr<const MetricField> g)
      : f_(std::move(f)), g_(std::move(g)) {}

  Vec value(const Vec& x) const override {
    return -g_->A(x).ldlt().solve(f_->gradient(x));
  }

  Mat jacobian(const Vec& x) const override {
    auto b = f_->eval(x, 2);
    Mat a = g_->A(x);
    auto solver = a.ldlt();
    Vec h = solver.solve(b.gradient);  // = -X
    int n = (int)x.size();
    Mat jac(n, n);
    for (int k = 0; k < n; ++k)
      jac.col(k) = solver.solve(g_->dA(x, k) * h - b.hessian.col(k));
    return jac;
  }

 private:
  std::shared_ptr<const MorseFunction> f_;
  std::shared_ptr<const MetricField> g_;
};

// ---------------------------------------------------------------------------
// Scenario

struct Scenario {
  ScenarioSpace space;
  std::shared_ptr<const MorseFunction> f;
  std::shared_ptr<const MetricField> metric;
  std::shared_ptr<const VectorField> field;
  // Seed/probe box for Euclidean scenarios (the fundamental domain on a torus).
  Vec box_min, box_max;
  std::optional<double> declared_euler_char;
  Tolerances tol;
  json raw;  // source document, kept for manifests

  DerivativeBundle eval(const Vec& x, int order = 3) const {
    for (int i = 0; i < x.size(); ++i)
      if (!std::isfinite(x[i])) throw ValidationError("evaluate: non-finite point");
    return f->eval(space.wrap(x), order);
  }

  Vec field_at(const Vec& x) const { return field->value(space.wrap(x)); }
  Mat field_jacobian(const Vec& x) const { return field->jacobian(space.wrap(x)); }
};

// ---------------------------------------------------------------------------
// JSON parsing

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& required,
                         const std::set<std::string>& optional, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!required.count(it.key()) && !optional.count(it.key()))
      throw ValidationError("unknown key '" + it.key() + "' in " + where);
  }
  for (const auto& k : required)
    if (!j.contains(k)) throw ValidationError("missing key '" + k + "' in " + where);
}

inline Vec parse_vec(const json& j, int expect = -1) {
  if (!j.is_array()) throw ValidationError("expected array of reals");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[(int)i] = j[i].get<double>();
  if (expect >= 0 && v.size() != expect)
    throw ValidationError("expected " + std::to_string(expect) + " entries");
  return v;
}

inline Mat parse_mat(const json& j, int n) {
  Mat m(n, n);
  if (!j.is_array() || (int)j.size() != n) throw ValidationError("expected n x n matrix");
  for (int i = 0; i < n; ++i) {
    Vec row = parse_vec(j[i], n);
    m.row(i) = row.transpose();
  }
  return m;
}

inline std::shared_ptr<MorseFunction> parse_function(const json& j, const ScenarioSpace& space,
                                                     const std::string& where) {
  require_keys(j, {"family", "params"}, {}, where);
  std::string family = j["family"].get<std::string>();
  const json& p = j["params"];
  int n = space.dim;
  if (family == "trig_polynomial") {
    require_keys(p, {"terms"}, {}, where + ".params");
    std::vector<TrigPolynomial::Term> terms;
    for (const auto& tj : p["terms"]) {
      require_keys(tj, {"coeff", "kind", "wave"}, {"phase"}, where + ".terms[]");
      TrigPolynomial::Term t;
      t.coeff = tj["coeff"].get<double>();
      std::string kind = tj["kind"].get<std::string>();
      if (kind == "sin")
        t.is_sin = true;
      else if (kind == "cos")
        t.is_sin = false;
      else
        throw ValidationError("unknown trig kind '" + kind + "'");
      Vec wave = parse_vec(tj["wave"], n);
      t.omega = Vec(n);
      for (int i = 0; i < n; ++i) {
        double L = space.torus ? space.periods[i] : 1.0;
        t.omega[i] = 2.0 * kPi * wave[i] / L;
      }
      if (tj.contains("phase")) t.phase = tj["phase"].get<double>();
      terms.push_back(std::move(t));
    }
    return std::make_shared<TrigPolynomial>(n, std::move(terms));
  }
  if (family == "polynomial" || family == "quadratic_plus_term") {
    std::vector<Polynomial::Term> terms;
    const char* termkey = family == "polynomial" ? "terms" : "extra_terms";
    if (family == "polynomial")
      require_keys(p, {"terms"}, {}, where + ".params");
    else
      require_keys(p, {"signature", "extra_terms"}, {}, where + ".params");
    for (const auto& tj : p[termkey]) {
      require_keys(tj, {"coeff", "exponents"}, {}, where + ".terms[]");
      Polynomial::Term t;
      t.coeff = tj["coeff"].get<double>();
      for (const auto& e : tj["exponents"]) {
        int ei = e.get<int>();
        if (ei < 0) throw ValidationError("negative exponent");
        t.exps.push_back(ei);
      }
      if ((int)t.exps.size() != n) throw ValidationError("exponent arity mismatch");
      terms.push_back(std::move(t));
    }
    if (family == "polynomial") return std::make_shared<Polynomial>(n, std::move(terms));
    std::vector<int> sig;
    for (const auto& s : p["signature"]) {
      int si = s.get<int>();
      if (si != 1 && si != -1) throw ValidationError("signature entries must be +-1");
      sig.push_back(si);
    }
    if ((int)sig.size() != n) throw ValidationError("signature arity mismatch");
    return std::make_shared<QuadraticPlusTerm>(std::move(sig), std::move(terms));
  }
  throw ValidationError("unknown function family '" + family + "'");
}

inline std::shared_ptr<MetricField> parse_metric(const json& j, const ScenarioSpace& space) {
  require_keys(j, {"family", "params"}, {}, "metric");
  std::string family = j["family"].get<std::string>();
  const json& p = j["params"];
  int n = space.dim;
  if (family == "identity") {
    require_keys(p, {}, {}, "metric.params");
    return std::make_shared<IdentityMetric>(n);
  }
  if (family == "constant_spd") {
    require_keys(p, {"matrix"}, {}, "metric.params");
    Mat m = parse_mat(p["matrix"], n);
    return std::make_shared<ConstantMetric>(std::move(m));
  }
  if (family == "conformal") {
    require_keys(p, {"log_factor"}, {}, "metric.params");
    auto u = parse_function(p["log_factor"], space, "metric.log_factor");
    return std::make_shared<ConformalMetric>(n, std::move(u));
  }
  if (family == "block_constant_near_point") {
    require_keys(p, {"point", "matrix", "radius"}, {}, "metric.params");
    Vec pt = parse_vec(p["point"], n);
    Mat m = parse_mat(p["matrix"], n);
    double r = p["radius"].get<double>();
    if (r <= 0) throw ValidationError("block metric radius must be positive");
    return std::make_shared<BlockConstantNearPointMetric>(space, std::move(pt), std::move(m), r);
  }
  throw ValidationError("unknown metric family '" + family + "'");
}

}  // namespace detail

// Deterministic probe grid over the fundamental domain / seed box:
// 10 points per axis, capped at 10^4 probes total.
inline std::vector<Vec> probe_grid(const Scenario& sc, int per_axis = 10, int cap = 10000) {
  int n = sc.space.dim;
  long total = 1;
  for (int i = 0; i < n; ++i) {
    total *= per_axis;
    if (total > cap) {
      per_axis = std::max(2, (int)std::floor(std::pow((double)cap, 1.0 / n)));
      total = cap;
      break;
    }
  }
  std::vector<Vec> out;
  std::vector<int> idx(n, 0);
  while (true) {
    Vec x(n);
    for (int i = 0; i < n; ++i) {
      double t = (idx[i] + 0.5) / per_axis;
      x[i] = sc.box_min[i] + t * (sc.box_max[i] - sc.box_min[i]);
    }
    out.push_back(x);
    int i = 0;
    for (; i < n; ++i) {
      if (++idx[i] < per_axis) break;
      idx[i] = 0;
    }
    if (i == n) break;
  }
  return out;
}

namespace detail {

inline void validate_scenario(const Scenario& sc) {
  const auto& tol = sc.tol;
  auto probes = probe_grid(sc);

  for (const auto& x : probes) {
    Mat a = sc.metric->A(x);
    if ((a - a.transpose()).norm() > tol.metric_symmetry)
      throw ValidationError("metric not symmetric at probe");
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    if (es.eigenvalues().minCoeff() <= 0) {
      std::ostringstream os;
      os << "metric not positive definite at probe (eigenvalue "
         << es.eigenvalues().minCoeff() << ")";
      throw ValidationError(os.str());
    }
    auto b = sc.f->eval(x, 3);
    if (!std::isfinite(b.value) || !b.gradient.allFinite() || !b.hessian.allFinite())
      throw ValidationError("function not finite at probe");
    if ((b.hessian - b.hessian.transpose()).norm() > tol.bundle_symmetry)
      throw ValidationError("hessian not symmetric at probe");
  }

  // Gradient-like sign condition at non-critical probes.
  for (const auto& x : probes) {
    Vec g = sc.f->gradient(x);
    if (g.norm() < 1e-8) continue;
    double xf = sc.field->value(x).dot(g);
    if (xf >= 0) throw ValidationError("field fails X.f < 0 at a non-critical probe");
  }

  // Finite-difference agreement on deterministic pseudorandom probes.
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int n = sc.space.dim;
  for (int trial = 0; trial < 100; ++trial) {
    Vec x(n);
    for (int i = 0; i < n; ++i)
      x[i] = sc.box_min[i] + uni(rng) * (sc.box_max[i] - sc.box_min[i]);
    auto b = sc.f->eval(x, 2);
    double scale = std::max(1.0, std::abs(b.value));
    double h = 1e-5;
    for (int i = 0; i < n; ++i) {
      Vec e = Vec::Zero(n);
      e[i] = h;
      double fd = (sc.f->value(x + e) - sc.f->value(x - e)) / (2 * h);
      double ref = std::max(scale, std::abs(b.gradient[i]));
      if (std::abs(fd - b.gradient[i]) > sc.tol.fd_gradient_rel * ref)
        throw ValidationError("gradient disagrees with finite differences");
      Vec hd = (sc.f->gradient(x + e) - sc.f->gradient(x - e)) / (2 * h);
      double refh = std::max(scale, b.hessian.col(i).norm());
      if ((hd - b.hessian.col(i)).norm() > sc.tol.fd_hessian_rel * refh)
        throw ValidationError("hessian disagrees with finite differences");
    }
  }

  // Properness on Euclidean scenarios: the function must be bounded below on
  // the probes and grow along expanding rings.
  if (!sc.space.torus && sc.f->declares_proper()) {
    double inner = -std::numeric_limits<double>::infinity();
    for (const auto& x : probes) inner = std::max(inner, sc.f->value(x));
    double span = (sc.box_max - sc.box_min).norm();
    double prev = inner;
    for (double factor : {2.0, 4.0, 8.0}) {
      double radius = factor * span;
      double ring_min = std::numeric_limits<double>::infinity();
      int samples = std::max(16, 4 * n * n);
      std::mt19937 ring_rng(987 + (int)factor);
      std::normal_distribution<double> gauss;
      for (int s = 0; s < samples; ++s) {
        Vec u(n);
        for (int i = 0; i < n; ++i) u[i] = gauss(ring_rng);
        u *= radius / u.norm();
        ring_min = std::min(ring_min, sc.f->value(u));
      }
      if (ring_min <= prev)
        throw ValidationError("properness probe failed: function does not grow on ring");
      prev = ring_min;
    }
  }
}

}  // namespace detail

inline Scenario load_scenario_json(const json& doc, Tolerances tol = {}) {
  detail::require_keys(doc, {"dimension", "topology", "function", "metric", "field"},
                       {"search_box", "euler_characteristic"}, "scenario");
  Scenario sc;
  sc.tol = tol;
  sc.raw = doc;
  sc.space.dim = doc["dimension"].get<int>();
  if (sc.space.dim < 1) throw ValidationError("dimension must be >= 1");
  int n = sc.space.dim;

  const json& topo = doc["topology"];
  detail::require_keys(topo, {"kind"}, {"periods"}, "topology");
  std::string kind = topo["kind"].get<std::string>();
  if (kind == "torus") {
    sc.space.torus = true;
    if (!topo.contains("periods")) throw ValidationError("torus topology requires periods");
    sc.space.periods = detail::parse_vec(topo["periods"], n);
    if (sc.space.periods.minCoeff() <= 0) throw ValidationError("torus periods must be positive");
    sc.box_min = Vec::Zero(n);
    sc.box_max = sc.space.periods;
  } else if (kind == "euclidean") {
    sc.space.torus = false;
    sc.box_min = Vec::Constant(n, -3.0);
    sc.box_max = Vec::Constant(n, 3.0);
  } else {
    throw ValidationError("unknown topology kind '" + kind + "'");
  }

  if (doc.contains("search_box")) {
    if (sc.space.torus) throw ValidationError("search_box only applies to euclidean scenarios");
    const json& sb = doc["search_box"];
    detail::require_keys(sb, {"min", "max"}, {}, "search_box");
    sc.box_min = detail::parse_vec(sb["min"], n);
    sc.box_max = detail::parse_vec(sb["max"], n);
    if (((sc.box_max - sc.box_min).array() <= 0).any())
      throw ValidationError("search_box must have positive extent");
  }
  if (doc.contains("euler_characteristic"))
    sc.declared_euler_char = doc["euler_characteristic"].get<double>();

  sc.f = detail::parse_function(doc["function"], sc.space, "function");
  sc.metric = detail::parse_metric(doc["metric"], sc.space);

  const json& fld = doc["field"];
  detail::require_keys(fld, {"kind"}, {"params"}, "field");
  std::string fkind = fld["kind"].get<std::string>();
  if (fkind == "negative_gradient") {
    if (fld.contains("params")) detail::require_keys(fld["params"], {}, {}, "field.params");
    sc.field = std::make_shared<NegativeGradientField>(sc.f, sc.metric);
  } else if (fkind == "homotopy_member" || fkind == "explicit_model") {
    // Resolved by the caller (needs critical-point data / model parameters);
    // start from the base negative gradient so validation can run.
    sc.field = std::make_shared<NegativeGradientField>(sc.f, sc.metric);
  } else {
    throw ValidationError("unknown field kind '" + fkind + "'");
  }

  detail::validate_scenario(sc);
  return sc;
}

inline Scenario load_scenario(const std::string& path, Tolerances tol = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("scenario parse error: ") + e.what());
  }
  return load_scenario_json(doc, tol);
}

}  // namespace morsekit
