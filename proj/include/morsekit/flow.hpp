#pragma once

#include <functional>
#include <limits>

#include "morsekit/geometry.hpp"

namespace morsekit {
namespace ode {

// Dormand-Prince 5(4) with the Hairer continuous extension. The dense-output
// polynomial is what event location bisects on, so anchors inherit the
// integrator's accuracy rather than the step size.
struct DenseStep {
  double t0 = 0, h = 0;
  Vec r1, r2, r3, r4, r5;

  Vec eval(double t) const {
    double th = (t - t0) / h;
    double th1 = 1.0 - th;
    return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
  }
  double t_end() const { return t0 + h; }
};

struct Options {
  double abs_tol = 1e-9;
  double rel_tol = 1e-9;
  double h_max = 1e2;
  long max_steps = 2000000;
};

// Step callback: inspect the accepted step; return a stop time inside
// [t0, t0+h] to terminate, or nothing to continue.
using StepCallback = std::function<std::optional<double>(const DenseStep&)>;

struct DriveResult {
  double t = 0;
  Vec y;
  bool hit_t_end = false;    // reached t_end without a callback stop
  bool callback_stop = false;
};

inline DriveResult drive(const std::function<Vec(const Vec&)>& rhs, Vec y0, double t0,
                         double t_end, const Options& opt, const StepCallback& cb) {
  static const double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static const double a2[] = {1.0 / 5};
  static const double a3[] = {3.0 / 40, 9.0 / 40};
  static const double a4[] = {44.0 / 45, -56.0 / 15, 32.0 / 9};
  static const double a5[] = {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729};
  static const double a6[] = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
                              -5103.0 / 18656};
  static const double b[] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
                             11.0 / 84};
  static const double e[7] = {71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
                              -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
  static const double d[7] = {-12715105075.0 / 11282082432.0,
                              0.0,
                              87487479700.0 / 32700410799.0,
                              -10690763975.0 / 1880347072.0,
                              701980252875.0 / 199316789632.0,
                              -1453857185.0 / 822651844.0,
                              69997945.0 / 29380423.0};
  (void)c;

  const int n = (int)y0.size();
  double t = t0;
  Vec y = std::move(y0);
  Vec k1 = rhs(y);

  // Initial step heuristic.
  double d0 = y.norm(), d1 = k1.norm();
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h = std::min({h, opt.h_max, t_end - t});
  if (h <= 0) h = 1e-6;

  Vec k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y1(n), err(n);
  for (long step = 0; step < opt.max_steps; ++step) {
    if (t >= t_end) return {t, y, true, false};
    h = std::min(h, t_end - t);
    if (h < 1e-14 * std::max(1.0, std::abs(t)))
      throw NumericalError("integrator step-size underflow");

    k2 = rhs(y + h * (a2[0] * k1));
    k3 = rhs(y + h * (a3[0] * k1 + a3[1] * k2));
    k4 = rhs(y + h * (a4[0] * k1 + a4[1] * k2 + a4[2] * k3));
    k5 = rhs(y + h * (a5[0] * k1 + a5[1] * k2 + a5[2] * k3 + a5[3] * k4));
    k6 = rhs(y + h * (a6[0] * k1 + a6[1] * k2 + a6[2] * k3 + a6[3] * k4 + a6[4] * k5));
    y1 = y + h * (b[0] * k1 + b[2] * k3 + b[3] * k4 + b[4] * k5 + b[5] * k6);
    k7 = rhs(y1);
    err = h * (e[0] * k1 + e[2] * k3 + e[3] * k4 + e[4] * k5 + e[5] * k6 + e[6] * k7);

    double sum = 0;
    for (int i = 0; i < n; ++i) {
      double sk = opt.abs_tol + opt.rel_tol * std::max(std::abs(y[i]), std::abs(y1[i]));
      double r = err[i] / sk;
      sum += r * r;
    }
    double enorm = std::sqrt(sum / n);

    if (enorm <= 1.0) {
      DenseStep ds;
      ds.t0 = t;
      ds.h = h;
      ds.r1 = y;
      ds.r2 = y1 - y;
      ds.r3 = h * k1 - ds.r2;
      ds.r4 = ds.r2 - h * k7 - ds.r3;
      ds.r5 = h * (d[0] * k1 + d[2] * k3 + d[3] * k4 + d[4] * k5 + d[5] * k6 + d[6] * k7);

      if (cb) {
        auto stop = cb(ds);
        if (stop) {
          double ts = std::clamp(*stop, t, t + h);
          return {ts, ds.eval(ts), false, true};
        }
      }
      t += h;
      y = y1;
      k1 = k7;  // FSAL
      double fac = enorm == 0 ? 5.0 : std::clamp(0.9 * std::pow(enorm, -0.2), 0.2, 5.0);
      h = std::min(h * fac, opt.h_max);
    } else {
      h *= std::clamp(0.9 * std::pow(enorm, -0.2), 0.2, 1.0);
    }
  }
  throw NumericalError("integrator exceeded max step count");
}

// Bisection refined on the scalar g along a bracket [lo, hi] with
// g(lo) * g(hi) <= 0; returns the abscissa with |g| minimized below g_tol.
inline double find_root(const std::function<double(double)>& g, double lo, double hi,
                        double g_tol) {
  double glo = g(lo), ghi = g(hi);
  if (glo == 0) return lo;
  if (ghi == 0) return hi;
  double best = std::abs(glo) < std::abs(ghi) ? lo : hi;
  double best_g = std::min(std::abs(glo), std::abs(ghi));
  for (int it = 0; it < 200 && best_g > g_tol; ++it) {
    double mid = 0.5 * (lo + hi);
    double gm = g(mid);
    if (std::abs(gm) < best_g) {
      best_g = std::abs(gm);
      best = mid;
    }
    if ((gm < 0) == (glo < 0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-16 * std::max(1.0, std::abs(hi))) break;
  }
  return best;
}

}  // namespace ode

// ---------------------------------------------------------------------------
// Flow-level API

enum class TerminalKind { reached_level, converged_to, ball, time_limit, escaped };

struct Anchor {
  double level = 0;
  double t = 0;
  Vec point;  // wrapped into the fundamental domain
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;  // unwrapped
  TerminalKind terminal = TerminalKind::time_limit;
  double terminal_t = 0;
  Vec terminal_x;
  int critical_id = -1;     // for converged_to
  double level = 0;         // for reached_level
  std::vector<Anchor> anchors;
};

struct StopSpec {
  double t_max = 1e3;
  std::optional<double> level;
  std::optional<std::pair<Vec, double>> ball;  // (center, radius), quotient metric
  double escape_radius = 1e6;
  std::vector<double> record_levels;  // level anchors collected along the way
};

namespace detail {

struct FlowEventState {
  const Scenario* sc;
  const StopSpec* stop;
  Trajectory* traj;
  double prev_f;
  std::vector<double> pending_levels;  // record levels not yet crossed
};

inline std::optional<double> flow_events(FlowEventState& st, const ode::DenseStep& ds,
                                         const std::function<Vec(double)>& x_at) {
  const Scenario& sc = *st.sc;
  double t1 = ds.t_end();
  Vec x1 = x_at(t1);
  double f1 = sc.f->value(sc.space.wrap(x1));

  // Record-level crossings (f strictly decreasing along flows).
  for (auto it = st.pending_levels.begin(); it != st.pending_levels.end();) {
    double a = *it;
    if (st.prev_f > a && f1 <= a) {
      auto g = [&](double t) { return sc.f->value(sc.space.wrap(x_at(t))) - a; };
      double ts = ode::find_root(g, ds.t0, t1, 1e-12);
      Anchor an;
      an.level = a;
      an.t = ts;
      an.point = sc.space.wrap(x_at(ts));
      st.traj->anchors.push_back(std::move(an));
      it = st.pending_levels.erase(it);
    } else {
      ++it;
    }
  }

  // Terminal level.
  if (st.stop->level && st.prev_f > *st.stop->level && f1 <= *st.stop->level) {
    double a = *st.stop->level;
    auto g = [&](double t) { return sc.f->value(sc.space.wrap(x_at(t))) - a; };
    double ts = ode::find_root(g, ds.t0, t1, 1e-12);
    st.traj->terminal = TerminalKind::reached_level;
    st.traj->level = a;
    st.prev_f = f1;
    return ts;
  }

  // Terminal ball entry, refined on the quotient distance.
  if (st.stop->ball) {
    const auto& [center, radius] = *st.stop->ball;
    auto gd = [&](double t) { return sc.space.distance(x_at(t), center) - radius; };
    double lo = ds.t0;
    double glo = gd(lo);
    if (glo > 0) {
      // Sample interior points in case the entry is not at the endpoint.
      for (double th : {0.25, 0.5, 0.75, 1.0}) {
        double t = ds.t0 + th * ds.h;
        if (gd(t) <= 0) {
          double ts = ode::find_root(gd, lo, t, 1e-13);
          st.traj->terminal = TerminalKind::ball;
          st.prev_f = f1;
          return ts;
        }
      }
    } else {
      st.traj->terminal = TerminalKind::ball;
      return ds.t0;
    }
  }

  if (!sc.space.torus && x1.norm() >= st.stop->escape_radius) {
    st.traj->terminal = TerminalKind::escaped;
    st.prev_f = f1;
    return t1;
  }

  st.prev_f = f1;
  return std::nullopt;
}

}  // namespace detail

inline Trajectory integrate(const Scenario& sc, const VectorField& field, const Vec& x0,
                            const StopSpec& stop) {
  if (!x0.allFinite()) throw ValidationError("integrate: non-finite start");
  Trajectory traj;
  ode::Options opt;
  opt.abs_tol = sc.tol.ode_abs;
  opt.rel_tol = sc.tol.ode_rel;

  detail::FlowEventState st{&sc, &stop, &traj, sc.f->value(sc.space.wrap(x0)),
                            stop.record_levels};
  auto rhs = [&](const Vec& x) { return field.value(sc.space.wrap(x)); };

  traj.times.push_back(0);
  traj.states.push_back(x0);
  auto cb = [&](const ode::DenseStep& ds) -> std::optional<double> {
    auto x_at = [&](double t) { return ds.eval(t); };
    auto r = detail::flow_events(st, ds, x_at);
    if (!r) {
      traj.times.push_back(ds.t_end());
      traj.states.push_back(ds.eval(ds.t_end()));
    }
    return r;
  };

  auto res = ode::drive(rhs, x0, 0.0, stop.t_max, opt, cb);
  traj.terminal_t = res.t;
  traj.terminal_x = res.y;
  if (res.hit_t_end) traj.terminal = TerminalKind::time_limit;
  if (res.callback_stop || res.hit_t_end) {
    traj.times.push_back(res.t);
    traj.states.push_back(res.y);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Variational (tangent) flow

struct VariationalResult {
  Trajectory traj;
  Mat frame_end;               // tangent map applied to the supplied frame
  std::vector<Mat> anchor_frames;  // transported frame at each recorded anchor
  // Closest approach to the watch point, if one was given.
  double closest_dist = std::numeric_limits<double>::infinity();
  double closest_t = 0;
  Vec closest_x;
  Mat closest_frame;
};

// Joint integration of dx/dt = X(x), dV/dt = DX(x) V for an n x k frame V.
inline VariationalResult integrate_variational(const Scenario& sc, const VectorField& field,
                                               const Vec& x0, const Mat& frame0,
                                               const StopSpec& stop,
                                               const Vec* watch_point = nullptr) {
  int n = sc.space.dim;
  int k = (int)frame0.cols();
  if (!x0.allFinite()) throw ValidationError("integrate_variational: non-finite start");

  auto pack = [&](const Vec& x, const Mat& v) {
    Vec y(n + n * k);
    y.head(n) = x;
    for (int j = 0; j < k; ++j) y.segment(n + j * n, n) = v.col(j);
    return y;
  };
  auto unpack_x = [&](const Vec& y) { return y.head(n).eval(); };
  auto unpack_v = [&](const Vec& y) {
    Mat v(n, k);
    for (int j = 0; j < k; ++j) v.col(j) = y.segment(n + j * n, n);
    return v;
  };

  auto rhs = [&](const Vec& y) {
    Vec x = sc.space.wrap(unpack_x(y));
    Mat v = unpack_v(y);
    Mat jac = field.jacobian(x);
    Vec dy(n + n * k);
    dy.head(n) = field.value(x);
    Mat dv = jac * v;
    for (int j = 0; j < k; ++j) dy.segment(n + j * n, n) = dv.col(j);
    return dy;
  };

  VariationalResult out;
  Trajectory& traj = out.traj;
  ode::Options opt;
  opt.abs_tol = sc.tol.ode_abs;
  opt.rel_tol = sc.tol.ode_rel;

  detail::FlowEventState st{&sc, &stop, &traj, sc.f->value(sc.space.wrap(x0)),
                            stop.record_levels};

  traj.times.push_back(0);
  traj.states.push_back(x0);
  size_t anchors_seen = 0;

  auto cb = [&](const ode::DenseStep& ds) -> std::optional<double> {
    auto x_at = [&](double t) { return unpack_x(ds.eval(t)); };
    auto r = detail::flow_events(st, ds, x_at);
    while (anchors_seen < traj.anchors.size()) {
      out.anchor_frames.push_back(unpack_v(ds.eval(traj.anchors[anchors_seen].t)));
      ++anchors_seen;
    }
    if (watch_point) {
      // Track the closest approach with a golden-section polish per step.
      auto dist = [&](double t) { return sc.space.distance(x_at(t), *watch_point); };
      double hi = r ? *r : ds.t_end();
      double a = ds.t0, b = hi;
      if (b > a) {
        const double gr = 0.6180339887498949;
        double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
        double f1 = dist(c1), f2 = dist(c2);
        for (int it = 0; it < 60; ++it) {
          if (f1 < f2) {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - gr * (b - a);
            f1 = dist(c1);
          } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + gr * (b - a);
            f2 = dist(c2);
          }
        }
        double tm = 0.5 * (a + b);
        for (double t : {ds.t0, tm, hi}) {
          double dv = dist(t);
          if (dv < out.closest_dist) {
            out.closest_dist = dv;
            out.closest_t = t;
            out.closest_x = x_at(t);
            out.closest_frame = unpack_v(ds.eval(t));
          }
        }
      }
    }
    if (!r) {
      traj.times.push_back(ds.t_end());
      traj.states.push_back(x_at(ds.t_end()));
    }
    return r;
  };

  auto res = ode::drive(rhs, pack(x0, frame0), 0.0, stop.t_max, opt, cb);
  traj.terminal_t = res.t;
  traj.terminal_x = unpack_x(res.y);
  out.frame_end = unpack_v(res.y);
  if (res.hit_t_end) traj.terminal = TerminalKind::time_limit;
  traj.times.push_back(res.t);
  traj.states.push_back(traj.terminal_x);
  if (watch_point && !out.closest_x.size()) {
    out.closest_dist = sc.space.distance(traj.terminal_x, *watch_point);
    out.closest_t = res.t;
    out.closest_x = traj.terminal_x;
    out.closest_frame = out.frame_end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Limit classification

enum class LimitClass { converged, escaped, unresolved };

struct LimitResult {
  LimitClass kind = LimitClass::unresolved;
  int critical_id = -1;
  double t = 0;
  Vec x;
  double dist = std::numeric_limits<double>::infinity();
};

namespace detail {

// Sound trapping certificate for minima: once f(x) < f(q) + margin inside the
// ball, f can never again reach the ball's boundary values, so the trajectory
// is trapped with q the only critical point inside.
inline double trap_margin(const Scenario& sc, const CriticalPoint& q, double radius) {
  if (q.index != 0) return -1.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(sc.eval(q.location, 2).hessian);
  double lmin = es.eigenvalues().minCoeff();
  if (lmin <= 0) return -1.0;
  return 0.4 * lmin * radius * radius;
}

}  // namespace detail

inline LimitResult classify_limit(const Scenario& sc, const VectorField& field, const Vec& x0,
                                  const std::vector<CriticalPoint>& points,
                                  double ball_radius = -1, double t_max = -1) {
  if (ball_radius <= 0) ball_radius = sc.tol.ball_radius;
  if (t_max <= 0) t_max = sc.tol.t_max;

  std::vector<double> margins;
  margins.reserve(points.size());
  for (const auto& q : points) margins.push_back(detail::trap_margin(sc, q, ball_radius));

  ode::Options opt;
  opt.abs_tol = sc.tol.ode_abs;
  opt.rel_tol = sc.tol.ode_rel;
  auto rhs = [&](const Vec& x) { return field.value(sc.space.wrap(x)); };

  LimitResult out;
  int trapped = -1;
  auto cb = [&](const ode::DenseStep& ds) -> std::optional<double> {
    Vec x1 = ds.eval(ds.t_end());
    if (!sc.space.torus && x1.norm() >= sc.tol.escape_radius) {
      out.kind = LimitClass::escaped;
      return ds.t_end();
    }
    double f1 = sc.f->value(sc.space.wrap(x1));
    for (size_t i = 0; i < points.size(); ++i) {
      if (margins[i] <= 0) continue;
      if (sc.space.distance(x1, points[i].location) <= ball_radius &&
          f1 - points[i].value < margins[i]) {
        trapped = (int)i;
        return ds.t_end();
      }
    }
    return std::nullopt;
  };

  auto res = ode::drive(rhs, x0, 0.0, t_max, opt, cb);
  out.t = res.t;
  out.x = res.y;
  if (out.kind == LimitClass::escaped) return out;
  if (trapped >= 0) {
    out.kind = LimitClass::converged;
    out.critical_id = points[trapped].id;
    out.dist = sc.space.distance(res.y, points[trapped].location);
    return out;
  }
  // Horizon reached: accept the nearest critical point if inside the ball.
  double d = 0;
  const auto& q = nearest_critical_point(sc, points, sc.space.wrap(res.y), &d);
  if (d <= ball_radius) {
    out.kind = LimitClass::converged;
    out.critical_id = q.id;
    out.dist = d;
  } else {
    out.kind = LimitClass::unresolved;
    out.dist = d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison-theorem oracle (test utility)

struct ComparisonReport {
  bool ok = true;
  double max_violation = 0;
};

// Checks y(t) <= x(t) + tol (direction +1) or y(t) >= x(t) - tol (direction -1)
// where x solves dx/dt = F(t, x) with x(t0) = y(t0).
inline ComparisonReport comparison_oracle(const std::function<double(double, double)>& F,
                                          const std::vector<std::pair<double, double>>& y_samples,
                                          int direction = +1, double tol = 1e-8) {
  ComparisonReport rep;
  if (y_samples.size() < 2) return rep;
  double t0 = y_samples.front().first;
  double x0 = y_samples.front().second;

  // Augment time to reuse the autonomous driver.
  auto rhs = [&](const Vec& y) {
    Vec dy(2);
    dy[0] = F(y[1], y[0]);
    dy[1] = 1.0;
    return dy;
  };
  ode::Options opt;
  opt.abs_tol = 1e-12;
  opt.rel_tol = 1e-12;

  size_t next = 1;
  Vec y0(2);
  y0 << x0, t0;
  auto cb = [&](const ode::DenseStep& ds) -> std::optional<double> {
    while (next < y_samples.size() && y_samples[next].first <= ds.t_end() + 1e-15) {
      double ts = y_samples[next].first;
      double xs = ds.eval(ts)[0];
      double ys = y_samples[next].second;
      double viol = direction > 0 ? ys - xs - tol : xs - ys - tol;
      if (viol > 0) {
        rep.ok = false;
        rep.max_violation = std::max(rep.max_violation, viol);
      }
      ++next;
    }
    return std::nullopt;
  };
  ode::drive(rhs, y0, t0, y_samples.back().first, opt, cb);
  return rep;
}

}  // namespace morsekit
