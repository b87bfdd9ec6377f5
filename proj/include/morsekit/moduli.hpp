#pragma once

#include <map>

#include "morsekit/normalform.hpp"

namespace morsekit {

// ---------------------------------------------------------------------------
// Records

struct Connection {
  int p_id = -1, q_id = -1;
  Vec sphere_param;   // unit vector in the span of p's negative frame
  double epsilon = 0;
  Vec shoot_point;
  std::vector<Anchor> anchors;  // levels strictly between f(q) and f(p), descending
  int sign = 0;
  double margin = 0;            // transversality margin at the first anchor
  double pass_distance = std::numeric_limits<double>::infinity();
};

struct ModuliSpaceZeroDim {
  int p_id = -1, q_id = -1;
  std::vector<Connection> connections;
  long signed_count = 0;
  int unresolved_samples = 0;
  int total_samples = 0;
  bool transversality_suspect = false;
};

struct BrokenPairRef {
  int r_id = -1;
  int conn_pr = -1;  // index into M(p,r).connections
  int conn_rq = -1;  // index into M(r,q).connections
  double anchor_mismatch = 0;
};

struct ArcEndpoint {
  double theta = 0;
  BrokenPairRef broken;
};

struct Arc {
  double theta_lo = 0, theta_hi = 0;  // open interval on the shooting circle
  ArcEndpoint lo, hi;
};

struct ModuliSpaceOneDim {
  int p_id = -1, q_id = -1;
  std::vector<Arc> arcs;
  std::vector<std::string> failures;  // stratification / matching diagnostics
};

struct GeneralizedFlowLine {
  std::vector<int> sequence;      // critical ids, head to tail
  std::vector<Anchor> evaluation; // one anchor per regular level, f descending
};

struct CompactifiedStratum {
  std::vector<int> sequence;
  std::vector<GeneralizedFlowLine> elements;
};

struct CompactifiedModuli {
  int p_id = -1, q_id = -1;
  std::vector<CompactifiedStratum> strata;  // |I| = 0 first, then |I| = 1, ...
};

// ---------------------------------------------------------------------------
// Unstable-sphere sampling

// Uniform deterministic grid on the unit sphere S^{k-1}: antipodal pair for
// k = 1, equal angles for k = 2, hyperspherical product grid above.
inline std::vector<Vec> sample_unstable_sphere_params(int k, int count) {
  std::vector<Vec> out;
  if (k < 1) throw ValidationError("unstable sphere needs index >= 1");
  if (k == 1) {
    out.push_back(Vec::Constant(1, 1.0));
    out.push_back(Vec::Constant(1, -1.0));
    return out;
  }
  if (k == 2) {
    for (int j = 0; j < count; ++j) {
      double th = 2.0 * kPi * j / count;
      Vec u(2);
      u << std::cos(th), std::sin(th);
      out.push_back(u);
    }
    return out;
  }
  int per = std::max(3, (int)std::round(std::pow((double)count, 1.0 / (k - 1))));
  std::vector<int> idx(k - 1, 0);
  while (true) {
    std::vector<double> ang(k - 1);
    for (int i = 0; i < k - 2; ++i) ang[i] = kPi * (idx[i] + 0.5) / per;
    ang[k - 2] = 2.0 * kPi * idx[k - 2] / per;
    Vec u(k);
    double sines = 1.0;
    for (int i = 0; i < k - 1; ++i) {
      u[i] = sines * std::cos(ang[i]);
      sines *= std::sin(ang[i]);
    }
    u[k - 1] = sines;
    out.push_back(u);
    int i = 0;
    for (; i < k - 1; ++i) {
      if (++idx[i] < per) break;
      idx[i] = 0;
    }
    if (i == k - 1) break;
  }
  return out;
}

inline std::vector<Vec> sample_unstable_sphere(const CriticalPoint& p, double eps, int count) {
  if (p.index < 1) throw ValidationError("sample_unstable_sphere: index-0 point has empty sphere");
  std::vector<Vec> pts;
  for (const auto& u : sample_unstable_sphere_params(p.index, count))
    pts.push_back(p.location + eps * (p.neg_frame * u));
  return pts;
}

// ---------------------------------------------------------------------------
// Engine

class ModuliEngine {
 public:
  ModuliEngine(const Scenario& sc, const VectorField& field, std::vector<CriticalPoint> points)
      : sc_(&sc), field_(&field), points_(std::move(points)) {
    for (const auto& q : points_)
      margins_.push_back(detail::trap_margin(*sc_, q, sc_->tol.ball_radius));
    std::vector<double> values;
    for (const auto& q : points_) values.push_back(q.value);
    std::sort(values.begin(), values.end(), std::greater<double>());
    values.erase(std::unique(values.begin(), values.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 values.end());
    distinct_values_ = values;
    for (size_t i = 0; i + 1 < values.size(); ++i)
      levels_.push_back(0.5 * (values[i] + values[i + 1]));
  }

  const std::vector<CriticalPoint>& points() const { return points_; }
  const std::vector<double>& levels() const { return levels_; }

  std::vector<double> levels_between(double lo, double hi) const {
    std::vector<double> out;
    for (double a : levels_)
      if (a > lo && a < hi) out.push_back(a);
    return out;
  }

  // -------------------------------------------------------------------------
  // One shot: classify the limit, record level anchors, track per-point
  // closest approaches.
  struct Shot {
    double theta = 0;   // parameter for circle shots
    int limit = kUnresolved;  // critical id, kUnresolved or kEscaped
    std::vector<Anchor> anchors;
    std::vector<double> min_dist;
    std::vector<double> min_dist_t;
    Vec terminal;
    double terminal_t = 0;
  };
  static constexpr int kUnresolved = -1;
  static constexpr int kEscaped = -2;

  Shot shoot(const Vec& x0, const std::vector<double>& levels) const {
    const Scenario& sc = *sc_;
    Shot shot;
    shot.min_dist.assign(points_.size(), std::numeric_limits<double>::infinity());
    shot.min_dist_t.assign(points_.size(), 0.0);

    ode::Options opt;
    opt.abs_tol = sc.tol.ode_abs;
    opt.rel_tol = sc.tol.ode_rel;
    auto rhs = [&](const Vec& x) { return field_->value(sc.space.wrap(x)); };

    std::vector<double> pending = levels;
    double prev_f = sc.f->value(sc.space.wrap(x0));
    int trapped = -1;

    auto cb = [&](const ode::DenseStep& ds) -> std::optional<double> {
      // Closest-approach tracking on a substep sweep with a golden polish for
      // improving candidates.
      const int m = 8;
      for (size_t j = 0; j < points_.size(); ++j) {
        const Vec& c = points_[j].location;
        double coarse = shot.min_dist[j];
        double coarse_t = shot.min_dist_t[j];
        for (int i = 0; i <= m; ++i) {
          double t = ds.t0 + ds.h * i / m;
          double d = sc.space.distance(ds.eval(t), c);
          if (d < coarse) {
            coarse = d;
            coarse_t = t;
          }
        }
        if (coarse < shot.min_dist[j]) {
          if (coarse < 0.05) {
            auto dist = [&](double t) { return sc.space.distance(ds.eval(t), c); };
            double a = std::max(ds.t0, coarse_t - ds.h / m);
            double b = std::min(ds.t_end(), coarse_t + ds.h / m);
            const double gr = 0.6180339887498949;
            double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
            double f1 = dist(c1), f2 = dist(c2);
            for (int it = 0; it < 50; ++it) {
              if (f1 < f2) {
                b = c2; c2 = c1; f2 = f1;
                c1 = b - gr * (b - a); f1 = dist(c1);
              } else {
                a = c1; c1 = c2; f1 = f2;
                c2 = a + gr * (b - a); f2 = dist(c2);
              }
            }
            double tm = 0.5 * (a + b);
            double dm = dist(tm);
            if (dm < coarse) {
              coarse = dm;
              coarse_t = tm;
            }
          }
          shot.min_dist[j] = coarse;
          shot.min_dist_t[j] = coarse_t;
        }
      }

      // Level anchors.
      double f1 = sc.f->value(sc.space.wrap(ds.eval(ds.t_end())));
      for (auto it = pending.begin(); it != pending.end();) {
        if (prev_f > *it && f1 <= *it) {
          double a = *it;
          auto g = [&](double t) { return sc.f->value(sc.space.wrap(ds.eval(t))) - a; };
          double ts = ode::find_root(g, ds.t0, ds.t_end(), 1e-12);
          Anchor an;
          an.level = a;
          an.t = ts;
          an.point = sc.space.wrap(ds.eval(ts));
          shot.anchors.push_back(std::move(an));
          it = pending.erase(it);
        } else {
          ++it;
        }
      }
      prev_f = f1;

      Vec x1 = ds.eval(ds.t_end());
      if (!sc.space.torus && x1.norm() >= sc.tol.escape_radius) {
        shot.limit = kEscaped;
        return ds.t_end();
      }
      for (size_t j = 0; j < points_.size(); ++j) {
        if (margins_[j] <= 0) continue;
        if (sc.space.distance(x1, points_[j].location) <= sc.tol.ball_radius &&
            f1 - points_[j].value < margins_[j]) {
          trapped = (int)j;
          return ds.t_end();
        }
      }
      return std::nullopt;
    };

    auto res = ode::drive(rhs, x0, 0.0, sc.tol.t_max, opt, cb);
    shot.terminal = res.y;
    shot.terminal_t = res.t;
    if (shot.limit == kEscaped) return shot;
    if (trapped >= 0) {
      shot.limit = points_[trapped].id;
      return shot;
    }
    double d = 0;
    const auto& q = nearest_critical_point(sc, points_, sc.space.wrap(res.y), &d);
    shot.limit = d <= sc.tol.ball_radius ? q.id : kUnresolved;
    return shot;
  }

  // -------------------------------------------------------------------------
  // Boundary location on the index-2 shooting circle.
  struct Boundary {
    double theta = 0;
    int r_id = -1;                 // closest intermediate critical point
    double pass_distance = std::numeric_limits<double>::infinity();
    double pass_theta = 0;
    bool bisection_converged = true;
  };

  Vec circle_point(const CriticalPoint& p, double theta, double eps) const {
    Vec u(2);
    u << std::cos(theta), std::sin(theta);
    return sc_->space.wrap(p.location + eps * (p.neg_frame * u));
  }

  // Distance between anchor tuples: max over shared levels; +inf when no
  // level is shared.
  double anchor_distance(const std::vector<Anchor>& a, const std::vector<Anchor>& b) const {
    double worst = -1;
    for (const auto& x : a)
      for (const auto& y : b)
        if (std::abs(x.level - y.level) < 1e-12)
          worst = std::max(worst, sc_->space.distance(x.point, y.point));
    return worst < 0 ? std::numeric_limits<double>::infinity() : worst;
  }

  bool is_boundary(const Shot& a, const Shot& b) const {
    if (a.limit != b.limit) return true;
    return anchor_distance(a.anchors, b.anchors) > sc_->tol.anchor_jump;
  }

  std::vector<Boundary> locate_boundaries(const CriticalPoint& p, int count, double eps) const {
    if (p.index != 2)
      throw ValidationError("shooting-circle boundary location requires an index-2 source");
    std::vector<double> lv = levels_between(-std::numeric_limits<double>::infinity(), p.value);
    std::vector<Shot> shots(count);
    for (int j = 0; j < count; ++j) {
      shots[j] = shoot(circle_point(p, 2.0 * kPi * j / count, eps), lv);
      shots[j].theta = 2.0 * kPi * j / count;
    }

    std::vector<Boundary> raw;
    for (int j = 0; j < count; ++j) {
      const Shot& a = shots[j];
      const Shot& b = shots[(j + 1) % count];
      double tb = (j + 1 == count) ? 2.0 * kPi : b.theta;
      if (!is_boundary(a, b)) continue;
      raw.push_back(bisect_boundary(p, eps, lv, a.theta, tb, a, b));
    }

    // Merge boundaries produced by samples landing exactly on a separatrix.
    std::vector<Boundary> merged;
    for (auto& bd : raw) {
      bool dup = false;
      for (auto& m : merged) {
        double d = std::remainder(bd.theta - m.theta, 2.0 * kPi);
        if (std::abs(d) < 16.0 * kPi / count * 1e-3 + 1e-7) {
          if (bd.pass_distance < m.pass_distance) m = bd;
          dup = true;
          break;
        }
      }
      if (!dup) merged.push_back(bd);
    }
    std::sort(merged.begin(), merged.end(),
              [](const Boundary& a, const Boundary& b) { return a.theta < b.theta; });
    return merged;
  }

  Boundary bisect_boundary(const CriticalPoint& p, double eps, const std::vector<double>& lv,
                           double ta, double tb, Shot sa, Shot sb) const {
    Boundary bd;
    std::vector<double> best(points_.size(), std::numeric_limits<double>::infinity());
    std::vector<double> best_theta(points_.size(), 0.0);
    auto absorb = [&](const Shot& s, double theta) {
      for (size_t j = 0; j < points_.size(); ++j)
        if (s.min_dist[j] < best[j]) {
          best[j] = s.min_dist[j];
          best_theta[j] = theta;
        }
    };
    absorb(sa, ta);
    absorb(sb, tb);

    auto intermediate_pass = [&]() {
      double d = std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < points_.size(); ++j)
        if (points_[j].index == p.index - 1) d = std::min(d, best[j]);
      return d;
    };

    while (tb - ta > 5e-13) {
      if (tb - ta < sc_->tol.param_bisect && intermediate_pass() <= sc_->tol.connection_pass)
        break;
      double tm = 0.5 * (ta + tb);
      Shot sm = shoot(circle_point(p, tm, eps), lv);
      absorb(sm, tm);
      bool side_a;
      if (sm.limit == sa.limit && sm.limit == sb.limit) {
        side_a = anchor_distance(sm.anchors, sa.anchors) <= anchor_distance(sm.anchors, sb.anchors);
      } else if (sm.limit == sa.limit) {
        side_a = true;
      } else if (sm.limit == sb.limit) {
        side_a = false;
      } else {
        side_a = anchor_distance(sm.anchors, sa.anchors) <= anchor_distance(sm.anchors, sb.anchors);
      }
      if (side_a) {
        ta = tm;
        sa = std::move(sm);
      } else {
        tb = tm;
        sb = std::move(sm);
      }
    }
    bd.theta = std::remainder(0.5 * (ta + tb), 2.0 * kPi);
    if (bd.theta < 0) bd.theta += 2.0 * kPi;
    for (size_t j = 0; j < points_.size(); ++j) {
      if (points_[j].index != p.index - 1) continue;
      if (best[j] < bd.pass_distance) {
        bd.pass_distance = best[j];
        bd.r_id = points_[j].id;
        bd.pass_theta = best_theta[j];
      }
    }
    bd.bisection_converged = bd.pass_distance <= sc_->tol.broken_locus;
    return bd;
  }

  // -------------------------------------------------------------------------
  // Zero-dimensional moduli spaces (index difference 1)

  ModuliSpaceZeroDim find_connections(const CriticalPoint& p, const CriticalPoint& q,
                                      int sphere_count, double eps = -1) const {
    if (p.index - q.index != 1)
      throw ValidationError("find_connections requires ind(p) - ind(q) = 1");
    if (eps <= 0) eps = sc_->tol.shoot_epsilon;
    ModuliSpaceZeroDim ms;
    ms.p_id = p.id;
    ms.q_id = q.id;
    std::vector<double> conn_levels = levels_between(q.value, p.value);

    if (p.index == 1) {
      ms.total_samples = 2;
      for (const auto& u : sample_unstable_sphere_params(1, 2)) {
        Vec x0 = sc_->space.wrap(p.location + eps * (p.neg_frame * u));
        Shot s = shoot(x0, conn_levels);
        if (s.limit == kUnresolved) ++ms.unresolved_samples;
        if (s.limit != q.id) continue;
        Connection c;
        c.p_id = p.id;
        c.q_id = q.id;
        c.sphere_param = u;
        c.epsilon = eps;
        c.shoot_point = x0;
        c.anchors = s.anchors;
        c.pass_distance = s.min_dist[q.id];
        ms.connections.push_back(std::move(c));
      }
    } else if (p.index == 2) {
      ms.total_samples = sphere_count;
      auto boundaries = locate_boundaries(p, sphere_count, eps);
      for (const auto& bd : boundaries) {
        if (bd.r_id != q.id || bd.pass_distance > sc_->tol.connection_pass) continue;
        Vec u(2);
        u << std::cos(bd.pass_theta), std::sin(bd.pass_theta);
        Vec x0 = circle_point(p, bd.pass_theta, eps);
        Shot s = shoot(x0, conn_levels);
        Connection c;
        c.p_id = p.id;
        c.q_id = q.id;
        c.sphere_param = u;
        c.epsilon = eps;
        c.shoot_point = x0;
        c.anchors = s.anchors;
        c.pass_distance = bd.pass_distance;
        bool dup = false;
        for (const auto& prev : ms.connections)
          if (anchor_distance(prev.anchors, c.anchors) <= 1e-4) dup = true;
        if (!dup) ms.connections.push_back(std::move(c));
      }
    } else {
      throw ValidationError("connection location beyond index-2 sources is not supported");
    }

    for (auto& c : ms.connections) analyze_connection(c);
    for (const auto& c : ms.connections) ms.signed_count += c.sign;
    if (ms.total_samples > 0 &&
        ms.unresolved_samples > std::max(1, ms.total_samples / 100))
      ms.transversality_suspect = true;
    return ms;
  }

  // Sign and transversality margin from variationally transported frames.
  //
  // Transport p's orientation frame forward to the first anchor x, obtaining
  // U spanning T_x D(p); transport q's descending frame backward from the
  // closest pass y near q, obtaining V for the co-orientation of A(q); the
  // sign is det[flow | V] expressed in the basis U.
  void analyze_connection(Connection& c) const {
    const Scenario& sc = *sc_;
    const CriticalPoint& p = points_[c.p_id];
    const CriticalPoint& q = points_[c.q_id];
    int n = sc.space.dim, k = p.index;
    if (c.anchors.empty()) throw NumericalError("connection without anchors");

    StopSpec stop;
    stop.t_max = sc.tol.t_max;
    stop.record_levels = {c.anchors.front().level};
    // Stop on entering a small ball around q: the trajectory either converges
    // to q or shadows it within the connection-pass tolerance, and the
    // backward transport only needs a point near q.
    stop.ball = {q.location, sc.tol.ball_radius};

    Vec watch = q.location;
    auto vr = integrate_variational(sc, *field_, c.shoot_point, Mat::Identity(n, n), stop, &watch);
    if (vr.anchor_frames.empty())
      throw NumericalError("sign transport: anchor not reached");
    Mat j_x = vr.anchor_frames.front();
    Vec x = vr.traj.anchors.front().point;

    Mat u_frame = j_x * p.neg_frame;  // k columns spanning T_x D(p)
    Vec flow = field_->value(sc.space.wrap(x));
    if (flow.norm() < 1e-14) throw NumericalError("sign transport: vanishing field at anchor");
    flow.normalize();

    // Pull q's frames back from the closest pass y to the anchor x.
    Mat j_y = vr.closest_frame;
    Mat pullback = j_x * j_y.partialPivLu().solve(Mat::Identity(n, n));
    Mat back = pullback * q.neg_frame;     // co-orientation of A(q): k - 1 columns
    Mat a_frame = pullback * q.pos_frame;  // T A(q): n - k + 1 columns

    // Orthonormal oriented basis of span(U).
    Eigen::HouseholderQR<Mat> qr(u_frame);
    Mat qfull = qr.householderQ();
    Mat qu = qfull.leftCols(k);
    Mat rdiag = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    for (int i = 0; i < k; ++i)
      if (rdiag(i, i) < 0) qu.col(i) = -qu.col(i);

    Mat cols(n, k);
    cols.col(0) = flow;
    for (int i = 0; i < k - 1; ++i) {
      Vec v = back.col(i);
      cols.col(1 + i) = v / v.norm();
    }
    Mat m = qu.transpose() * cols;
    double det = m.determinant();
    if (std::abs(det) < sc.tol.sign_det_floor) {
      std::ostringstream os;
      os << "transversality-suspect: |det| = " << std::abs(det) << " for connection "
         << c.p_id << " -> " << c.q_id;
      throw NumericalError(os.str());
    }
    c.sign = det > 0 ? 1 : -1;
    c.margin = level_margin(u_frame, a_frame, x);
  }

  // Smallest principal angle between D(p) cap level and A(q) cap level at the
  // anchor. Degenerate (empty) sides report pi/2: transversality is vacuous
  // there.
  double level_margin(const Mat& d_frame, const Mat& a_frame, const Vec& x) const {
    Vec g = sc_->f->gradient(sc_->space.wrap(x));
    auto level_basis = [&](const Mat& frame) -> Mat {
      if (frame.cols() == 0) return Mat(frame.rows(), 0);
      Eigen::RowVectorXd row = g.transpose() * frame;
      Eigen::JacobiSVD<Mat> svd(row, Eigen::ComputeFullV);
      int rank = row.norm() > 1e-13 ? 1 : 0;
      Mat null = svd.matrixV().rightCols(frame.cols() - rank);
      Mat basis = frame * null;
      if (basis.cols() == 0) return basis;
      Eigen::HouseholderQR<Mat> qr(basis);
      return Mat(qr.householderQ()).leftCols(basis.cols());
    };
    Mat b1 = level_basis(d_frame);
    Mat b2 = level_basis(a_frame);
    if (b1.cols() == 0 || b2.cols() == 0) return kPi / 2;
    Eigen::JacobiSVD<Mat> svd(b1.transpose() * b2);
    double c = std::min(1.0, svd.singularValues().maxCoeff());
    return std::acos(c);
  }

  std::map<std::pair<int, int>, ModuliSpaceZeroDim> compute_all_zero_dim(int sphere_count,
                                                                         double eps = -1) const {
    std::map<std::pair<int, int>, ModuliSpaceZeroDim> out;
    for (const auto& p : points_)
      for (const auto& q : points_)
        if (p.index - q.index == 1)
          out[{p.id, q.id}] = find_connections(p, q, sphere_count, eps);
    return out;
  }

  // -------------------------------------------------------------------------
  // One-dimensional moduli spaces (index difference 2)

  ModuliSpaceOneDim trace_one_dim_moduli(
      const CriticalPoint& p, const CriticalPoint& q, int resolution,
      const std::map<std::pair<int, int>, ModuliSpaceZeroDim>& zero_dim,
      double eps = -1) const {
    if (p.index - q.index != 2)
      throw ValidationError("trace_one_dim_moduli requires ind(p) - ind(q) = 2");
    if (p.index != 2)
      throw ValidationError("one-dimensional tracing beyond index-2 sources is not supported");
    if (eps <= 0) eps = sc_->tol.shoot_epsilon;

    ModuliSpaceOneDim ms;
    ms.p_id = p.id;
    ms.q_id = q.id;
    auto boundaries = locate_boundaries(p, resolution, eps);
    if (boundaries.empty()) {
      // Whole circle is one family only when there is no intermediate point;
      // with boundaries absent we record a single full arc.
      Arc arc;
      arc.theta_lo = 0;
      arc.theta_hi = 2.0 * kPi;
      ms.arcs.push_back(arc);
      return ms;
    }

    for (const auto& bd : boundaries)
      if (bd.r_id < 0 || bd.pass_distance > sc_->tol.broken_locus) {
        std::ostringstream os;
        os << "stratification failure: boundary at theta = " << bd.theta
           << " passes no intermediate point within " << sc_->tol.broken_locus
           << " (closest " << bd.pass_distance << ")";
        ms.failures.push_back(os.str());
      }

    std::vector<double> lv = levels_between(q.value, p.value);
    const double probe_offset = 1e-8;

    for (size_t i = 0; i < boundaries.size(); ++i) {
      const Boundary& blo = boundaries[i];
      const Boundary& bhi = boundaries[(i + 1) % boundaries.size()];
      double hi_theta = (i + 1 == boundaries.size()) ? bhi.theta + 2.0 * kPi : bhi.theta;
      Arc arc;
      arc.theta_lo = blo.theta;
      arc.theta_hi = hi_theta;

      double mid = 0.5 * (blo.theta + hi_theta);
      Shot sm = shoot(circle_point(p, mid, eps), lv);
      if (sm.limit != q.id) {
        std::ostringstream os;
        os << "arc (" << arc.theta_lo << ", " << arc.theta_hi
           << ") does not flow to the requested target";
        ms.failures.push_back(os.str());
        continue;
      }
      arc.lo = match_endpoint(p, q, blo, blo.theta + probe_offset, zero_dim, eps, ms.failures);
      arc.hi = match_endpoint(p, q, bhi, hi_theta - probe_offset, zero_dim, eps, ms.failures);
      ms.arcs.push_back(std::move(arc));
    }
    return ms;
  }

  ArcEndpoint match_endpoint(const CriticalPoint& p, const CriticalPoint& q, const Boundary& bd,
                             double probe_theta,
                             const std::map<std::pair<int, int>, ModuliSpaceZeroDim>& zero_dim,
                             double eps, std::vector<std::string>& failures) const {
    ArcEndpoint ep;
    ep.theta = bd.theta;
    ep.broken.r_id = bd.r_id;
    if (bd.r_id < 0) return ep;
    const CriticalPoint& r = points_[bd.r_id];

    Shot probe = shoot(circle_point(p, probe_theta, eps),
                       levels_between(q.value, p.value));
    auto upper_it = zero_dim.find({p.id, r.id});
    auto lower_it = zero_dim.find({r.id, q.id});
    if (upper_it == zero_dim.end() || lower_it == zero_dim.end()) {
      failures.push_back("broken-pair matching: missing zero-dimensional moduli");
      return ep;
    }

    auto match = [&](const ModuliSpaceZeroDim& ms, bool above) -> std::pair<int, double> {
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < ms.connections.size(); ++i) {
        double worst = -1;
        for (const auto& ca : ms.connections[i].anchors) {
          if (above && ca.level <= r.value) continue;
          if (!above && ca.level >= r.value) continue;
          for (const auto& pa : probe.anchors)
            if (std::abs(pa.level - ca.level) < 1e-12)
              worst = std::max(worst, sc_->space.distance(pa.point, ca.point));
        }
        if (worst >= 0 && worst < best_d) {
          best_d = worst;
          best = (int)i;
        }
      }
      return {best, best_d};
    };

    auto [i_pr, d_pr] = match(upper_it->second, true);
    auto [i_rq, d_rq] = match(lower_it->second, false);
    ep.broken.conn_pr = i_pr;
    ep.broken.conn_rq = i_rq;
    ep.broken.anchor_mismatch = std::max(d_pr, d_rq);
    if (i_pr < 0 || i_rq < 0 || ep.broken.anchor_mismatch > sc_->tol.broken_match) {
      std::ostringstream os;
      os << "broken-pair matching failed at theta = " << bd.theta
         << " (mismatch " << ep.broken.anchor_mismatch << ")";
      failures.push_back(os.str());
    }
    return ep;
  }

  // -------------------------------------------------------------------------
  // Compactified strata

  std::vector<std::vector<int>> critical_sequences(
      int p_id, int q_id,
      const std::map<std::pair<int, int>, ModuliSpaceZeroDim>& zero_dim) const {
    // Chains p = r_0 > r_1 > ... > r_{k+1} = q along nonempty connection sets.
    std::vector<std::vector<int>> out;
    std::vector<int> chain = {p_id};
    std::function<void(int)> dfs = [&](int cur) {
      if (cur == q_id && chain.size() >= 2) {
        out.push_back(chain);
        return;
      }
      for (const auto& [key, ms] : zero_dim) {
        if (key.first != cur || ms.connections.empty()) continue;
        chain.push_back(key.second);
        dfs(key.second);
        chain.pop_back();
      }
      // Index gaps of 2 within a sequence do not occur among zero-dim moduli;
      // direct p -> q components of longer drops are handled by the caller.
    };
    dfs(p_id);
    return out;
  }

  CompactifiedModuli assemble_compactified(
      const CriticalPoint& p, const CriticalPoint& q,
      const std::map<std::pair<int, int>, ModuliSpaceZeroDim>& zero_dim,
      const ModuliSpaceOneDim* one_dim = nullptr, double eps = -1) const {
    if (eps <= 0) eps = sc_->tol.shoot_epsilon;
    CompactifiedModuli cm;
    cm.p_id = p.id;
    cm.q_id = q.id;
    int diff = p.index - q.index;

    CompactifiedStratum top;
    top.sequence = {p.id, q.id};
    if (diff == 1) {
      auto it = zero_dim.find({p.id, q.id});
      if (it != zero_dim.end())
        for (const auto& c : it->second.connections) {
          GeneralizedFlowLine g;
          g.sequence = {p.id, q.id};
          g.evaluation = c.anchors;
          top.elements.push_back(std::move(g));
        }
    } else if (diff == 2 && one_dim) {
      for (const auto& arc : one_dim->arcs) {
        double mid = 0.5 * (arc.theta_lo + arc.theta_hi);
        Shot s = shoot(circle_point(p, mid, eps), levels_between(q.value, p.value));
        GeneralizedFlowLine g;
        g.sequence = {p.id, q.id};
        g.evaluation = s.anchors;
        top.elements.push_back(std::move(g));
      }
    }
    cm.strata.push_back(std::move(top));

    // |I| = 1 strata: products M(p,r) x M(r,q) assembled by concatenation.
    for (const auto& r : points_) {
      auto pr = zero_dim.find({p.id, r.id});
      auto rq = zero_dim.find({r.id, q.id});
      if (pr == zero_dim.end() || rq == zero_dim.end()) continue;
      if (pr->second.connections.empty() || rq->second.connections.empty()) continue;
      CompactifiedStratum st;
      st.sequence = {p.id, r.id, q.id};
      for (const auto& c1 : pr->second.connections)
        for (const auto& c2 : rq->second.connections) {
          GeneralizedFlowLine g;
          g.sequence = {p.id, r.id, q.id};
          g.evaluation = c1.anchors;
          g.evaluation.insert(g.evaluation.end(), c2.anchors.begin(), c2.anchors.end());
          for (size_t i = 0; i + 1 < g.evaluation.size(); ++i)
            if (g.evaluation[i].level <= g.evaluation[i + 1].level)
              throw NumericalError("compactified assembly: anchors not monotone in f");
          st.elements.push_back(std::move(g));
        }
      cm.strata.push_back(std::move(st));
    }

    // E is injective across the assembled family.
    std::vector<const GeneralizedFlowLine*> all;
    for (const auto& st : cm.strata)
      for (const auto& g : st.elements) all.push_back(&g);
    for (size_t i = 0; i < all.size(); ++i)
      for (size_t j = i + 1; j < all.size(); ++j) {
        double sep = -1;
        for (const auto& a : all[i]->evaluation)
          for (const auto& b : all[j]->evaluation)
            if (std::abs(a.level - b.level) < 1e-12)
              sep = std::max(sep, sc_->space.distance(a.point, b.point));
        if (sep >= 0 && sep <= sc_->tol.dedup_distance)
          throw NumericalError("compactified assembly: evaluation map not injective");
      }
    return cm;
  }

 private:
  const Scenario* sc_;
  const VectorField* field_;
  std::vector<CriticalPoint> points_;
  std::vector<double> margins_;
  std::vector<double> distinct_values_;  // descending
  std::vector<double> levels_;           // midpoints, descending
};

// ---------------------------------------------------------------------------
// Homotopy comparison

struct HomotopyPairCounts {
  int p_id = -1, q_id = -1;
  int count = 0;
  long signed_count = 0;
  double min_margin = kPi / 2;
};

struct HomotopyStageReport {
  double s = 0;
  std::vector<HomotopyPairCounts> pairs;
  bool margin_degraded = false;
};

struct HomotopyInvarianceReport {
  std::vector<HomotopyStageReport> stages;
  bool counts_invariant = true;
  bool signed_counts_invariant = true;
  double min_margin = kPi / 2;
};

inline HomotopyInvarianceReport compare_under_homotopy(
    const Scenario& sc, const FieldHomotopy& homotopy, const std::vector<double>& s_grid,
    const std::vector<CriticalPoint>& points,
    const std::vector<std::pair<int, int>>& pairs, int sphere_count, double eps = -1) {
  HomotopyInvarianceReport rep;
  for (double s : s_grid) {
    auto member = homotopy.member(s);
    ModuliEngine engine(sc, *member, points);
    HomotopyStageReport stage;
    stage.s = s;
    for (auto [pid, qid] : pairs) {
      auto ms = engine.find_connections(points[pid], points[qid], sphere_count, eps);
      HomotopyPairCounts pc;
      pc.p_id = pid;
      pc.q_id = qid;
      pc.count = (int)ms.connections.size();
      pc.signed_count = ms.signed_count;
      for (const auto& c : ms.connections) pc.min_margin = std::min(pc.min_margin, c.margin);
      if (pc.min_margin < sc.tol.margin_floor) stage.margin_degraded = true;
      rep.min_margin = std::min(rep.min_margin, pc.min_margin);
      stage.pairs.push_back(pc);
    }
    rep.stages.push_back(std::move(stage));
  }
  for (size_t i = 1; i < rep.stages.size(); ++i)
    for (size_t j = 0; j < rep.stages[i].pairs.size(); ++j) {
      if (rep.stages[i].pairs[j].count != rep.stages[0].pairs[j].count)
        rep.counts_invariant = false;
      if (rep.stages[i].pairs[j].signed_count != rep.stages[0].pairs[j].signed_count)
        rep.signed_counts_invariant = false;
    }
  return rep;
}

// Acyclicity of the flow partial order reconstructed from nonempty moduli.
inline bool partial_order_acyclic(
    const std::vector<CriticalPoint>& points,
    const std::map<std::pair<int, int>, ModuliSpaceZeroDim>& zero_dim) {
  for (const auto& [key, ms] : zero_dim) {
    if (ms.connections.empty()) continue;
    if (points[key.first].value <= points[key.second].value) return false;
  }
  return true;
}

}  // namespace morsekit
