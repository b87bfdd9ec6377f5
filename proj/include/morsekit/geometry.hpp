#pragma once

#include <algorithm>

#include "morsekit/scenario.hpp"

namespace morsekit {

struct CriticalPoint {
  int id = -1;
  Vec location;
  double value = 0;
  int index = 0;        // Morse index
  Vec eigenvalues;      // of the G-Hessian, ascending
  Mat neg_frame;        // n x index, orthonormal in <.,.>_{G(p)}; also the
                        // descending-manifold orientation frame
  Mat pos_frame;        // n x (n - index)
};

struct SpectralSplit {
  Mat op;           // A(p)^{-1} Hess f(p)
  Vec eigenvalues;  // ascending
  Mat eigvecs;      // G-orthonormal columns, matching eigenvalue order
  Mat P1, P2;       // G-orthogonal projections onto H1 (negative) and H2
  int index = 0;
};

// Eigendecomposition of the G-Hessian A(p)^{-1} Hess f(p) through the
// G-symmetrized form: with A = L L^T, the operator is similar to the
// symmetric L^{-1} H L^{-T}, so a symmetric eigensolver applies and the
// back-transformed eigenvector basis is G-orthonormal.
inline SpectralSplit spectral_split(const Scenario& sc, const Vec& p) {
  int n = sc.space.dim;
  Mat a = sc.metric->A(sc.space.wrap(p));
  Mat h = sc.eval(p, 2).hessian;
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("metric Cholesky failed");
  Mat l = llt.matrixL();
  Mat sym = l.triangularView<Eigen::Lower>().solve(h);
  sym = l.triangularView<Eigen::Lower>().solve(sym.transpose()).eval();
  sym = 0.5 * (sym + sym.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  SpectralSplit out;
  out.eigenvalues = es.eigenvalues();
  out.eigvecs = l.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
  out.op = a.ldlt().solve(h);
  out.index = 0;
  for (int i = 0; i < n; ++i)
    if (out.eigenvalues[i] < 0) ++out.index;
  Mat v1 = out.eigvecs.leftCols(out.index);
  Mat v2 = out.eigvecs.rightCols(n - out.index);
  out.P1 = v1 * v1.transpose() * a;
  out.P2 = v2 * v2.transpose() * a;
  double min_abs = out.eigenvalues.cwiseAbs().minCoeff();
  if (min_abs < sc.tol.nondegenerate_eig) {
    std::ostringstream os;
    os << "near-zero G-Hessian eigenvalue " << min_abs << " at (" << p.transpose() << ")";
    throw NumericalError(os.str());
  }
  return out;
}

namespace detail {

// Sign-normalize: largest-magnitude coordinate positive, lowest index winning
// ties; keeps orientation frames reproducible across runs.
inline Vec sign_normalize(Vec v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best]) + 1e-12) best = i;
  if (v[best] < 0) v = -v;
  return v;
}

inline bool lex_less(const Vec& a, const Vec& b, double snap = 1e-9) {
  for (int i = 0; i < a.size(); ++i) {
    if (a[i] < b[i] - snap) return true;
    if (a[i] > b[i] + snap) return false;
  }
  return false;
}

}  // namespace detail

// The fixed concretization of the paper's free orientation choice: negative
// eigenvectors in ascending eigenvalue order, each sign-normalized.
inline Mat assign_orientation(const SpectralSplit& split) {
  int k = split.index;
  Mat frame(split.eigvecs.rows(), k);
  for (int i = 0; i < k; ++i) frame.col(i) = detail::sign_normalize(split.eigvecs.col(i));
  return frame;
}

inline std::vector<CriticalPoint> find_critical_points(const Scenario& sc, int grid_density) {
  int n = sc.space.dim;
  double seeds = std::pow((double)grid_density, n);
  if (seeds > 1e6) throw ValidationError("grid_density^n exceeds 10^6 seeds");

  std::vector<Vec> hits;
  std::vector<int> idx(n, 0);
  while (true) {
    Vec x(n);
    for (int i = 0; i < n; ++i) {
      double t = (idx[i] + 0.5) / grid_density;
      x[i] = sc.box_min[i] + t * (sc.box_max[i] - sc.box_min[i]);
    }
    // Newton iteration on grad f; divergent seeds are dropped.
    bool ok = false;
    for (int it = 0; it < 60; ++it) {
      auto b = sc.eval(x, 2);
      if (!b.gradient.allFinite()) break;
      if (b.gradient.norm() <= sc.tol.newton_grad) {
        ok = true;
        break;
      }
      Eigen::FullPivLU<Mat> lu(b.hessian);
      if (!lu.isInvertible()) break;
      Vec step = lu.solve(b.gradient);
      if (!step.allFinite() || step.norm() > 1e3) break;
      x -= step;
      if (!sc.space.torus && (x - 0.5 * (sc.box_min + sc.box_max)).norm() >
                                 4.0 * (sc.box_max - sc.box_min).norm())
        break;
    }
    if (ok) {
      Vec w = sc.space.wrap(x);
      bool dup = false;
      for (const auto& h : hits)
        if (sc.space.distance(h, w) <= sc.tol.dedup_distance) {
          dup = true;
          break;
        }
      if (!dup) hits.push_back(w);
    }
    int i = 0;
    for (; i < n; ++i) {
      if (++idx[i] < grid_density) break;
      idx[i] = 0;
    }
    if (i == n) break;
  }

  std::vector<CriticalPoint> points;
  for (const auto& x : hits) {
    CriticalPoint cp;
    cp.location = x;
    cp.value = sc.f->value(x);
    auto split = spectral_split(sc, x);  // throws on degeneracy
    cp.index = split.index;
    cp.eigenvalues = split.eigenvalues;
    cp.neg_frame = assign_orientation(split);
    Mat pos(split.eigvecs.rows(), split.eigvecs.cols() - split.index);
    for (int i = split.index; i < split.eigvecs.cols(); ++i)
      pos.col(i - split.index) = detail::sign_normalize(split.eigvecs.col(i));
    cp.pos_frame = pos;
    points.push_back(std::move(cp));
  }

  std::sort(points.begin(), points.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
    if (std::abs(a.value - b.value) > 1e-9) return a.value > b.value;
    return detail::lex_less(a.location, b.location);
  });
  for (size_t i = 0; i < points.size(); ++i) points[i].id = (int)i;
  return points;
}

// Sum over p of (-1)^{ind p}.
inline long euler_characteristic(const std::vector<CriticalPoint>& points) {
  long chi = 0;
  for (const auto& p : points) chi += (p.index % 2 == 0) ? 1 : -1;
  return chi;
}

inline const CriticalPoint& nearest_critical_point(const Scenario& sc,
                                                   const std::vector<CriticalPoint>& points,
                                                   const Vec& x, double* dist_out = nullptr) {
  if (points.empty()) throw ValidationError("no critical points");
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < points.size(); ++i) {
    double d = sc.space.distance(points[i].location, x);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (dist_out) *dist_out = best_d;
  return points[best];
}

}  // namespace morsekit
