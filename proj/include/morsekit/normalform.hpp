#pragma once

#include "morsekit/bump.hpp"
#include "morsekit/flow.hpp"

namespace morsekit {

// ---------------------------------------------------------------------------
// Model field X_r(x1, x2) = (rho_r(x1) rho_r(x2) A0 x1 + [1 - rho_r rho_r] A1 x1, -B x2)

class ModelField : public VectorField {
 public:
  ModelField(Mat a0, Mat a1, Mat b, double r)
      : k1_((int)a0.rows()), k2_((int)b.rows()), A0_(std::move(a0)), A1_(std::move(a1)),
        B_(std::move(b)), r_(r) {
    auto check_sym = [](const Mat& m, const char* name) {
      if ((m - m.transpose()).norm() > 1e-12)
        throw ValidationError(std::string("model field: ") + name + " not symmetric");
    };
    check_sym(A0_, "A0");
    check_sym(A1_, "A1");
    check_sym(B_, "B");
    if (A1_.rows() != k1_ || r <= 0) throw ValidationError("model field: bad shapes");
    Eigen::SelfAdjointEigenSolver<Mat> e0(A0_), e1(A1_), eb(B_);
    alpha0_ = std::min(e0.eigenvalues().minCoeff(), e1.eigenvalues().minCoeff());
    alpha1_ = std::max(e0.eigenvalues().maxCoeff(), e1.eigenvalues().maxCoeff());
    beta_ = eb.eigenvalues().minCoeff();
    if (alpha0_ <= 0 || beta_ <= 0)
      throw ValidationError("model field: operator bounds require positive definiteness");
  }

  int dim() const { return k1_ + k2_; }
  int k1() const { return k1_; }
  int k2() const { return k2_; }
  double r() const { return r_; }
  double alpha0() const { return alpha0_; }
  double alpha1() const { return alpha1_; }
  double beta() const { return beta_; }
  const Mat& B() const { return B_; }

  Vec value(const Vec& x) const override {
    Vec x1 = x.head(k1_), x2 = x.tail(k2_);
    double w = bump_scaled(r_, x1.norm()) * bump_scaled(r_, x2.norm());
    Vec out(dim());
    out.head(k1_) = A1_ * x1 + w * ((A0_ - A1_) * x1);
    out.tail(k2_) = -B_ * x2;
    return out;
  }

  Mat jacobian(const Vec& x) const override {
    Vec x1 = x.head(k1_), x2 = x.tail(k2_);
    double n1 = x1.norm(), n2 = x2.norm();
    double u = bump_scaled(r_, n1), v = bump_scaled(r_, n2);
    Mat jac = Mat::Zero(dim(), dim());
    jac.topLeftCorner(k1_, k1_) = A1_ + (u * v) * (A0_ - A1_);
    Vec dvec = (A0_ - A1_) * x1;
    if (n1 > 0) {
      double du = bump_scaled_deriv(r_, n1);
      if (du != 0)
        jac.topLeftCorner(k1_, k1_) += dvec * ((v * du / n1) * x1).transpose();
    }
    if (n2 > 0) {
      double dv = bump_scaled_deriv(r_, n2);
      if (dv != 0)
        jac.topRightCorner(k1_, k2_) = dvec * ((u * dv / n2) * x2).transpose();
    }
    jac.bottomRightCorner(k2_, k2_) = -B_;
    return jac;
  }

  // Transition region E(r): the closed box ||x1|| <= r, ||x2|| <= r minus the
  // open half-size box.
  bool in_transition(const Vec& x) const {
    double n1 = x.head(k1_).norm(), n2 = x.tail(k2_).norm();
    if (n1 > r_ || n2 > r_) return false;
    return !(n1 < r_ / 2 && n2 < r_ / 2);
  }

 private:
  int k1_, k2_;
  Mat A0_, A1_, B_;
  double r_;
  double alpha0_, alpha1_, beta_;
};

inline ModelField build_model_field(const Mat& a0, const Mat& a1, const Mat& b, double r) {
  return ModelField(a0, a1, b, r);
}

// lambda = ||v2|| / ||v1||; infinity when v1 vanishes.
inline double inclination(const Vec& v, int k1) {
  double n1 = v.head(k1).norm();
  double n2 = v.tail(v.size() - k1).norm();
  if (n1 == 0) return std::numeric_limits<double>::infinity();
  return n2 / n1;
}

// ---------------------------------------------------------------------------
// Field homotopy Y_{r,s} at a critical point

// Builds the straight-line homotopy from the base field to a field whose
// unstable block is the identity inside the chart half-ball. The chart is the
// spectral frame at p scaled so the function's quadratic part is +-1/2 |z|^2.
class FieldHomotopy {
 public:
  FieldHomotopy(const Scenario& sc, const CriticalPoint& p, double r)
      : sc_(&sc), p_(p), r_(r) {
    int n = sc.space.dim;
    k1_ = p.index;
    Mat frame(n, n);
    frame.leftCols(k1_) = p.neg_frame;
    frame.rightCols(n - k1_) = p.pos_frame;
    Vec scale(n);
    for (int i = 0; i < n; ++i) scale[i] = 1.0 / std::sqrt(std::abs(p.eigenvalues[i]));
    S_ = frame * scale.asDiagonal();
    Sinv_ = S_.inverse();

    Mat chart_jac = Sinv_ * sc.field_jacobian(p.location) * S_;
    A_ = chart_jac.topLeftCorner(k1_, k1_);
    B_ = -chart_jac.bottomRightCorner(n - k1_, n - k1_);
    double off = chart_jac.topRightCorner(k1_, n - k1_).norm() +
                 chart_jac.bottomLeftCorner(n - k1_, k1_).norm();
    if (off > 1e-8 * std::max(1.0, chart_jac.norm()))
      throw NumericalError("homotopy chart: linearization blocks not coordinate-aligned");

    check_invariant_subspaces();
  }

  int k1() const { return k1_; }
  double r() const { return r_; }
  const Mat& chart() const { return S_; }
  const Mat& unstable_block() const { return A_; }
  const Mat& stable_block() const { return B_; }
  const CriticalPoint& point() const { return p_; }

  // Y_{r,s} = X + s * rho_r(z1) rho_r(z2) * S (z1 - X^chart_1(z), 0): equals X
  // at s = 0 and outside the chart box, and has unstable block exactly z1
  // inside the half box at s = 1.
  class Member : public VectorField {
   public:
    Member(const FieldHomotopy* h, double s) : h_(h), s_(s) {}

    Vec value(const Vec& x) const override {
      const auto& H = *h_;
      Vec base = H.sc_->field_at(x);
      if (s_ == 0) return base;
      Vec z = H.Sinv_ * H.sc_->space.diff(H.sc_->space.wrap(x), H.p_.location);
      double w = bump_scaled(H.r_, z.head(H.k1_).norm()) *
                 bump_scaled(H.r_, z.tail(z.size() - H.k1_).norm());
      if (w == 0) return base;
      Vec xc = H.Sinv_ * base;
      Vec delta = z.head(H.k1_) - xc.head(H.k1_);
      return base + (s_ * w) * (H.S_.leftCols(H.k1_) * delta);
    }

    Mat jacobian(const Vec& x) const override {
      const auto& H = *h_;
      Mat base = H.sc_->field_jacobian(x);
      if (s_ == 0) return base;
      int n = (int)x.size(), k1 = H.k1_, k2 = n - k1;
      Vec z = H.Sinv_ * H.sc_->space.diff(H.sc_->space.wrap(x), H.p_.location);
      double n1 = z.head(k1).norm(), n2 = z.tail(k2).norm();
      double u = bump_scaled(H.r_, n1), v = bump_scaled(H.r_, n2);
      double w = u * v;
      if (w == 0) return base;

      Vec xv = H.sc_->field_at(x);
      Vec xc = H.Sinv_ * xv;
      Vec delta = z.head(k1) - xc.head(k1);
      Vec s_delta = H.S_.leftCols(k1) * delta;

      Vec grad_w = Vec::Zero(n);
      if (n1 > 0) {
        double du = bump_scaled_deriv(H.r_, n1);
        if (du != 0) grad_w += (v * du / n1) * (H.Sinv_.topRows(k1).transpose() * z.head(k1));
      }
      if (n2 > 0) {
        double dv = bump_scaled_deriv(H.r_, n2);
        if (dv != 0) grad_w += (u * dv / n2) * (H.Sinv_.bottomRows(k2).transpose() * z.tail(k2));
      }
      Mat ddelta = H.Sinv_.topRows(k1) - (H.Sinv_ * base).topRows(k1);
      return base + s_ * (s_delta * grad_w.transpose() +
                          w * (H.S_.leftCols(k1) * ddelta));
    }

   private:
    const FieldHomotopy* h_;
    double s_;
  };

  std::shared_ptr<VectorField> member(double s) const {
    if (s < 0 || s > 1) throw ValidationError("homotopy parameter s must be in [0,1]");
    return std::make_shared<Member>(this, s);
  }

 private:
  void check_invariant_subspaces() const {
    // The construction requires the local invariant manifolds to be the chart
    // coordinate subspaces: the base field must preserve z2 = 0 and z1 = 0.
    int n = sc_->space.dim, k1 = k1_, k2 = n - k1;
    for (double t : {0.2, 0.5, 0.9}) {
      for (int i = 0; i < k1; ++i) {
        Vec z = Vec::Zero(n);
        z[i] = t * r_;
        Vec xc = Sinv_ * sc_->field_at(p_.location + S_ * z);
        if (xc.tail(k2).norm() > sc_->tol.chart_invariance * std::max(1.0, xc.norm()))
          throw NumericalError("homotopy chart: unstable subspace not invariant");
      }
      for (int i = 0; i < k2; ++i) {
        Vec z = Vec::Zero(n);
        z[k1 + i] = t * r_;
        Vec xc = Sinv_ * sc_->field_at(p_.location + S_ * z);
        if (xc.head(k1).norm() > sc_->tol.chart_invariance * std::max(1.0, xc.norm()))
          throw NumericalError("homotopy chart: stable subspace not invariant");
      }
    }
  }

  const Scenario* sc_;
  CriticalPoint p_;
  double r_;
  int k1_;
  Mat S_, Sinv_;
  Mat A_, B_;
};

inline FieldHomotopy build_homotopy(const Scenario& sc, const CriticalPoint& p, double r) {
  return FieldHomotopy(sc, p, r);
}

// ---------------------------------------------------------------------------
// Quadratic normalization (remainder decomposition and h2)

namespace detail {

// 8-point Gauss-Legendre on [0,1].
inline const std::array<double, 8>& gl_nodes() {
  static const std::array<double, 8> n = {
      (1.0 - 0.9602898564975363) / 2, (1.0 - 0.7966664774136267) / 2,
      (1.0 - 0.5255324099163290) / 2, (1.0 - 0.1834346424956498) / 2,
      (1.0 + 0.1834346424956498) / 2, (1.0 + 0.5255324099163290) / 2,
      (1.0 + 0.7966664774136267) / 2, (1.0 + 0.9602898564975363) / 2};
  return n;
}
inline const std::array<double, 8>& gl_weights() {
  static const std::array<double, 8> w = {
      0.1012285362903763 / 2, 0.2223810344533745 / 2, 0.3137066458778873 / 2,
      0.3626837833783620 / 2, 0.3626837833783620 / 2, 0.3137066458778873 / 2,
      0.2223810344533745 / 2, 0.1012285362903763 / 2};
  return w;
}

}  // namespace detail

class QuadraticNormalization {
 public:
  QuadraticNormalization(const Scenario& sc, const CriticalPoint& p, double ball_radius)
      : sc_(&sc), p_(p), ball_(ball_radius) {
    int n = sc.space.dim;
    k1_ = p.index;
    Mat frame(n, n);
    frame.leftCols(k1_) = p.neg_frame;
    frame.rightCols(n - k1_) = p.pos_frame;
    Vec scale(n);
    for (int i = 0; i < n; ++i) scale[i] = 1.0 / std::sqrt(std::abs(p.eigenvalues[i]));
    S_ = frame * scale.asDiagonal();
    f0_ = p.value;

    check_preconditions();
    // SPD of I -+ R_i over the working ball, probed on a coarse grid.
    for (const Vec& z : chart_grid(9)) {
      Mat r1 = R1(z), r2 = R2(z);
      Eigen::SelfAdjointEigenSolver<Mat> e1(Mat::Identity(k1_, k1_) - r1);
      Eigen::SelfAdjointEigenSolver<Mat> e2(Mat::Identity(n - k1_, n - k1_) + r2);
      if ((k1_ > 0 && e1.eigenvalues().minCoeff() < sc.tol.sqrt_eig_floor) ||
          (n - k1_ > 0 && e2.eigenvalues().minCoeff() < sc.tol.sqrt_eig_floor)) {
        std::ostringstream os;
        os << "quadratic normalization: I -+ R_i loses positive definiteness on the ball; "
           << "retry with ball_radius <= " << ball_ / 2;
        throw NumericalError(os.str());
      }
    }
  }

  int k1() const { return k1_; }
  const Mat& chart() const { return S_; }

  double f_chart(const Vec& z) const { return sc_->f->value(sc_->space.wrap(p_.location + S_ * z)); }

  double quadratic(const Vec& z) const {
    return f0_ - 0.5 * z.head(k1_).squaredNorm() +
           0.5 * z.tail(z.size() - k1_).squaredNorm();
  }

  double R(const Vec& z) const { return f_chart(z) - quadratic(z); }

  // Third derivative of the remainder in chart coordinates; equals the
  // chart-contracted third derivative of f since the quadratic part drops out.
  Tensor3 d3R(const Vec& z) const {
    int n = (int)z.size();
    auto b = sc_->eval(p_.location + S_ * z, 3);
    Tensor3 slices(n, Mat(n, n));
    for (int c = 0; c < n; ++c) slices[c] = S_.transpose() * b.third[c] * S_;
    Tensor3 out(n, Mat::Zero(n, n));
    for (int k = 0; k < n; ++k)
      for (int c = 0; c < n; ++c) out[k] += S_(c, k) * slices[c];
    return out;
  }

  // Operator pair from the triple-integral formulas, evaluated with
  // tensor-product Gauss-Legendre quadrature (8 nodes per axis).
  std::pair<Mat, Mat> remainder_operators(const Vec& z) const {
    int n = (int)z.size(), k1 = k1_, k2 = n - k1;
    Vec z1 = z.head(k1), z2 = z.tail(k2);
    Mat r1 = Mat::Zero(k1, k1), r2 = Mat::Zero(k2, k2);
    const auto& nodes = detail::gl_nodes();
    const auto& wts = detail::gl_weights();
    Vec w(n);
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b)
        for (int c = 0; c < 8; ++c) {
          double tau = nodes[a], s = nodes[b], t = nodes[c];
          double wt = wts[a] * wts[b] * wts[c];
          w.head(k1) = (tau * s) * z1;
          w.tail(k2) = (tau * t) * z2;
          Tensor3 T = d3R(w);
          for (int m = 0; m < k2; ++m)
            r1 += (2.0 * wt * s * z2[m]) * T[k1 + m].topLeftCorner(k1, k1);
          for (int m = 0; m < k1; ++m)
            r2 += (2.0 * wt * t * z1[m]) * T[m].bottomRightCorner(k2, k2);
        }
    r1 = 0.5 * (r1 + r1.transpose()).eval();
    r2 = 0.5 * (r2 + r2.transpose()).eval();
    return {r1, r2};
  }

  Mat R1(const Vec& z) const { return remainder_operators(z).first; }
  Mat R2(const Vec& z) const { return remainder_operators(z).second; }

  // SPD square roots C1 = (I - R1)^{1/2}, C2 = (I + R2)^{1/2}.
  std::pair<Mat, Mat> square_roots(const Vec& z) const {
    auto [r1, r2] = remainder_operators(z);
    return {spd_sqrt(Mat::Identity(k1_, k1_) - r1),
            spd_sqrt(Mat::Identity(r2.rows(), r2.rows()) + r2)};
  }

  Vec h2(const Vec& z) const {
    auto [c1, c2] = square_roots(z);
    Vec out(z.size());
    out.head(k1_) = c1 * z.head(k1_);
    out.tail(z.size() - k1_) = c2 * z.tail(z.size() - k1_);
    return out;
  }

  // f(0) - 1/2 |C1 z1|^2 + 1/2 |C2 z2|^2 - f_chart(z); the defining identity
  // says this vanishes.
  double identity_residual(const Vec& z) const {
    return quadratic(h2(z)) - f_chart(z);
  }

  double max_residual(int per_axis = 21) const {
    double worst = 0;
    for (const Vec& z : chart_grid(per_axis))
      worst = std::max(worst, std::abs(identity_residual(z)));
    return worst;
  }

  std::vector<Vec> chart_grid(int per_axis) const {
    int n = (int)S_.rows();
    std::vector<Vec> out;
    std::vector<int> idx(n, 0);
    while (true) {
      Vec z(n);
      for (int i = 0; i < n; ++i)
        z[i] = -ball_ + 2.0 * ball_ * idx[i] / (per_axis - 1);
      if (z.norm() <= ball_ + 1e-12) out.push_back(z);
      int i = 0;
      for (; i < n; ++i) {
        if (++idx[i] < per_axis) break;
        idx[i] = 0;
      }
      if (i == n) break;
    }
    return out;
  }

 private:
  static Mat spd_sqrt(const Mat& m) {
    if (m.rows() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    if (es.eigenvalues().minCoeff() < 1e-10)
      throw NumericalError("matrix square root: eigenvalue below floor");
    Vec s = es.eigenvalues().cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
  }

  void check_preconditions() const {
    int n = (int)S_.rows(), k2 = n - k1_;
    // R vanishes on both coordinate subspaces and the mixed second derivative
    // vanishes at the origin; these encode that the local invariant manifolds
    // are the chart subspaces.
    for (double t = -1.0; t <= 1.0; t += 0.25) {
      for (int i = 0; i < k1_; ++i) {
        Vec z = Vec::Zero(n);
        z[i] = t * ball_;
        if (std::abs(R(z)) > 1e-10)
          throw NumericalError("quadratic normalization: R(z1, 0) != 0");
      }
      for (int i = 0; i < k2; ++i) {
        Vec z = Vec::Zero(n);
        z[k1_ + i] = t * ball_;
        if (std::abs(R(z)) > 1e-10)
          throw NumericalError("quadratic normalization: R(0, z2) != 0");
      }
    }
    Mat h = S_.transpose() * sc_->eval(p_.location, 2).hessian * S_;
    if (k1_ > 0 && k2 > 0 && h.topRightCorner(k1_, k2).norm() > 1e-8)
      throw NumericalError("quadratic normalization: D^2_{1,2} R(0) != 0");
  }

  const Scenario* sc_;
  CriticalPoint p_;
  double ball_;
  int k1_;
  Mat S_;
  double f0_;
};

// ---------------------------------------------------------------------------
// Inclination experiment (Lemma-scale harness for the model field)

struct InclinationRun {
  double r = 0;
  Vec start;
  Vec v0;
  double lambda0 = 0;
  double lambda_end = 0;
  double time_in_transition = 0;
  double max_contiguous = 0;
  int entries = 0;
  double unstable_envelope_err = 0;  // relative deviation from [e^{a0 t}, e^{a1 t}]
  double stable_exactness_err = 0;   // | phi2_t - e^{-Bt} phi2_0 |
  bool unstable_monotone = true;
  double K1 = std::numeric_limits<double>::infinity();  // min sigma_min(J11) in E(r)
  double K2 = 0;                                        // max sigma_max(J12) in E(r)
  bool entered_transition = false;
  bool bound_ok = true;
};

struct InclinationReport {
  double T = 0;  // ln 2 / alpha0 + ln 2 / beta
  double alpha0 = 0, alpha1 = 0, beta = 0;
  double r = 0;
  double K1 = std::numeric_limits<double>::infinity();
  double K2 = 0;
  std::vector<InclinationRun> runs;
  bool all_ok = true;
};

inline InclinationReport inclination_experiment(
    const ModelField& model, const std::vector<std::pair<Vec, Vec>>& starts,
    double horizon = 50.0, double ode_tol = 1e-10) {
  const int n = model.dim(), k1 = model.k1(), k2 = model.k2();
  InclinationReport rep;
  rep.alpha0 = model.alpha0();
  rep.alpha1 = model.alpha1();
  rep.beta = model.beta();
  rep.r = model.r();
  rep.T = std::log(2.0) / model.alpha0() + std::log(2.0) / model.beta();

  Eigen::SelfAdjointEigenSolver<Mat> eb(model.B());

  for (const auto& [x0, v0] : starts) {
    InclinationRun run;
    run.r = model.r();
    run.start = x0;
    run.v0 = v0;
    run.lambda0 = inclination(v0, k1);

    auto pack = [&](const Vec& x, const Mat& j) {
      Vec y(n + n * n);
      y.head(n) = x;
      for (int c = 0; c < n; ++c) y.segment(n + c * n, n) = j.col(c);
      return y;
    };
    auto get_x = [&](const Vec& y) { return y.head(n).eval(); };
    auto get_j = [&](const Vec& y) {
      Mat j(n, n);
      for (int c = 0; c < n; ++c) j.col(c) = y.segment(n + c * n, n);
      return j;
    };
    auto rhs = [&](const Vec& y) {
      Vec x = get_x(y);
      Mat j = get_j(y);
      Mat dj = model.jacobian(x) * j;
      Vec dy(n + n * n);
      dy.head(n) = model.value(x);
      for (int c = 0; c < n; ++c) dy.segment(n + c * n, n) = dj.col(c);
      return dy;
    };

    double norm1_0 = x0.head(k1).norm();
    Vec x2_0 = x0.tail(k2);
    bool inside = model.in_transition(x0);
    run.entered_transition = inside;
    if (inside) run.entries = 1;
    double entered_at = 0;
    double prev_norm1 = norm1_0;

    auto audit = [&](double t, const Vec& y) {
      Vec x = get_x(y);
      Mat j = get_j(y);
      double n1 = x.head(k1).norm();
      if (n1 < prev_norm1 - 1e-9 * std::max(1.0, prev_norm1)) run.unstable_monotone = false;
      prev_norm1 = n1;
      if (norm1_0 > 0) {
        double lo = std::exp(model.alpha0() * t) * norm1_0;
        double hi = std::exp(model.alpha1() * t) * norm1_0;
        double err = 0;
        if (n1 < lo) err = (lo - n1) / lo;
        if (n1 > hi) err = std::max(err, (n1 - hi) / hi);
        run.unstable_envelope_err = std::max(run.unstable_envelope_err, err);
      }
      // phi2_t = e^{-Bt} phi2_0 exactly.
      Vec expm = (-t * eb.eigenvalues().array()).exp();
      Vec x2_exact = eb.eigenvectors() * (expm.asDiagonal() * (eb.eigenvectors().transpose() * x2_0));
      run.stable_exactness_err =
          std::max(run.stable_exactness_err, (x.tail(k2) - x2_exact).norm());
      if (model.in_transition(x)) {
        Eigen::JacobiSVD<Mat> s11(j.topLeftCorner(k1, k1));
        run.K1 = std::min(run.K1, s11.singularValues().minCoeff());
        Eigen::JacobiSVD<Mat> s12(j.topRightCorner(k1, k2));
        run.K2 = std::max(run.K2, s12.singularValues().maxCoeff());
      }
    };
    audit(0.0, pack(x0, Mat::Identity(n, n)));

    ode::Options opt;
    opt.abs_tol = ode_tol;
    opt.rel_tol = ode_tol;
    Vec y_final;
    auto cb = [&](const ode::DenseStep& ds) -> std::optional<double> {
      // Substep sweep: membership transitions refined to ~1e-12, audits at
      // substep points.
      const int m = 16;
      double prev_t = ds.t0;
      bool prev_in = inside;
      for (int i = 1; i <= m; ++i) {
        double t = ds.t0 + ds.h * i / m;
        Vec y = ds.eval(t);
        bool now = model.in_transition(get_x(y));
        if (now != prev_in) {
          double lo = prev_t, hi = t;
          for (int it = 0; it < 50; ++it) {
            double mid = 0.5 * (lo + hi);
            if (model.in_transition(get_x(ds.eval(mid))) == prev_in)
              lo = mid;
            else
              hi = mid;
          }
          double tc = 0.5 * (lo + hi);
          if (!prev_in) {
            ++run.entries;
            entered_at = tc;
          } else {
            run.time_in_transition += tc - entered_at;
            run.max_contiguous = std::max(run.max_contiguous, tc - entered_at);
          }
          prev_in = now;
        }
        audit(t, y);
        prev_t = t;
      }
      inside = prev_in;
      Vec xe = get_x(ds.eval(ds.t_end()));
      if (xe.head(k1).norm() >= 2.0 * model.r()) return ds.t_end();
      return std::nullopt;
    };

    auto res = ode::drive(rhs, pack(x0, Mat::Identity(n, n)), 0.0, horizon, opt, cb);
    if (inside) {
      run.time_in_transition += res.t - entered_at;
      run.max_contiguous = std::max(run.max_contiguous, res.t - entered_at);
    }
    Mat j_end = get_j(res.y);
    run.lambda_end = inclination(j_end * v0, k1);
    if (run.entries > 0) run.entered_transition = true;

    rep.K1 = std::min(rep.K1, run.K1);
    rep.K2 = std::max(rep.K2, run.K2);
    rep.runs.push_back(std::move(run));
  }

  // Per-run bound checks against the report-level constants.
  for (auto& run : rep.runs) {
    if (!run.entered_transition) {
      run.bound_ok = run.lambda_end <= run.lambda0 + 1e-6;
    } else if (rep.K1 - rep.K2 * run.lambda0 > 0 && std::isfinite(rep.K1)) {
      run.bound_ok = run.lambda_end <= run.lambda0 / (rep.K1 - rep.K2 * run.lambda0) + 1e-6;
    }
    if (!run.bound_ok || run.entries > 2 || run.time_in_transition > rep.T + 1e-6)
      rep.all_ok = false;
  }
  return rep;
}

}  // namespace morsekit
