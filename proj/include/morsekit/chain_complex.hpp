#pragma once

#include "morsekit/moduli.hpp"

namespace morsekit {

using IntMat = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

inline long long checked_mul(long long a, long long b) {
  long long out;
  if (__builtin_mul_overflow(a, b, &out))
    throw NumericalError("integer overflow in chain-complex arithmetic");
  return out;
}

inline long long checked_add(long long a, long long b) {
  long long out;
  if (__builtin_add_overflow(a, b, &out))
    throw NumericalError("integer overflow in chain-complex arithmetic");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Smith normal form over the integers. Entries stay in 64 bits with overflow
// detection; there is no big-integer fallback (the complexes here have at
// most tens of generators).

struct SmithNormalForm {
  std::vector<long long> diagonal;  // d_1 | d_2 | ... , nonnegative
  int rank = 0;
  IntMat U, V;  // unimodular witnesses with U * M * V = D
};

inline SmithNormalForm smith_normal_form(IntMat m) {
  const int rows = (int)m.rows(), cols = (int)m.cols();
  SmithNormalForm out;
  out.U = IntMat::Identity(rows, rows);
  out.V = IntMat::Identity(cols, cols);
  IntMat original = m;

  auto row_axpy = [&](int dst, int src, long long f) {  // row dst -= f * row src
    for (int j = 0; j < cols; ++j)
      m(dst, j) = detail::checked_add(m(dst, j), -detail::checked_mul(f, m(src, j)));
    for (int j = 0; j < rows; ++j)
      out.U(dst, j) = detail::checked_add(out.U(dst, j), -detail::checked_mul(f, out.U(src, j)));
  };
  auto col_axpy = [&](int dst, int src, long long f) {
    for (int i = 0; i < rows; ++i)
      m(i, dst) = detail::checked_add(m(i, dst), -detail::checked_mul(f, m(i, src)));
    for (int i = 0; i < cols; ++i)
      out.V(i, dst) = detail::checked_add(out.V(i, dst), -detail::checked_mul(f, out.V(i, src)));
  };

  int t = 0;
  const int tmax = std::min(rows, cols);
  while (t < tmax) {
    // Smallest nonzero entry in the trailing block becomes the pivot.
    int pi = -1, pj = -1;
    long long best = 0;
    for (int i = t; i < rows; ++i)
      for (int j = t; j < cols; ++j) {
        long long v = std::llabs(m(i, j));
        if (v != 0 && (pi < 0 || v < best)) {
          best = v;
          pi = i;
          pj = j;
        }
      }
    if (pi < 0) break;
    if (pi != t) {
      m.row(t).swap(m.row(pi));
      out.U.row(t).swap(out.U.row(pi));
    }
    if (pj != t) {
      m.col(t).swap(m.col(pj));
      out.V.col(t).swap(out.V.col(pj));
    }

    bool clean = true;
    for (int i = t + 1; i < rows; ++i)
      if (m(i, t) != 0) {
        long long f = m(i, t) / m(t, t);
        row_axpy(i, t, f);
        if (m(i, t) != 0) clean = false;
      }
    for (int j = t + 1; j < cols; ++j)
      if (m(t, j) != 0) {
        long long f = m(t, j) / m(t, t);
        col_axpy(j, t, f);
        if (m(t, j) != 0) clean = false;
      }
    if (!clean) continue;  // Euclidean remainders left: pick a smaller pivot

    // Divisibility: the pivot must divide the rest of the block.
    bool divides = true;
    for (int i = t + 1; i < rows && divides; ++i)
      for (int j = t + 1; j < cols; ++j)
        if (m(i, j) % m(t, t) != 0) {
          row_axpy(t, i, -1);  // fold row i into the pivot row and restart
          divides = false;
          break;
        }
    if (!divides) continue;
    ++t;
  }

  for (int i = 0; i < t; ++i) {
    if (m(i, i) < 0) {
      m.row(i) = -m.row(i);
      out.U.row(i) = -out.U.row(i);
    }
    out.diagonal.push_back(m(i, i));
  }
  out.rank = t;

  // Verify the transform witnesses exactly.
  IntMat check = IntMat::Zero(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      long long acc = 0;
      for (int a = 0; a < rows; ++a)
        for (int b = 0; b < cols; ++b)
          acc = detail::checked_add(
              acc, detail::checked_mul(out.U(i, a),
                                       detail::checked_mul(original(a, b), out.V(b, j))));
      check(i, j) = acc;
    }
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      long long expect = (i == j && i < t) ? m(i, i) : 0;
      if (check(i, j) != expect) throw NumericalError("smith normal form verification failed");
    }
  return out;
}

// ---------------------------------------------------------------------------
// The Morse chain complex

struct MorseChainComplex {
  std::vector<std::vector<int>> generators;  // per degree: critical ids, ind = degree
  std::vector<IntMat> boundaries;  // boundaries[k]: C_k -> C_{k-1}; boundaries[0] empty
  std::optional<double> level_cap;
  bool mod2 = false;
};

struct HomologyResult {
  std::vector<int> betti;
  std::vector<std::vector<long long>> torsion;  // per degree, entries > 1
};

inline MorseChainComplex build_complex(
    const std::vector<CriticalPoint>& points,
    const std::map<std::pair<int, int>, ModuliSpaceZeroDim>& zero_dim,
    std::optional<double> level_cap = std::nullopt, bool mod2 = false) {
  MorseChainComplex cx;
  cx.level_cap = level_cap;
  cx.mod2 = mod2;
  int top = 0;
  for (const auto& p : points) top = std::max(top, p.index);
  cx.generators.assign(top + 1, {});
  std::vector<int> pos(points.size(), -1);
  for (const auto& p : points) {
    if (level_cap && p.value > *level_cap) continue;
    pos[p.id] = (int)cx.generators[p.index].size();
    cx.generators[p.index].push_back(p.id);
  }

  cx.boundaries.assign(top + 1, IntMat());
  for (int k = 1; k <= top; ++k) {
    IntMat d = IntMat::Zero((int)cx.generators[k - 1].size(), (int)cx.generators[k].size());
    for (int col = 0; col < (int)cx.generators[k].size(); ++col) {
      int pid = cx.generators[k][col];
      for (int row = 0; row < (int)cx.generators[k - 1].size(); ++row) {
        int qid = cx.generators[k - 1][row];
        auto it = zero_dim.find({pid, qid});
        if (it == zero_dim.end()) continue;
        long long c = mod2 ? (long long)(it->second.connections.size() % 2)
                           : it->second.signed_count;
        d(row, col) = c;
      }
    }
    cx.boundaries[k] = std::move(d);
  }

  // d^2 = 0 in exact integer arithmetic; failures name the compositions.
  for (int k = 2; k <= top; ++k) {
    const IntMat& a = cx.boundaries[k - 1];
    const IntMat& b = cx.boundaries[k];
    if (a.size() == 0 || b.size() == 0) continue;
    for (int i = 0; i < a.rows(); ++i)
      for (int j = 0; j < b.cols(); ++j) {
        long long acc = 0;
        for (int l = 0; l < a.cols(); ++l)
          acc = detail::checked_add(acc, detail::checked_mul(a(i, l), b(l, j)));
        if (mod2) acc %= 2;
        if (acc != 0) {
          std::ostringstream os;
          os << "boundary operator fails d^2 = 0: composition from generator "
             << cx.generators[k][j] << " (degree " << k << ") to generator "
             << cx.generators[k - 2][i] << " sums to " << acc;
          throw NumericalError(os.str());
        }
      }
  }
  return cx;
}

inline HomologyResult homology(const MorseChainComplex& cx) {
  int top = (int)cx.generators.size() - 1;
  HomologyResult out;
  out.betti.assign(top + 1, 0);
  out.torsion.assign(top + 1, {});
  std::vector<SmithNormalForm> snf(top + 2);
  for (int k = 1; k <= top; ++k)
    if (cx.boundaries[k].size() > 0) snf[k] = smith_normal_form(cx.boundaries[k]);

  for (int k = 0; k <= top; ++k) {
    int nk = (int)cx.generators[k].size();
    int rk = (k >= 1) ? snf[k].rank : 0;          // rank of d_k: C_k -> C_{k-1}
    int rk1 = (k + 1 <= top) ? snf[k + 1].rank : 0;  // rank of d_{k+1}
    out.betti[k] = nk - rk - rk1;
    if (k + 1 <= top && !cx.mod2)
      for (long long d : snf[k + 1].diagonal)
        if (d > 1) out.torsion[k].push_back(d);
  }
  return out;
}

inline long euler_characteristic(const HomologyResult& h) {
  long chi = 0;
  for (size_t k = 0; k < h.betti.size(); ++k) chi += (k % 2 == 0) ? h.betti[k] : -h.betti[k];
  return chi;
}

// Sublevel complexes K^a for a list of regular caps, each with its homology.
inline std::vector<std::pair<double, HomologyResult>> filtered_complexes(
    const std::vector<CriticalPoint>& points,
    const std::map<std::pair<int, int>, ModuliSpaceZeroDim>& zero_dim,
    const std::vector<double>& levels, double regular_gap = 1e-8) {
  std::vector<std::pair<double, HomologyResult>> out;
  for (double a : levels) {
    for (const auto& p : points)
      if (std::abs(p.value - a) < regular_gap) {
        std::ostringstream os;
        os << "filtration level " << a << " is within " << regular_gap
           << " of the critical value " << p.value;
        throw ValidationError(os.str());
      }
    auto cx = build_complex(points, zero_dim, a);
    out.push_back({a, homology(cx)});
  }
  return out;
}

}  // namespace morsekit
