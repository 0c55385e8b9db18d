#pragma once

// MOESP subspace identification of discrete-time state-space models
//
//   x[k+1] = A x[k] + B u[k]
//   y[k]   = C x[k] + D u[k]
//
// from normalized input/output records. The procedure stacks input and output
// block Hankel matrices, takes the LQ factorization of [U; Y], and reads the
// extended observability matrix off the SVD of the R22 block. A and C come from
// the observability shift structure; B and D from the orthogonal complement of
// the observability range applied to the R21 R11^-1 block.

#include <telesys/dataio.hpp>
#include <telesys/matrix_json.hpp>
#include <telesys/types.hpp>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace telesys {

struct StateSpaceModel {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix D;
  double dt = 1.0 / 30.0;
  NormalizationParams norm_params;
  // Condition number of the observability shift equation, when identified.
  double shift_condition = 0.0;

  [[nodiscard]] Eigen::Index order() const { return A.rows(); }
  [[nodiscard]] Eigen::Index inputs() const { return B.cols(); }
  [[nodiscard]] Eigen::Index outputs() const { return C.rows(); }

  [[nodiscard]] double spectral_radius() const {
    if (A.rows() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  [[nodiscard]] bool unstable() const { return spectral_radius() >= 1.0; }

  /// Throws DataError on inconsistent shapes or non-finite entries.
  void validate() const {
    const auto n = A.rows();
    if (n < 1 || A.cols() != n) throw DataError("A must be square with order >= 1");
    if (B.rows() != n || C.cols() != n) throw DataError("B/C do not match the state dimension");
    if (D.rows() != C.rows() || D.cols() != B.cols()) throw DataError("D does not match C/B");
    if (!A.allFinite() || !B.allFinite() || !C.allFinite() || !D.allFinite())
      throw NumericalError("model contains non-finite entries");
  }
};

/// Eigenvalues of A, sorted by (real, imag) for comparisons.
inline std::vector<std::complex<double>> poles(const StateSpaceModel& m) {
  Eigen::EigenSolver<Matrix> es(m.A, false);
  std::vector<std::complex<double>> p(es.eigenvalues().data(),
                                      es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(p.begin(), p.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return p;
}

/// Impulse-response blocks C A^k B for k = 0 .. count-1 (D excluded).
inline std::vector<Matrix> markov_parameters(const StateSpaceModel& m, int count) {
  std::vector<Matrix> h;
  h.reserve(static_cast<std::size_t>(count));
  Matrix ak_b = m.B;
  for (int k = 0; k < count; ++k) {
    h.push_back(m.C * ak_b);
    ak_b = m.A * ak_b;
  }
  return h;
}

/// Output response to `inputs` (rows are samples) from initial state x0.
inline Matrix simulate(const StateSpaceModel& m, const Matrix& inputs, const Vector& x0) {
  detail::require_dims(inputs.cols() == m.inputs(),
                       "input has " + std::to_string(inputs.cols()) + " channels, model expects " +
                           std::to_string(m.inputs()));
  detail::require_dims(x0.size() == m.order(), "initial state size");
  Matrix y(inputs.rows(), m.outputs());
  Vector x = x0;
  for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
    const auto u = inputs.row(k).transpose();
    y.row(k) = (m.C * x + m.D * u).transpose();
    x = m.A * x + m.B * u;
  }
  return y;
}

inline Matrix simulate(const StateSpaceModel& m, const Matrix& inputs) {
  return simulate(m, inputs, Vector::Zero(m.order()));
}

/// Least-squares initial state: minimizes ||outputs - simulate(m, inputs, x0)||
/// over x0. Unobservable directions come back as zero.
inline Vector estimate_initial_state(const StateSpaceModel& m, const Matrix& inputs, const Matrix& outputs) {
  detail::require_dims(outputs.rows() == inputs.rows() && outputs.cols() == m.outputs(),
                       "output series does not match model and input length");
  const Eigen::Index n = m.order();
  const Eigen::Index p = m.outputs();
  if (n == 0 || inputs.rows() == 0) return Vector::Zero(n);
  const Matrix residual = outputs - simulate(m, inputs);
  Matrix gamma(inputs.rows() * p, n);
  Vector target(inputs.rows() * p);
  Matrix cak = m.C;
  for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
    gamma.middleRows(k * p, p) = cak;
    target.segment(k * p, p) = residual.row(k).transpose();
    cak = (cak * m.A).eval();
  }
  return gamma.completeOrthogonalDecomposition().solve(target);
}

/// LQ factors of the stacked Hankel system plus the SVD of R22.
struct SubspaceDecomposition {
  Vector singular_values;  // descending
  Matrix left_vectors;     // full left singular basis of R22
  Matrix R11;
  Matrix R21;
  Matrix R22;
  Eigen::Index block_rows = 0;
  Eigen::Index input_channels = 0;
  Eigen::Index output_channels = 0;
  std::vector<std::string> warnings;

  [[nodiscard]] Eigen::Index positive_singular_values() const {
    return (singular_values.array() > 0.0).count();
  }

  /// Extended observability estimate U1(:, 1:n) diag(sqrt(ss(1:n))).
  [[nodiscard]] Matrix observability(Eigen::Index order) const {
    return left_vectors.leftCols(order) *
           singular_values.head(order).cwiseSqrt().asDiagonal();
  }
};

inline SubspaceDecomposition moesp_decompose(const Matrix& inputs, const Matrix& outputs,
                                             Eigen::Index block_rows) {
  if (inputs.rows() != outputs.rows()) throw DataError("inputs and outputs differ in length");
  if (block_rows < 1) throw DataError("block size must be positive");
  const Eigen::Index mi = inputs.cols();
  const Eigen::Index mo = outputs.cols();
  const Eigen::Index samples = inputs.rows();
  const Eigen::Index columns = samples - block_rows + 1;
  const Eigen::Index stacked = block_rows * (mi + mo);
  if (samples < 2 * block_rows * std::max(mi, mo) + 1 || columns < stacked)
    throw DataError("insufficient samples for block size " + std::to_string(block_rows) + ": have " +
                    std::to_string(samples) + ", need at least " +
                    std::to_string(std::max(2 * block_rows * std::max(mi, mo) + 1,
                                            stacked + block_rows - 1)));

  const auto U = build_hankel(inputs, block_rows, columns);
  const auto Y = build_hankel(outputs, block_rows, columns);
  Matrix stacked_t(columns, stacked);
  stacked_t.leftCols(block_rows * mi) = U.data.transpose();
  stacked_t.rightCols(block_rows * mo) = Y.data.transpose();

  // LQ of [U; Y] via QR of its transpose.
  Eigen::HouseholderQR<Matrix> qr(stacked_t);
  const Matrix L = qr.matrixQR().topRows(stacked).triangularView<Eigen::Upper>().toDenseMatrix().transpose();

  const Eigen::Index pu = block_rows * mi;
  const Eigen::Index py = block_rows * mo;
  SubspaceDecomposition dec;
  dec.block_rows = block_rows;
  dec.input_channels = mi;
  dec.output_channels = mo;
  dec.R11 = L.topLeftCorner(pu, pu);
  dec.R21 = L.bottomLeftCorner(py, pu);
  dec.R22 = L.bottomRightCorner(py, py);

  Eigen::JacobiSVD<Matrix> svd(dec.R22, Eigen::ComputeFullU);
  dec.singular_values = svd.singularValues();
  dec.left_vectors = svd.matrixU();

  const Vector diag = dec.R11.diagonal().cwiseAbs();
  const double max_diag = diag.size() ? diag.maxCoeff() : 0.0;
  if (max_diag == 0.0 || diag.minCoeff() <= 1e-10 * max_diag)
    dec.warnings.emplace_back(
        "input block is rank deficient; inputs are not persistently exciting of order " +
        std::to_string(block_rows));
  return dec;
}

namespace order_criterion {
/// Smallest n whose cumulative singular-value share reaches `fraction`.
struct Energy {
  double fraction = 0.85;
};
struct Fixed {
  Eigen::Index order = 1;
};
/// Count of singular values above `ratio * ss[0]`.
struct ThresholdRatio {
  double ratio = 1e-3;
};
/// Largest distance of log10(ss) from the chord joining its end points.
struct Knee {};
}  // namespace order_criterion

using OrderCriterion = std::variant<order_criterion::Energy, order_criterion::Fixed,
                                    order_criterion::ThresholdRatio, order_criterion::Knee>;

/// Cumulative share sum(ss[0..n)) / sum(ss) for n = 1 .. size.
inline std::vector<double> energy_profile(std::span<const double> ss) {
  const double total = std::accumulate(ss.begin(), ss.end(), 0.0);
  std::vector<double> out;
  double acc = 0.0;
  for (double s : ss) {
    acc += s;
    out.push_back(total > 0.0 ? acc / total : 0.0);
  }
  return out;
}

inline Eigen::Index select_order(std::span<const double> ss, const OrderCriterion& criterion = {}) {
  if (ss.empty() || *std::max_element(ss.begin(), ss.end()) <= 0.0)
    throw NumericalError("degenerate data: no positive singular values");
  const auto size = static_cast<Eigen::Index>(ss.size());

  struct Visitor {
    std::span<const double> ss;
    Eigen::Index size;

    Eigen::Index operator()(const order_criterion::Energy& e) const {
      if (!(e.fraction > 0.0 && e.fraction <= 1.0))
        throw ConfigError("energy fraction must lie in (0, 1]");
      const auto profile = energy_profile(ss);
      for (Eigen::Index n = 0; n < size; ++n)
        if (profile[static_cast<std::size_t>(n)] >= e.fraction) return n + 1;
      return size;
    }
    Eigen::Index operator()(const order_criterion::Fixed& f) const {
      if (f.order < 1 || f.order > size)
        throw ConfigError("fixed order " + std::to_string(f.order) + " outside [1, " +
                          std::to_string(size) + "]");
      return f.order;
    }
    Eigen::Index operator()(const order_criterion::ThresholdRatio& t) const {
      const double cut = t.ratio * ss[0];
      Eigen::Index n = 0;
      while (n < size && ss[static_cast<std::size_t>(n)] > cut) ++n;
      return std::max<Eigen::Index>(n, 1);
    }
    Eigen::Index operator()(const order_criterion::Knee&) const {
      std::vector<double> logs;
      const double floor = ss[0] * 1e-16;
      for (double s : ss) logs.push_back(std::log10(std::max(s, floor)));
      if (logs.size() < 3) return 1;
      const double x1 = static_cast<double>(logs.size() - 1);
      const double y0 = logs.front();
      const double y1 = logs.back();
      Eigen::Index best = 0;
      double best_dist = -1.0;
      for (std::size_t i = 0; i < logs.size(); ++i) {
        // Distance below the chord; the knee is where the curve sags most.
        const double chord = y0 + (y1 - y0) * static_cast<double>(i) / x1;
        const double dist = chord - logs[i];
        if (dist > best_dist) {
          best_dist = dist;
          best = static_cast<Eigen::Index>(i);
        }
      }
      return std::max<Eigen::Index>(best, 1);
    }
  };
  return std::visit(Visitor{ss, size}, criterion);
}

inline Eigen::Index select_order(const Vector& ss, const OrderCriterion& criterion = {}) {
  return select_order(std::span<const double>(ss.data(), static_cast<std::size_t>(ss.size())),
                      criterion);
}

/// Shift-equation condition numbers above this are rejected outright.
inline constexpr double kMaxShiftCondition = 1e14;

inline StateSpaceModel realize(const SubspaceDecomposition& dec, Eigen::Index order,
                               double dt = 1.0 / 30.0) {
  const Eigen::Index d = dec.block_rows;
  const Eigen::Index mi = dec.input_channels;
  const Eigen::Index mo = dec.output_channels;
  if (order < 1 || order > dec.positive_singular_values())
    throw NumericalError("order " + std::to_string(order) + " exceeds the " +
                         std::to_string(dec.positive_singular_values()) +
                         " positive singular values");
  if (d * mo <= order)
    throw DataError("block size too small: d*m_out = " + std::to_string(d * mo) +
                    " must exceed order " + std::to_string(order));

  StateSpaceModel model;
  model.dt = dt;
  const Matrix Ok = dec.observability(order);
  model.C = Ok.topRows(mo);

  const Matrix upper = Ok.topRows(mo * (d - 1));
  const Matrix lower = Ok.bottomRows(mo * (d - 1));
  Eigen::JacobiSVD<Matrix> shift_svd(upper, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = shift_svd.singularValues();
  const double smin = sv(sv.size() - 1);
  model.shift_condition = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  if (!(model.shift_condition < kMaxShiftCondition))
    throw NumericalError("ill-conditioned observability shift equation (condition number " +
                         std::to_string(model.shift_condition) + ")");
  model.A = shift_svd.solve(lower);

  const Vector r11_diag = dec.R11.diagonal().cwiseAbs();
  if (r11_diag.size() == 0 || r11_diag.minCoeff() <= 1e-12 * std::max(r11_diag.maxCoeff(), 1e-300))
    throw NumericalError("singular R11: insufficient input excitation");

  // M1 = L1 R21 R11^-1 with L1 spanning the complement of range(Ok).
  const Matrix L1 = dec.left_vectors.rightCols(d * mo - order).transpose();
  const Matrix R21_R11inv =
      dec.R11.transpose().triangularView<Eigen::Upper>().solve(dec.R21.transpose()).transpose();
  const Matrix M1 = L1 * R21_R11inv;

  // L1 * T = M1 with T the block-Toeplitz impulse matrix. Block column i
  // gives L1_i D + sum_{j>i} L1_j C A^{j-i-1} B = M1_i, linear in [D; B].
  const Eigen::Index r = L1.rows();
  Matrix lhs = Matrix::Zero(d * r, mo + order);
  Matrix rhs(d * r, mi);
  for (Eigen::Index i = 0; i < d; ++i) {
    lhs.block(i * r, 0, r, mo) = L1.middleCols(i * mo, mo);
    for (Eigen::Index j = i + 1; j < d; ++j)
      lhs.block(i * r, mo, r, order).noalias() +=
          L1.middleCols(j * mo, mo) * Ok.middleRows((j - i - 1) * mo, mo);
    rhs.middleRows(i * r, r) = M1.middleCols(i * mi, mi);
  }
  const Matrix db = lhs.completeOrthogonalDecomposition().solve(rhs);
  model.D = db.topRows(mo);
  model.B = db.bottomRows(order);
  model.validate();
  return model;
}

struct IdentifyOptions {
  Eigen::Index block_rows = 20;
  OrderCriterion criterion = order_criterion::Energy{};
};

struct Identification {
  SubspaceDecomposition decomposition;
  StateSpaceModel model;
  Eigen::Index order = 0;
  double energy_ratio = 0.0;
};

/// Decompose, select the order and realize on an already-normalized dataset.
inline Identification identify(const TrajectoryDataset& normalized, const NormalizationParams& params,
                               const IdentifyOptions& opts = {}) {
  Identification out;
  out.decomposition = moesp_decompose(normalized.inputs, normalized.outputs, opts.block_rows);
  out.order = select_order(out.decomposition.singular_values, opts.criterion);
  const auto& ss = out.decomposition.singular_values;
  out.energy_ratio = ss.head(out.order).sum() / ss.sum();
  out.model = realize(out.decomposition, out.order, normalized.dt);
  out.model.norm_params = params;
  return out;
}

inline void to_json(nlohmann::json& j, const StateSpaceModel& m) {
  const double rho = m.spectral_radius();
  j = nlohmann::json{{"order", m.order()},
                     {"dt", m.dt},
                     {"A", matrix_to_json(m.A)},
                     {"B", matrix_to_json(m.B)},
                     {"C", matrix_to_json(m.C)},
                     {"D", matrix_to_json(m.D)},
                     {"norm_params", m.norm_params},
                     {"spectral_radius", rho},
                     {"shift_condition", m.shift_condition},
                     {"flags", {{"unstable", rho >= 1.0}}}};
}

inline void from_json(const nlohmann::json& j, StateSpaceModel& m) {
  const auto n = j.at("order").get<Eigen::Index>();
  m.A = matrix_from_json(j.at("A"), n);
  m.C = matrix_from_json(j.at("C"), n);
  m.B = matrix_from_json(j.at("B"));
  m.D = matrix_from_json(j.at("D"), m.B.cols());
  m.dt = j.at("dt").get<double>();
  m.shift_condition = j.value("shift_condition", 0.0);
  m.norm_params = j.contains("norm_params") ? j.at("norm_params").get<NormalizationParams>()
                                            : NormalizationParams{};
  m.validate();
  if (m.order() != n) throw DataError("model order field disagrees with A");
}

/// Two-column scree data: 1-based mode index and singular value.
inline void write_singular_values_csv(std::ostream& out, const Vector& ss) {
  out << "index,value\n";
  for (Eigen::Index i = 0; i < ss.size(); ++i)
    out << (i + 1) << ',' << detail::format_double(ss(i)) << '\n';
}

}  // namespace telesys
