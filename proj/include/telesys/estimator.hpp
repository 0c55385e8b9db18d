#pragma once

// Kalman filter over an impaired measurement stream.
//
// Predict:  x- = A x + B u[k-1],   P- = A P A' + Q
// Update:   rows of C are applied one at a time as scalar measurements with
//           the matching diagonal entry of R (Joseph form), or jointly with
//           the full R in batch mode.

#include <telesys/matrix_json.hpp>
#include <telesys/netsim.hpp>
#include <telesys/sysid.hpp>
#include <telesys/types.hpp>

#include <nlohmann/json.hpp>

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace telesys {

enum class NoiseProvenance { kInitial, kEmpirical, kUser };

inline std::string to_string(NoiseProvenance p) {
  switch (p) {
    case NoiseProvenance::kInitial: return "initial";
    case NoiseProvenance::kEmpirical: return "empirical";
    case NoiseProvenance::kUser: return "user";
  }
  return "user";
}

struct NoiseModel {
  Matrix Q;
  Matrix R;
  NoiseProvenance provenance = NoiseProvenance::kUser;
  double eps_q = 0.0;
  double eps_r = 0.0;
  int iterations = 0;

  static NoiseModel initial(Eigen::Index states, Eigen::Index outputs, double eps_q, double eps_r) {
    if (!(eps_q > 0.0) || !(eps_r > 0.0)) throw ConfigError("eps_Q and eps_R must be positive");
    return {eps_q * Matrix::Identity(states, states), eps_r * Matrix::Identity(outputs, outputs),
            NoiseProvenance::kInitial, eps_q, eps_r, 0};
  }
};

inline void to_json(nlohmann::json& j, const NoiseModel& n) {
  j = nlohmann::json{{"Q", matrix_to_json(n.Q)},       {"R", matrix_to_json(n.R)},
                     {"provenance", to_string(n.provenance)}, {"eps_Q", n.eps_q},
                     {"eps_R", n.eps_r},              {"iterations", n.iterations}};
}

inline void from_json(const nlohmann::json& j, NoiseModel& n) {
  n.Q = matrix_from_json(j.at("Q"));
  n.R = matrix_from_json(j.at("R"));
  const auto p = j.value("provenance", std::string("user"));
  n.provenance = p == "initial"     ? NoiseProvenance::kInitial
                 : p == "empirical" ? NoiseProvenance::kEmpirical
                                    : NoiseProvenance::kUser;
  n.eps_q = j.value("eps_Q", 0.0);
  n.eps_r = j.value("eps_R", 0.0);
  n.iterations = j.value("iterations", 0);
}

struct FilterState {
  Vector x;
  Matrix P;
  Eigen::Index k = 0;
};

enum class UpdateMode {
  kSequential,  // scalar row-by-row updates, diagonal of R only
  kBatch,       // joint vector update with the full R
};

namespace detail {

inline void check_filter_dims(const FilterState& s, const StateSpaceModel& m, const NoiseModel& noise) {
  const auto n = m.order();
  require_dims(s.x.size() == n, "state estimate has size " + std::to_string(s.x.size()) +
                                    ", model order is " + std::to_string(n));
  require_dims(s.P.rows() == n && s.P.cols() == n, "covariance shape");
  require_dims(noise.Q.rows() == n && noise.Q.cols() == n, "Q shape");
  require_dims(noise.R.rows() == m.outputs() && noise.R.cols() == m.outputs(), "R shape");
}

}  // namespace detail

inline FilterState kf_predict(const FilterState& state, const Vector& u, const StateSpaceModel& model,
                              const NoiseModel& noise) {
  detail::check_filter_dims(state, model, noise);
  detail::require_dims(u.size() == model.inputs(), "input vector size");
  FilterState prior;
  prior.x = model.A * state.x + model.B * u;
  const Matrix AP = model.A * state.P;
  prior.P.noalias() = AP * model.A.transpose();
  prior.P += noise.Q;
  prior.P = 0.5 * (prior.P + prior.P.transpose()).eval();
  prior.k = state.k + 1;
  return prior;
}

/// Measurement update. `u` (optional) adds the D u feedthrough to the
/// predicted measurement; pass an empty vector for strictly proper models.
inline FilterState kf_update(const FilterState& prior, const Vector& z, const StateSpaceModel& model,
                             const NoiseModel& noise, const Vector& u = {},
                             UpdateMode mode = UpdateMode::kSequential) {
  detail::check_filter_dims(prior, model, noise);
  detail::require_dims(z.size() == model.outputs(), "measurement vector size");
  if (!z.allFinite()) throw DataError("non-finite measurement");
  Vector zhat_offset = Vector::Zero(model.outputs());
  if (u.size() != 0) {
    detail::require_dims(u.size() == model.inputs(), "input vector size");
    zhat_offset = model.D * u;
  }

  const auto n = model.order();
  FilterState post = prior;
  if (mode == UpdateMode::kSequential) {
    for (Eigen::Index d = 0; d < model.outputs(); ++d) {
      const auto c = model.C.row(d);
      const double r = noise.R(d, d);
      const Vector pc = post.P * c.transpose();
      const double s = c.dot(pc) + r;
      if (!(s > 0.0))
        throw NumericalError("degenerate innovation on output " + std::to_string(d) + " (variance " +
                             std::to_string(s) + ")");
      const Vector K = pc / s;
      post.x += K * (z(d) - c.dot(post.x) - zhat_offset(d));
      // Joseph form (I - K c) P (I - K c)' + r K K' expanded into rank-1 terms.
      post.P.noalias() -= K * pc.transpose();
      post.P.noalias() -= pc * K.transpose();
      post.P.noalias() += s * K * K.transpose();
      post.P = (0.5 * (post.P + post.P.transpose())).eval();
    }
  } else {
    const Matrix PCt = post.P * model.C.transpose();
    const Matrix S = model.C * PCt + noise.R;
    Eigen::LDLT<Matrix> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
      throw NumericalError("degenerate innovation covariance");
    const Matrix K = ldlt.solve(PCt.transpose()).transpose();
    post.x += K * (z - model.C * post.x - zhat_offset);
    const Matrix IKC = Matrix::Identity(n, n) - K * model.C;
    post.P = IKC * post.P * IKC.transpose() + K * noise.R * K.transpose();
  }
  detail::symmetrize_psd(post.P);
  return post;
}

struct EstimationRun {
  Matrix estimates;    // y_hat = C x + D u per sample, a posteriori
  Matrix innovations;  // z - (C x- + D u)
  Matrix states;       // a posteriori x per sample
  std::optional<NetworkScenario> scenario;

  [[nodiscard]] Eigen::Index samples() const { return estimates.rows(); }
};

struct FilterOptions {
  UpdateMode mode = UpdateMode::kSequential;
  std::optional<Vector> x0;  // default zero
  std::optional<Matrix> P0;  // default identity
};

/// Runs the filter over measurements (rows are samples). Sample 1 is an update
/// of the initial prior; samples 2..N predict with u[k-1] then update.
inline EstimationRun run_filter(const StateSpaceModel& model, const NoiseModel& noise, const Matrix& inputs,
                                const Matrix& measurements, const FilterOptions& opts = {}) {
  detail::require_dims(inputs.rows() == measurements.rows(),
                       "inputs have " + std::to_string(inputs.rows()) + " rows, measurements " +
                           std::to_string(measurements.rows()));
  detail::require_dims(inputs.cols() == model.inputs(), "input channel count");
  detail::require_dims(measurements.cols() == model.outputs(), "measurement channel count");
  const auto n = model.order();
  const auto N = inputs.rows();

  FilterState state;
  state.x = opts.x0.value_or(Vector::Zero(n));
  state.P = opts.P0.value_or(Matrix::Identity(n, n));
  state.k = 0;

  EstimationRun run;
  run.estimates.resize(N, model.outputs());
  run.innovations.resize(N, model.outputs());
  run.states.resize(N, n);
  for (Eigen::Index k = 0; k < N; ++k) {
    const Vector u = inputs.row(k).transpose();
    try {
      FilterState prior = k == 0 ? state : kf_predict(state, inputs.row(k - 1).transpose(), model, noise);
      const Vector z = measurements.row(k).transpose();
      run.innovations.row(k) = (z - model.C * prior.x - model.D * u).transpose();
      state = kf_update(prior, z, model, noise, u, opts.mode);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at sample " + std::to_string(k + 1));
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at sample " + std::to_string(k + 1));
    }
    run.states.row(k) = state.x.transpose();
    run.estimates.row(k) = (model.C * state.x + model.D * u).transpose();
  }
  return run;
}

inline EstimationRun run_filter(const StateSpaceModel& model, const NoiseModel& noise, const Matrix& inputs,
                                const ImpairedStream& impaired, const FilterOptions& opts = {}) {
  return run_filter(model, noise, inputs, impaired.observed, opts);
}

/// Which input sample the process residual subtracts.
enum class ResidualInput {
  kPrevious,  // x(k) - A x(k-1) - B u(k-1), consistent with the predict step
  kCurrent,   // x(k) - A x(k-1) - B u(k)
};

struct BootstrapOptions {
  double eps_q = 1e-4;
  double eps_r = 1e-4;
  int iterations = 1;
  ResidualInput residual_input = ResidualInput::kPrevious;
  FilterOptions filter;
};

/// Batch bootstrap of Q and R from filter residuals. Starts from eps*I, runs
/// the filter, and replaces Q and R with the sample covariances of the process
/// residuals and the measurement innovations; repeated `iterations` times.
inline NoiseModel estimate_noise_empirical(const StateSpaceModel& model, const Matrix& inputs,
                                           const Matrix& measurements, const BootstrapOptions& opts = {}) {
  if (opts.iterations < 1) throw ConfigError("bootstrap needs at least one iteration");
  const auto N = measurements.rows();
  if (N < 2) throw DataError("noise bootstrap needs at least 2 samples");

  NoiseModel noise = NoiseModel::initial(model.order(), model.outputs(), opts.eps_q, opts.eps_r);
  for (int it = 0; it < opts.iterations; ++it) {
    const auto run = run_filter(model, noise, inputs, measurements, opts.filter);

    Matrix R = run.innovations.transpose() * run.innovations / static_cast<double>(N);

    const Matrix& x = run.states;
    const Matrix u = opts.residual_input == ResidualInput::kPrevious ? inputs.topRows(N - 1)
                                                                     : inputs.bottomRows(N - 1);
    const Matrix rx = x.bottomRows(N - 1) - x.topRows(N - 1) * model.A.transpose() -
                      u * model.B.transpose();
    Matrix Q = rx.transpose() * rx / static_cast<double>(N - 1);

    detail::symmetrize_psd(Q);
    detail::symmetrize_psd(R);
    noise.Q = std::move(Q);
    noise.R = std::move(R);
    noise.provenance = NoiseProvenance::kEmpirical;
    noise.iterations = it + 1;
  }
  return noise;
}

/// Columns: k, z_obs..., y_est..., innovation...
inline void write_run_csv(std::ostream& out, const EstimationRun& run, const Matrix& observed,
                          const std::vector<std::string>& names = {}) {
  auto name = [&](Eigen::Index c) {
    return c < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(c)]
                                                       : std::to_string(c);
  };
  const auto m = run.estimates.cols();
  out << 'k';
  for (Eigen::Index c = 0; c < m; ++c) out << ",z_obs:" << name(c);
  for (Eigen::Index c = 0; c < m; ++c) out << ",y_est:" << name(c);
  for (Eigen::Index c = 0; c < m; ++c) out << ",innovation:" << name(c);
  out << '\n';
  for (Eigen::Index k = 0; k < run.samples(); ++k) {
    out << (k + 1);
    for (Eigen::Index c = 0; c < m; ++c) out << ',' << detail::format_double(observed(k, c));
    for (Eigen::Index c = 0; c < m; ++c) out << ',' << detail::format_double(run.estimates(k, c));
    for (Eigen::Index c = 0; c < m; ++c) out << ',' << detail::format_double(run.innovations(k, c));
    out << '\n';
  }
}

}  // namespace telesys
