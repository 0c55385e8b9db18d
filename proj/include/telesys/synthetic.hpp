#pragma once

// Ground-truth generators: random stable LTI systems and a teleoperation
// surrogate dataset (master trajectories driving a slave arm with disturbance).
// Simulation here is written independently of sysid::simulate so the two can
// check each other.

#include <telesys/dataio.hpp>
#include <telesys/rng.hpp>
#include <telesys/sysid.hpp>
#include <telesys/types.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace telesys::synthetic {

struct TrueSystem {
  Matrix A, B, C, D;
  std::vector<std::complex<double>> poles;

  [[nodiscard]] StateSpaceModel as_model(double dt = 1.0) const {
    StateSpaceModel m;
    m.A = A;
    m.B = B;
    m.C = C;
    m.D = D;
    m.dt = dt;
    return m;
  }
};

inline Matrix normal_matrix(rng::Generator& g, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = g.normal();
  return m;
}

struct RandomSystemOptions {
  double min_radius = 0.3;
  double max_radius = 0.9;
  // Poles are placed on distinct radii at least this far apart.
  double min_separation = 0.08;
  bool feedthrough = true;
};

/// Random stable, minimal (generically) system with well separated poles.
/// Complex pairs are used for roughly half of the poles when n >= 2.
inline TrueSystem random_stable_system(std::uint64_t seed, Eigen::Index n, Eigen::Index m_in,
                                       Eigen::Index m_out, const RandomSystemOptions& opts = {}) {
  rng::Generator g(seed);
  // Distinct radii on a jittered grid.
  std::vector<double> radii;
  const double span = opts.max_radius - opts.min_radius;
  const double step = n > 1 ? span / static_cast<double>(n - 1) : 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double jitter = n > 1 ? (g.uniform() - 0.5) * std::max(0.0, step - opts.min_separation) : 0.0;
    radii.push_back(std::clamp(opts.min_radius + step * static_cast<double>(i) + jitter,
                               opts.min_radius, opts.max_radius));
  }
  for (std::size_t i = radii.size(); i-- > 1;) {
    const auto j = static_cast<std::size_t>(g.bits() % (i + 1));
    std::swap(radii[i], radii[j]);
  }

  TrueSystem sys;
  Matrix blockA = Matrix::Zero(n, n);
  Eigen::Index i = 0;
  std::size_t r = 0;
  while (i < n) {
    const bool pair = (n - i) >= 2 && g.uniform() < 0.5;
    if (pair) {
      const double rho = radii[r++];
      ++r;
      const double theta = 0.2 + 0.9 * g.uniform();
      const double re = rho * std::cos(theta);
      const double im = rho * std::sin(theta);
      blockA(i, i) = re;
      blockA(i, i + 1) = im;
      blockA(i + 1, i) = -im;
      blockA(i + 1, i + 1) = re;
      sys.poles.emplace_back(re, im);
      sys.poles.emplace_back(re, -im);
      i += 2;
    } else {
      const double sign = g.uniform() < 0.25 ? -1.0 : 1.0;
      const double p = sign * radii[r++];
      blockA(i, i) = p;
      sys.poles.emplace_back(p, 0.0);
      i += 1;
    }
  }
  // Well-conditioned similarity: identity plus a modest random perturbation.
  const Matrix T = Matrix::Identity(n, n) + 0.3 * normal_matrix(g, n, n) / std::sqrt(static_cast<double>(n));
  sys.A = T * blockA * T.inverse();
  sys.B = normal_matrix(g, n, m_in);
  sys.C = normal_matrix(g, m_out, n);
  sys.D = opts.feedthrough ? Matrix(0.5 * normal_matrix(g, m_out, m_in)) : Matrix::Zero(m_out, m_in);
  std::sort(sys.poles.begin(), sys.poles.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return sys;
}

struct Trajectory {
  Matrix inputs;
  Matrix states;   // true x[k]
  Matrix outputs;  // noise-free y[k]
  Matrix measured; // y[k] + v[k]
};

/// x[k+1] = A x[k] + B u[k] + w[k],  y[k] = C x[k] + D u[k],  z[k] = y[k] + v[k]
/// with w ~ N(0, q I), v ~ N(0, r I). Starts from x0 = 0.
inline Trajectory simulate_truth(const TrueSystem& sys, const Matrix& inputs, double process_var,
                                 double measurement_var, std::uint64_t seed) {
  rng::Generator gw(rng::derive(seed, 11));
  rng::Generator gv(rng::derive(seed, 12));
  const auto n = sys.A.rows();
  const auto N = inputs.rows();
  Trajectory t;
  t.inputs = inputs;
  t.states.resize(N, n);
  t.outputs.resize(N, sys.C.rows());
  t.measured.resize(N, sys.C.rows());
  Vector x = Vector::Zero(n);
  const double sw = std::sqrt(process_var);
  const double sv = std::sqrt(measurement_var);
  for (Eigen::Index k = 0; k < N; ++k) {
    t.states.row(k) = x.transpose();
    Vector y(sys.C.rows());
    for (Eigen::Index o = 0; o < sys.C.rows(); ++o) {
      double acc = 0.0;
      for (Eigen::Index s = 0; s < n; ++s) acc += sys.C(o, s) * x(s);
      for (Eigen::Index c = 0; c < inputs.cols(); ++c) acc += sys.D(o, c) * inputs(k, c);
      y(o) = acc;
    }
    t.outputs.row(k) = y.transpose();
    for (Eigen::Index o = 0; o < y.size(); ++o) t.measured(k, o) = y(o) + sv * gv.normal();
    Vector next(n);
    for (Eigen::Index s = 0; s < n; ++s) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) acc += sys.A(s, j) * x(j);
      for (Eigen::Index c = 0; c < inputs.cols(); ++c) acc += sys.B(s, c) * inputs(k, c);
      next(s) = acc + sw * gw.normal();
    }
    x = next;
  }
  return t;
}

inline Matrix white_noise(std::uint64_t seed, Eigen::Index samples, Eigen::Index channels) {
  rng::Generator g(seed);
  return normal_matrix(g, samples, channels);
}

struct SurrogateOptions {
  Eigen::Index samples = 1240;
  double dt = 1.0 / 30.0;
  // Std of the slave-side disturbance entering the arm dynamics each sample.
  double disturbance = 0.0005;
  // Std of the slave position sensor noise.
  double sensor_noise = 0.0005;
  std::uint64_t seed = 7;
};

/// Master hand trajectories (three Cartesian axes built from slow sinusoids
/// plus low-passed noise) driving a slave arm modelled per axis as a damped
/// second-order follower with light cross-axis coupling. Channels are named
/// x, y, z on both sides.
inline TrajectoryDataset teleoperation_surrogate(const SurrogateOptions& opts = {}) {
  rng::Generator g(opts.seed);
  const auto N = opts.samples;
  const double T = static_cast<double>(N) * opts.dt;
  Matrix master(N, 3);
  for (int axis = 0; axis < 3; ++axis) {
    // Components with 2..6 cycles over the record, independent of dt.
    double phase[3];
    double cycles[3];
    double amp[3];
    for (int c = 0; c < 3; ++c) {
      phase[c] = 2.0 * std::numbers::pi * g.uniform();
      cycles[c] = 2.0 + 4.0 * g.uniform();
      amp[c] = 0.5 + g.uniform();
    }
    double lp = 0.0;
    const double alpha = std::exp(-opts.dt / (0.02 * T));
    for (Eigen::Index k = 0; k < N; ++k) {
      const double t = static_cast<double>(k) * opts.dt;
      double v = 0.0;
      for (int c = 0; c < 3; ++c) v += amp[c] * std::sin(2.0 * std::numbers::pi * cycles[c] * t / T + phase[c]);
      lp = alpha * lp + std::sqrt(1.0 - alpha * alpha) * g.normal();
      master(k, axis) = 0.05 * (v + 0.5 * lp) + 0.1 * axis;
    }
  }

  // Per axis: position p and velocity v follow the master through a discrete
  // damped spring, natural period a few percent of the record.
  const double wn = 2.0 * std::numbers::pi / (0.03 * T);
  const double zeta = 0.8;
  const double h = opts.dt;
  Matrix slave(N, 3);
  Vector p = master.row(0).transpose();
  Vector v = Vector::Zero(3);
  Matrix coupling = Matrix::Identity(3, 3);
  coupling(0, 1) = 0.05;
  coupling(1, 2) = -0.04;
  coupling(2, 0) = 0.03;
  rng::Generator gd(rng::derive(opts.seed, 21));
  rng::Generator gs(rng::derive(opts.seed, 22));
  for (Eigen::Index k = 0; k < N; ++k) {
    for (int a = 0; a < 3; ++a) slave(k, a) = p(a) + opts.sensor_noise * gs.normal();
    const Vector target = coupling * master.row(k).transpose();
    // Semi-implicit Euler keeps the discretization stable for any dt here.
    const double sub = std::max(1.0, std::ceil(h * wn / 0.2));
    const double hs = h / sub;
    for (int s = 0; s < static_cast<int>(sub); ++s) {
      const Vector acc = wn * wn * (target - p) - 2.0 * zeta * wn * v;
      v += hs * acc;
      p += hs * v;
    }
    // Disturbance is a random walk scaled to a 30 Hz reference step.
    for (int a = 0; a < 3; ++a) p(a) += opts.disturbance * std::sqrt(h * 30.0) * gd.normal();
  }

  TrajectoryDataset ds;
  ds.inputs = master;
  ds.outputs = slave;
  ds.dt = opts.dt;
  ds.input_names = {"x", "y", "z"};
  ds.output_names = {"x", "y", "z"};
  return ds;
}

}  // namespace telesys::synthetic
