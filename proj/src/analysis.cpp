#include "rmdsim/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rmdsim {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double residual_norm = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  LineFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double rss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    rss += r * r;
  }
  fit.residual_norm = std::sqrt(rss);
  if (n > 2) {
    const double sigma2 = rss / (n - 2);
    fit.slope_stderr = std::sqrt(sigma2 * n / denom);
  }
  return fit;
}

}  // namespace

FitResult fit_exponential_decay(const std::vector<double>& times_ns,
                                const std::vector<double>& values, FitWindow window,
                                double floor) {
  if (times_ns.size() != values.size())
    throw std::invalid_argument("times and values must have equal length");
  std::vector<double> t, lny;
  for (size_t i = 0; i < times_ns.size(); ++i) {
    if (times_ns[i] < window.t_lo || times_ns[i] > window.t_hi) continue;
    if (values[i] <= floor) continue;
    t.push_back(times_ns[i]);
    lny.push_back(std::log(values[i]));
  }
  if (t.size() < 5)
    throw std::runtime_error("exponential fit needs >= 5 points above the floor in the window");

  const LineFit line = fit_line(t, lny);
  FitResult result;
  result.window = window;
  result.method = "log-linear least squares";
  result.residual_norm = line.residual_norm;
  const double window_span = t.back() - t.front();
  if (line.slope >= 0.0 || -line.slope * window_span < 1e-12) {
    result.params["tau_I"] = std::numeric_limits<double>::infinity();
    result.stderrs["tau_I"] = std::numeric_limits<double>::infinity();
    result.note = "trace does not decay over the window; tau reported as +inf";
  } else {
    result.params["tau_I"] = -1.0 / line.slope;
    result.stderrs["tau_I"] = line.slope_stderr / (line.slope * line.slope);
  }
  return result;
}

FitResult fit_saturating_entropy(const std::vector<double>& times_ns,
                                 const std::vector<double>& values, FitWindow window,
                                 double s_m_init) {
  if (times_ns.size() != values.size())
    throw std::invalid_argument("times and values must have equal length");
  std::vector<double> t, s;
  for (size_t i = 0; i < times_ns.size(); ++i) {
    if (times_ns[i] < window.t_lo || times_ns[i] > window.t_hi) continue;
    t.push_back(times_ns[i]);
    s.push_back(values[i]);
  }
  const size_t n = t.size();
  if (n < 6) throw std::runtime_error("entropy fit needs >= 6 points in the window");

  double s_max = *std::max_element(s.begin(), s.end());
  if (s_max <= 1e-12)
    throw std::runtime_error("entropy fit is degenerate: trace is identically ~0, S_M unidentifiable");

  double sm = s_m_init > 0 ? s_m_init : s_max;
  double tau = 0.5 * (window.t_lo + window.t_hi);
  double lambda = 1e-3;
  auto residuals = [&](double a, double b, Eigen::VectorXd& r) {
    double rss = 0.0;
    for (size_t i = 0; i < n; ++i) {
      r[i] = a * (1.0 - std::exp(-t[i] / b)) - s[i];
      rss += r[i] * r[i];
    }
    return rss;
  };

  Eigen::VectorXd r(n), r_try(n);
  double rss = residuals(sm, tau, r);
  std::vector<double> history{rss};
  bool converged = false;
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::MatrixXd jac(n, 2);
    for (size_t i = 0; i < n; ++i) {
      const double ex = std::exp(-t[i] / tau);
      jac(i, 0) = 1.0 - ex;
      jac(i, 1) = -sm * t[i] / (tau * tau) * ex;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    Eigen::MatrixXd damped = jtj;
    damped.diagonal() += lambda * jtj.diagonal();
    const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
    const double sm_try = sm + step[0];
    const double tau_try = tau + step[1];
    if (!(tau_try > 0.0) || !std::isfinite(sm_try)) {
      lambda *= 10.0;
      continue;
    }
    const double rss_try = residuals(sm_try, tau_try, r_try);
    if (rss_try < rss) {
      const double rel = std::abs(rss - rss_try) / std::max(rss, 1e-300);
      sm = sm_try;
      tau = tau_try;
      rss = rss_try;
      r = r_try;
      lambda = std::max(lambda * 0.3, 1e-12);
      history.push_back(rss);
      if (rel < 1e-12 || step.norm() < 1e-12 * std::max(1.0, std::abs(tau))) {
        converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }

  FitResult result;
  result.window = window;
  result.method = "levenberg-marquardt";
  result.residual_norm = std::sqrt(rss);
  result.converged = converged;
  result.params["S_M"] = sm;
  result.params["tau_S"] = tau;
  if (n > 2) {
    Eigen::MatrixXd jac(n, 2);
    for (size_t i = 0; i < n; ++i) {
      const double ex = std::exp(-t[i] / tau);
      jac(i, 0) = 1.0 - ex;
      jac(i, 1) = -sm * t[i] / (tau * tau) * ex;
    }
    const Eigen::MatrixXd cov = (jac.transpose() * jac).inverse() * (rss / (n - 2));
    result.stderrs["S_M"] = std::sqrt(std::max(0.0, cov(0, 0)));
    result.stderrs["tau_S"] = std::sqrt(std::max(0.0, cov(1, 1)));
  }
  if (!converged) {
    result.note = "did not converge; residual history:";
    for (double h : history) result.note += " " + std::to_string(h);
    throw std::runtime_error("entropy fit failed to converge within 200 iterations (" +
                             result.note + ")");
  }
  return result;
}

FitResult fit_power_law(const std::vector<double>& x, const std::vector<double>& tau) {
  if (x.size() != tau.size()) throw std::invalid_argument("x and tau must have equal length");
  if (x.size() < 3) throw std::invalid_argument("power-law fit needs >= 3 points");
  std::vector<double> lx(x.size()), ly(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(tau[i] > 0.0) || !std::isfinite(tau[i]))
      throw std::invalid_argument("power-law fit needs positive finite data");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(tau[i]);
  }
  const LineFit line = fit_line(lx, ly);
  FitResult result;
  result.method = "log-log least squares";
  result.residual_norm = line.residual_norm;
  result.params["alpha"] = line.slope;
  result.stderrs["alpha"] = line.slope_stderr;
  return result;
}

double prethermal_average(const std::vector<double>& times_ns, const std::vector<double>& values,
                          FitWindow window) {
  if (times_ns.size() != values.size())
    throw std::invalid_argument("times and values must have equal length");
  double sum = 0.0;
  int count = 0;
  for (size_t i = 0; i < times_ns.size(); ++i) {
    if (times_ns[i] < window.t_lo || times_ns[i] > window.t_hi) continue;
    sum += values[i];
    ++count;
  }
  if (count < 3) throw std::runtime_error("prethermal average needs >= 3 samples in the window");
  return sum / count;
}

FitResult fit_area_volume(const std::vector<AreaVolumeRecord>& records) {
  if (records.size() < 3) throw std::invalid_argument("area/volume fit needs >= 3 subsystems");
  Eigen::MatrixXd design(records.size(), 2);
  Eigen::VectorXd rhs(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    design(i, 0) = records[i].area;
    design(i, 1) = records[i].volume;
    rhs[i] = records[i].entropy;
  }
  const Eigen::MatrixXd gram = design.transpose() * design;
  if (std::abs(gram.determinant()) < 1e-12 * gram.diagonal().prod())
    throw std::runtime_error(
        "area/volume design matrix is rank deficient; vary subsystem shapes, not just sizes");
  const Eigen::VectorXd coeff = gram.ldlt().solve(design.transpose() * rhs);
  const Eigen::VectorXd resid = rhs - design * coeff;
  const double rss = resid.squaredNorm();

  FitResult result;
  result.method = "linear least squares, no intercept";
  result.residual_norm = std::sqrt(rss);
  result.params["s_A"] = coeff[0];
  result.params["s_V"] = coeff[1];
  const double dof = std::max<double>(1.0, static_cast<double>(records.size()) - 2.0);
  const Eigen::MatrixXd cov = gram.inverse() * (rss / dof);
  const double se_a = std::sqrt(std::max(0.0, cov(0, 0)));
  const double se_v = std::sqrt(std::max(0.0, cov(1, 1)));
  result.stderrs["s_A"] = se_a;
  result.stderrs["s_V"] = se_v;
  const double ratio = coeff[1] / coeff[0];
  result.params["ratio"] = ratio;
  result.stderrs["ratio"] =
      std::abs(ratio) * std::sqrt(std::pow(se_a / coeff[0], 2) + std::pow(se_v / coeff[1], 2) -
                                  2.0 * cov(0, 1) / (coeff[0] * coeff[1]));
  return result;
}

namespace {

double integrand(const FgrParams& p, double x) {
  return std::pow(x, 2 * p.order) * p.a_const * std::exp(-x * p.omega / p.eps);
}

double adaptive_simpson(const FgrParams& p, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = integrand(p, lm), frm = integrand(p, rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(p, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(p, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

}  // namespace

double fgr_rate(const FgrParams& p) {
  if (p.order < 0) throw std::invalid_argument("multipolar order must be non-negative");
  if (!(p.omega > 0.0) || !(p.eps > 0.0) || !(p.a_const > 0.0))
    throw std::invalid_argument("FGR parameters must be positive");
  const double safe_cutoff = 50.0 * p.eps * (2 * p.order + 1) / p.omega;
  double x_max = p.x_max;
  if (x_max <= 0.0)
    x_max = safe_cutoff;
  else if (x_max < safe_cutoff)
    throw std::invalid_argument("integration cutoff too small: the neglected tail is not "
                                "negligible below 50*eps*(2n+1)/Omega");

  // Integrate piecewise; the integrand peaks at x = 2n*eps/Omega.
  const double scale = p.eps / p.omega;
  double total = 0.0;
  double a = 0.0;
  const double estimate = fgr_rate_analytic(p);
  while (a < x_max - 1e-300) {
    const double b = std::min(x_max, a + std::max(scale, x_max / 64.0));
    const double m = 0.5 * (a + b);
    const double fa = integrand(p, a), fm = integrand(p, m), fb = integrand(p, b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    total += adaptive_simpson(p, a, b, fa, fm, fb, whole, 1e-10 * estimate, 40);
    a = b;
  }
  return total;
}

double fgr_rate_analytic(const FgrParams& p) {
  double factorial = 1.0;
  for (int i = 2; i <= 2 * p.order; ++i) factorial *= i;
  return p.a_const * factorial * std::pow(p.eps / p.omega, 2 * p.order + 1);
}

double floquet_mode_rate(double g_m, double a_const, double m, double omega, double eps) {
  if (!(omega > 0.0) || !(eps > 0.0) || !(a_const > 0.0) || m < 0.0)
    throw std::invalid_argument("mode-rate parameters must be positive");
  return g_m * g_m * a_const * std::exp(-m * omega / eps);
}

}  // namespace rmdsim
