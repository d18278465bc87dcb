#pragma once

#include <map>
#include <string>
#include <vector>

namespace rmdsim {

struct FitWindow {
  double t_lo = 0.0;
  double t_hi = 0.0;
};

struct FitResult {
  std::map<std::string, double> params;
  std::map<std::string, double> stderrs;
  FitWindow window;
  std::string method;
  double residual_norm = 0.0;
  bool converged = true;
  std::string note;
};

/// Line fit of ln(I) on t over the window, restricted to points with
/// I > floor. tau_I = -1/slope; a non-decaying trace yields tau_I = +inf
/// with a diagnostic note.
FitResult fit_exponential_decay(const std::vector<double>& times_ns,
                                const std::vector<double>& values, FitWindow window,
                                double floor = 0.02);

/// Nonlinear least squares of S ~ S_M (1 - exp(-t/tau_S)) via
/// Levenberg-Marquardt; S_M starts from s_m_init (the Page value of the
/// subsystem is the natural choice), tau_S from the window midpoint.
FitResult fit_saturating_entropy(const std::vector<double>& times_ns,
                                 const std::vector<double>& values, FitWindow window,
                                 double s_m_init);

/// Log-log regression of tau against x (typically x = 1/T); alpha is the
/// slope.
FitResult fit_power_law(const std::vector<double>& x, const std::vector<double>& tau);

/// Arithmetic mean of a series over [t_lo, t_hi]; needs >= 3 samples inside.
double prethermal_average(const std::vector<double>& times_ns, const std::vector<double>& values,
                          FitWindow window);

struct AreaVolumeRecord {
  double area = 0.0;
  double volume = 0.0;
  double entropy = 0.0;
};

/// Linear least squares S = s_A * A + s_V * V with no intercept; also
/// reports the ratio s_V/s_A with first-order error propagation.
FitResult fit_area_volume(const std::vector<AreaVolumeRecord>& records);

struct FgrParams {
  int order = 0;        // multipolar order n
  double omega = 1.0;   // drive angular frequency, rad/ns
  double eps = 1.0;     // spectral decay constant
  double a_const = 1.0; // overall prefactor
  double x_max = -1.0;  // integration cutoff; <= 0 picks a safe default
};

/// Heating rate Gamma = integral_0^xmax x^{2n} A exp(-x Omega/eps) dx by
/// adaptive quadrature.
double fgr_rate(const FgrParams& p);

/// Closed form A (2n)! (eps/Omega)^(2n+1) of the same integral.
double fgr_rate_analytic(const FgrParams& p);

/// Single Fourier-mode rate g_m^2 A exp(-m Omega / eps).
double floquet_mode_rate(double g_m, double a_const, double m, double omega, double eps);

}  // namespace rmdsim
