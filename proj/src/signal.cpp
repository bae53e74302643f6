#include "mmpos/signal.hpp"
#include "mmpos/errors.hpp"
#include "mmpos/geometry.hpp"
#include "mmpos/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>

#include <fftw3.h>

namespace mmpos
{

void validate(const SampledSignal &s)
{
  if (!(s.sample_rate > 0.0) || !std::isfinite(s.sample_rate))
    throw DomainError("sample rate must be positive");
  if (s.samples.empty())
    throw DomainError("signal has no samples");
}

long xcorr_lag(const SampledSignal &a, const SampledSignal &b)
{
  validate(a);
  validate(b);
  if (a.sample_rate != b.sample_rate)
    throw DomainError("cross-correlation needs equal sample rates");

  const long na = static_cast<long>(a.samples.size());
  const long nb = static_cast<long>(b.samples.size());
  long best_lag = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (long lag = -(na - 1); lag <= nb - 1; ++lag)
  {
    const long n_lo = std::max(0L, -lag);
    const long n_hi = std::min(na, nb - lag);
    double acc = 0.0;
    for (long n = n_lo; n < n_hi; ++n)
      acc += a.samples[static_cast<std::size_t>(n)] * b.samples[static_cast<std::size_t>(n + lag)];

    const bool better = acc > best || (acc == best && (std::labs(lag) < std::labs(best_lag) ||
                                                        (std::labs(lag) == std::labs(best_lag) && lag > 0)));
    if (better)
    {
      best = acc;
      best_lag = lag;
    }
  }
  return best_lag;
}

double xcorr_tdoa(const SampledSignal &a, const SampledSignal &b)
{
  return static_cast<double>(xcorr_lag(a, b)) / a.sample_rate;
}

double chirp_beat_tdoa(double beat_freq, const ChirpParams &chirp)
{
  if (!(chirp.bandwidth > 0.0) || !(chirp.duration > 0.0))
    throw DomainError("chirp bandwidth and duration must be positive");
  if (!(beat_freq >= 0.0))
    throw DomainError("beat frequency must be non-negative");
  return beat_freq * chirp.duration / chirp.bandwidth;
}

SampledSignal simulate_mixed_chirps(const ChirpParams &chirp, double delta_t, double fs)
{
  if (!(chirp.bandwidth > 0.0) || !(chirp.duration > 0.0))
    throw DomainError("chirp bandwidth and duration must be positive");
  if (!(std::abs(delta_t) < chirp.duration))
    throw DomainError("chirp offset must be shorter than the chirp duration");
  const double beat = chirp.slope() * std::abs(delta_t);
  if (!(fs > 4.0 * beat))
    throw DomainError("sample rate must exceed four times the beat frequency");

  const auto n = static_cast<std::size_t>(std::floor(chirp.duration * fs));
  if (n < 2)
    throw DomainError("sample rate too low for the chirp duration");

  // Quadrature mixing s1 * conj(s2) leaves only the difference phase
  // phi(t) - phi(t - dt) = 2*pi*(f0*dt + k*t*dt - k*dt^2/2), k = B/T_c.
  const double k = chirp.slope();
  std::vector<double> mixed(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    const double t = static_cast<double>(i) / fs;
    const double dphi =
        2.0 * std::numbers::pi * (chirp.start_freq * delta_t + k * t * delta_t - 0.5 * k * delta_t * delta_t);
    mixed[i] = std::cos(dphi);
  }

  const double cutoff = chirp.bandwidth / 10.0;
  const auto window = static_cast<std::size_t>(std::max(1.0, std::round(fs / cutoff)));
  SampledSignal out{fs, std::vector<double>(n)};
  if (window == 1)
  {
    out.samples = std::move(mixed);
    return out;
  }
  // causal moving average, shorter window during start-up
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
  {
    acc += mixed[i];
    if (i >= window)
      acc -= mixed[i - window];
    out.samples[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

double dominant_frequency(const SampledSignal &s)
{
  validate(s);
  const int n = static_cast<int>(s.samples.size());
  if (n < 2)
    return 0.0;

  double mean = 0.0;
  for (double v : s.samples)
    mean += v;
  mean /= n;

  std::vector<double> in(s.samples.size());
  std::transform(s.samples.begin(), s.samples.end(), in.begin(), [mean](double v) { return v - mean; });
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(n / 2 + 1));

  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex *>(spectrum.data()),
                                        FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  std::size_t peak = 0;
  double peak_mag = 0.0;
  for (std::size_t i = 1; i < spectrum.size(); ++i)
  {
    const double mag = std::abs(spectrum[i]);
    if (mag > peak_mag)
    {
      peak_mag = mag;
      peak = i;
    }
  }
  // numerically constant input
  if (peak_mag <= 1e-9 * n)
    return 0.0;
  return static_cast<double>(peak) * s.sample_rate / n;
}

namespace
{

// Largest wrapped phase error over all measurements at time t.
double phase_mismatch(std::span<const PhaseMeasurement> ms, double t)
{
  double worst = 0.0;
  for (const auto &m : ms)
    worst = std::max(worst, std::abs(wrap_pi(2.0 * std::numbers::pi * m.frequency * t - m.phase)));
  return worst;
}

// Gauss-Newton on the wrapped residuals; each residual is linear in t near a solution.
double refine_toa(std::span<const PhaseMeasurement> ms, double t)
{
  double f2 = 0.0;
  for (const auto &m : ms)
    f2 += m.frequency * m.frequency;
  for (int iter = 0; iter < 8; ++iter)
  {
    double num = 0.0;
    for (const auto &m : ms)
      num += m.frequency * wrap_pi(2.0 * std::numbers::pi * m.frequency * t - m.phase);
    const double step = num / (2.0 * std::numbers::pi * f2);
    t -= step;
    if (std::abs(step) <= 1e-18 * std::max(1.0, std::abs(t)))
      break;
  }
  return t;
}

} // namespace

std::vector<double> phase_toa_candidates(std::span<const PhaseMeasurement> measurements, double max_toa)
{
  if (measurements.empty())
    throw DomainError("phase ToA resolution needs at least one measurement");
  if (!(max_toa > 0.0) || !std::isfinite(max_toa))
    throw DomainError("max_toa must be positive");

  double f_max = 0.0;
  for (const auto &m : measurements)
  {
    if (!(m.frequency > 0.0) || !std::isfinite(m.frequency))
      throw DomainError("measurement frequency must be positive");
    if (!(m.phase >= 0.0 && m.phase < 2.0 * std::numbers::pi))
      throw DomainError("measurement phase must lie in [0, 2*pi)");
    f_max = std::max(f_max, m.frequency);
  }

  // dense scan at min_period / 1000
  const double step = 1.0 / f_max / 1000.0;
  const auto n = static_cast<std::size_t>(std::ceil(max_toa / step)) + 1;
  if (n > 200'000'000)
    throw DomainError("max_toa spans too many scan steps for the given frequencies");

  // a true solution is within step/2 of a grid point, where each phase error is at most pi*f*step
  const double coarse = std::numbers::pi * f_max * step + kPhaseTolerance;

  std::vector<double> out;
  double prev2 = std::numeric_limits<double>::infinity();
  double prev = phase_mismatch(measurements, 0.0);
  for (std::size_t i = 1; i <= n; ++i)
  {
    const double cur = phase_mismatch(measurements, static_cast<double>(i) * step);
    // prev sits at index i - 1; local minimum test on the grid
    if (prev <= coarse && prev <= prev2 && prev <= cur)
    {
      double t = refine_toa(measurements, static_cast<double>(i - 1) * step);
      if (t < 0.0 && t > -step)
        t = 0.0;
      if (t >= 0.0 && t < max_toa && phase_mismatch(measurements, t) <= kPhaseTolerance &&
          (out.empty() || t - out.back() > 2.0 * step))
        out.push_back(t);
    }
    prev2 = prev;
    prev = cur;
  }
  return out;
}

SampledSignal load_signal_csv(const std::filesystem::path &path, double sample_rate)
{
  const auto table = read_csv(path);
  const std::size_t amp_col = table.column("amplitude");
  SampledSignal s{sample_rate, {}};
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    s.samples.push_back(parse_double(table.rows[r].at(amp_col), table.line_of(r), "amplitude"));
  validate(s);
  return s;
}

void save_signal_csv(const SampledSignal &s, const std::filesystem::path &path)
{
  validate(s);
  CsvWriter out(path, {"index", "amplitude"});
  for (std::size_t i = 0; i < s.samples.size(); ++i)
    out.row({std::to_string(i), format_double(s.samples[i])});
  out.commit();
}

} // namespace mmpos
