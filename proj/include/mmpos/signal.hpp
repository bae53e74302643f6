#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace mmpos
{

struct SampledSignal
{
  double sample_rate = 1.0;
  std::vector<double> samples;
};

void validate(const SampledSignal &s);

// Linear frequency-modulated chirp sweeping start_freq .. start_freq + bandwidth over duration.
struct ChirpParams
{
  double bandwidth = 100e6;
  double duration = 1e-3;
  double start_freq = 0.0;

  double slope() const { return bandwidth / duration; }
};

struct PhaseMeasurement
{
  double frequency = 0.0;
  // [0, 2*pi)
  double phase = 0.0;
};

// Phase agreement required for a ToA candidate, radians.
constexpr double kPhaseTolerance = 1e-6;

// Integer lag l maximizing sum_n a[n] * b[n + l]. Positive when b lags a.
// Ties go to the smallest |lag|, then to the positive lag.
long xcorr_lag(const SampledSignal &a, const SampledSignal &b);

// xcorr_lag in seconds. Throws DomainError on mismatched sample rates.
double xcorr_tdoa(const SampledSignal &a, const SampledSignal &b);

// Delay difference encoded by a dechirped beat frequency: beat * T_c / B.
double chirp_beat_tdoa(double beat_freq, const ChirpParams &chirp);

// Mixer output for two unit chirps offset by delta_t, low-pass filtered with a moving average
// whose cutoff sits at B/10, sampled at fs over one chirp duration.
SampledSignal simulate_mixed_chirps(const ChirpParams &chirp, double delta_t, double fs);

// Frequency of the largest non-DC magnitude-spectrum bin; 0 for a constant signal.
double dominant_frequency(const SampledSignal &s);

// All ToA values in [0, max_toa) consistent with every measured phase within kPhaseTolerance.
std::vector<double> phase_toa_candidates(std::span<const PhaseMeasurement> measurements, double max_toa);

// CSV with columns index, amplitude. The sample rate is not stored in the file.
SampledSignal load_signal_csv(const std::filesystem::path &path, double sample_rate);
void save_signal_csv(const SampledSignal &s, const std::filesystem::path &path);

} // namespace mmpos
