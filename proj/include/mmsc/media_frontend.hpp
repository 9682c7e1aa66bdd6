#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "mmsc/types.hpp"

namespace mmsc {

// ---------------------------------------------------------------------------
// Keyframes
// ---------------------------------------------------------------------------

/// Color histogram of one video frame.
struct FrameHistogram {
  std::vector<double> counts;
  int frame_index = 0;
  double timestamp_s = 0.0;
};

/// Number of bins with a positive count.
inline int count_distinct_colors(const FrameHistogram& h) {
  return static_cast<int>(std::count_if(h.counts.begin(), h.counts.end(), [](double c) { return c > 0.0; }));
}

/// Two-pass shot-change keyframe detector.
///
/// Pass one takes the L1 distance between successive normalized histograms and
/// sets the threshold mean + alpha * std (population). Pass two marks frame
/// i+1 whenever the distance into it exceeds the threshold, then drops
/// candidates with fewer than `min_colors` occupied bins. Returns the
/// `frame_index` of every kept candidate.
inline std::vector<int> detect_keyframes(std::span<const FrameHistogram> frames, double alpha = 1.0,
                                         int min_colors = 26) {
  detail::require(frames.size() >= 2, "detect_keyframes needs at least two frames");
  const std::size_t bins = frames.front().counts.size();
  detail::require(bins >= 1, "histograms need at least one bin");

  std::vector<std::vector<double>> norm(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& c = frames[f].counts;
    detail::require(c.size() == bins, "histograms differ in bin count");
    double total = 0.0;
    for (double v : c) {
      detail::require(v >= 0.0 && std::isfinite(v), "histogram counts must be finite and nonnegative");
      total += v;
    }
    norm[f].assign(bins, 0.0);
    if (total > 0.0) {
      for (std::size_t b = 0; b < bins; ++b) norm[f][b] = c[b] / total;
    }
  }

  std::vector<double> diff(frames.size() - 1);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    double d = 0.0;
    for (std::size_t b = 0; b < bins; ++b) d += std::abs(norm[i + 1][b] - norm[i][b]);
    diff[i] = d;
  }
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= static_cast<double>(diff.size());
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  const double threshold = mean + alpha * std::sqrt(var / static_cast<double>(diff.size()));

  std::vector<int> keyframes;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (diff[i] > threshold && count_distinct_colors(frames[i + 1]) >= min_colors) {
      keyframes.push_back(frames[i + 1].frame_index);
    }
  }
  return keyframes;
}

/// `count` timestamps evenly spaced over a `span_s` window centered on the
/// keyframe, snapped to the frame grid. A window that would start before 0 is
/// shifted to start at 0.
inline std::vector<double> sample_context_frames(double keyframe_ts, double fps, int count = 10, double span_s = 5.0) {
  detail::require(fps > 0.0, "fps must be positive");
  detail::require(count >= 1, "count must be positive");
  detail::require(span_s >= 0.0, "span must be nonnegative");
  const double start = std::max(0.0, keyframe_ts - 0.5 * span_s);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? start + 0.5 * span_s : start + span_s * i / (count - 1);
    out.push_back(std::round(t * fps) / fps);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Audio
// ---------------------------------------------------------------------------

inline constexpr int kFeatureSampleRate = 22050;

struct AudioClip {
  Vector samples;
  int sample_rate_hz = kFeatureSampleRate;
  int channels = 1;
};

/// Channel 0 of interleaved PCM. Mono input passes through.
inline AudioClip take_left_channel(std::span<const double> interleaved, int channels, int sample_rate_hz) {
  detail::require(sample_rate_hz > 0, "sample rate must be positive");
  detail::require(channels == 1 || channels == 2, "expected mono or stereo input, got " + std::to_string(channels) +
                                                      " channels");
  detail::require(interleaved.size() % static_cast<std::size_t>(channels) == 0, "sample count not divisible by channels");
  AudioClip clip;
  clip.sample_rate_hz = sample_rate_hz;
  const auto frames = static_cast<Eigen::Index>(interleaved.size() / static_cast<std::size_t>(channels));
  clip.samples.resize(frames);
  for (Eigen::Index i = 0; i < frames; ++i) clip.samples[i] = interleaved[static_cast<std::size_t>(i * channels)];
  detail::require(clip.samples.allFinite(), "audio samples must be finite");
  return clip;
}

struct TfAgcConfig {
  int bands = 8;
  double attack_ms = 25.0;
  double release_ms = 250.0;
  double gain_floor = 1e-6;
  /// Envelopes of bands within this many octaves are summed before the gain.
  int neighborhood = 2;
};

namespace detail {

/// Zero-phase second-order Butterworth lowpass (forward then backward pass).
inline Vector zero_phase_lowpass(const Vector& x, double cutoff_hz, double fs) {
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / fs;
  // Q = 1/sqrt(2), so sin(w0) / (2Q) = sin(w0) / sqrt(2).
  const double a = std::sin(w0) / std::numbers::sqrt2;
  const double cw = std::cos(w0);
  const double a0 = 1.0 + a;
  const double b0 = (1.0 - cw) / 2.0 / a0, b1 = (1.0 - cw) / a0, b2 = b0;
  const double a1 = -2.0 * cw / a0, a2 = (1.0 - a) / a0;

  auto run = [&](const Vector& in) {
    Vector out(in.size());
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (Eigen::Index n = 0; n < in.size(); ++n) {
      const double y = b0 * in[n] + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = in[n];
      y2 = y1;
      y1 = y;
      out[n] = y;
    }
    return out;
  };
  const Vector fwd = run(x);
  return run(fwd.reverse()).reverse();
}

}  // namespace detail

/// Octave-band automatic gain control.
///
/// The signal is split into `bands` octave bands by differences of zero-phase
/// lowpass filters, so the bands sum back to the input. Each band's mean square
/// is smoothed over the attack time, held by a follower that decays over the
/// release time, and turned into an amplitude envelope; the envelope used for
/// a band's gain is the sum over its neighborhood of bands. A steady sinusoid comes out with amplitude close to
/// 1 (RMS about 1/sqrt(2)).
inline AudioClip tf_agc(const AudioClip& clip, const TfAgcConfig& cfg = {}) {
  detail::require(clip.sample_rate_hz > 0, "sample rate must be positive");
  detail::require(clip.samples.allFinite(), "audio samples must be finite");
  detail::require(cfg.bands >= 1 && cfg.neighborhood >= 0, "invalid AGC configuration");
  const double fs = clip.sample_rate_hz;
  const Eigen::Index n = clip.samples.size();
  AudioClip out = clip;
  if (n == 0) return out;

  std::vector<Vector> bands;
  Vector prev_low = Vector::Zero(n);
  for (int b = 0; b < cfg.bands - 1; ++b) {
    const double cutoff = 0.5 * fs / std::pow(2.0, cfg.bands - 1 - b);
    Vector low = detail::zero_phase_lowpass(clip.samples, cutoff, fs);
    bands.push_back(low - prev_low);
    prev_low = std::move(low);
  }
  bands.push_back(clip.samples - prev_low);

  const double attack = 1.0 - std::exp(-1.0 / (cfg.attack_ms * 1e-3 * fs));
  const double release = 1.0 - std::exp(-1.0 / (cfg.release_ms * 1e-3 * fs));
  const Eigen::Index warmup = std::max<Eigen::Index>(1, std::min<Eigen::Index>(n, static_cast<Eigen::Index>(cfg.attack_ms * 1e-3 * fs)));

  Matrix env(static_cast<Eigen::Index>(bands.size()), n);
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const Vector& s = bands[b];
    double m = s.head(warmup).squaredNorm() / static_cast<double>(warmup);
    double e = m;
    for (Eigen::Index t = 0; t < n; ++t) {
      m += attack * (s[t] * s[t] - m);
      e += (m > e ? 1.0 : release) * (m - e);
      env(static_cast<Eigen::Index>(b), t) = std::sqrt(2.0 * e);
    }
  }

  out.samples.setZero();
  const auto nb = static_cast<int>(bands.size());
  for (int b = 0; b < nb; ++b) {
    const int lo = std::max(0, b - cfg.neighborhood);
    const int hi = std::min(nb - 1, b + cfg.neighborhood);
    for (Eigen::Index t = 0; t < n; ++t) {
      double local = 0.0;
      for (int k = lo; k <= hi; ++k) local += env(k, t);
      out.samples[t] += bands[static_cast<std::size_t>(b)][t] / std::max(local, cfg.gain_floor);
    }
  }
  return out;
}

struct MfccConfig {
  int window_len = 1024;
  int hop = 512;
  int mel_filters = 40;
  int n_coeffs = 16;

  void validate() const {
    detail::require(hop > 0 && hop <= window_len, "need 0 < hop <= window_len");
    detail::require(n_coeffs >= 1 && n_coeffs <= mel_filters, "need 1 <= n_coeffs <= mel_filters");
  }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters evenly spaced on the mel scale from 0 Hz to Nyquist.
/// Rows are filters, columns FFT bins 0..n_fft/2.
inline Matrix mel_filterbank(int filters, int n_fft, double sample_rate) {
  detail::require(filters >= 1 && n_fft >= 2, "invalid filterbank shape");
  const double top = hz_to_mel(0.5 * sample_rate);
  std::vector<double> edges(static_cast<std::size_t>(filters + 2));
  for (int i = 0; i < filters + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(top * i / (filters + 1));
  const int bins = n_fft / 2 + 1;
  Matrix fb = Matrix::Zero(filters, bins);
  for (int j = 0; j < filters; ++j) {
    const double lo = edges[static_cast<std::size_t>(j)], mid = edges[static_cast<std::size_t>(j + 1)],
                 hi = edges[static_cast<std::size_t>(j + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = k * sample_rate / n_fft;
      const double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
      fb(j, k) = std::max(0.0, w);
    }
  }
  return fb;
}

/// Orthonormal DCT-II as an n x n matrix (row i is basis function i).
inline Matrix dct2_matrix(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    const double s = i == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int j = 0; j < n; ++j) m(i, j) = s * std::cos(std::numbers::pi * i * (j + 0.5) / n);
  }
  return m;
}

/// Regression deltas over +-2 rows with edge rows replicated:
/// d_t = sum_{n=1,2} n (c_{t+n} - c_{t-n}) / 10.
inline FeatureMatrix delta_coefficients(const FeatureMatrix& seq) {
  detail::require(seq.rows() >= 1, "delta_coefficients needs at least one row");
  const Eigen::Index t_count = seq.rows();
  auto at = [&](Eigen::Index t) { return seq.row(std::clamp<Eigen::Index>(t, 0, t_count - 1)); };
  FeatureMatrix out(t_count, seq.cols());
  for (Eigen::Index t = 0; t < t_count; ++t) {
    out.row(t) = ((at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / 10.0;
  }
  return out;
}

/// Static cepstra only: one row of `n_coeffs` per frame.
inline FeatureMatrix mfcc_static(const AudioClip& clip, const MfccConfig& cfg = {}) {
  cfg.validate();
  if (clip.sample_rate_hz != kFeatureSampleRate) {
    throw InputError("mfcc expects " + std::to_string(kFeatureSampleRate) + " Hz audio, got " +
                     std::to_string(clip.sample_rate_hz) + " Hz (resample upstream)");
  }
  const Eigen::Index len = clip.samples.size();
  detail::require(len >= cfg.window_len, "signal shorter than one analysis window");
  detail::require(clip.samples.allFinite(), "audio samples must be finite");

  const Eigen::Index frames = (len - cfg.window_len) / cfg.hop + 1;
  const Matrix fb = mel_filterbank(cfg.mel_filters, cfg.window_len, clip.sample_rate_hz);
  const Matrix dct = dct2_matrix(cfg.mel_filters).topRows(cfg.n_coeffs);
  std::vector<double> window(static_cast<std::size_t>(cfg.window_len));
  for (int i = 0; i < cfg.window_len; ++i) {
    window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.window_len);
  }

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(cfg.window_len));
  std::vector<std::complex<double>> spec;
  const int bins = cfg.window_len / 2 + 1;
  Vector power(bins);
  FeatureMatrix out(frames, cfg.n_coeffs);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * cfg.hop;
    for (int i = 0; i < cfg.window_len; ++i) buf[static_cast<std::size_t>(i)] = clip.samples[start + i] * window[static_cast<std::size_t>(i)];
    fft.fwd(spec, buf);
    for (int k = 0; k < bins; ++k) power[k] = std::norm(spec[static_cast<std::size_t>(k)]);
    const Vector log_mel = (fb * power).cwiseMax(1e-10).array().log().matrix();
    out.row(f) = (dct * log_mel).transpose();
  }
  return out;
}

/// [MFCC | delta | delta-delta] per frame, 3 * n_coeffs columns.
inline FeatureMatrix mfcc_features(const AudioClip& clip, const MfccConfig& cfg = {}) {
  const FeatureMatrix stat = mfcc_static(clip, cfg);
  const FeatureMatrix d1 = delta_coefficients(stat);
  const FeatureMatrix d2 = delta_coefficients(d1);
  FeatureMatrix out(stat.rows(), 3 * stat.cols());
  out << stat, d1, d2;
  return out;
}

}  // namespace mmsc
