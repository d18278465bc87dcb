#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rmdsim {

/// xoshiro256** seeded through splitmix64. Fixed here (rather than
/// std::mt19937) so that identical (n, num_blocks, seed) give identical drive
/// sequences on every platform and in every language that reimplements it.
class Xoshiro256 {
 public:
  explicit Xoshiro256(uint64_t seed);
  uint64_t next();

 private:
  uint64_t s_[4];
};

/// Polarity sequence of one n-RMD realization: one entry of +/-1 per
/// elementary period, in temporal order (front() is applied first).
struct RmdSequence {
  int order = 0;
  int num_blocks = 0;
  uint64_t seed = 0;
  std::vector<int> polarities;

  int num_periods() const { return static_cast<int>(polarities.size()); }
};

/// n-multipole starting with sign `polarity`: length 2^n, built by
/// recursively anti-aligning two (n-1)-multipoles.
std::vector<int> multipole(int order, int polarity);

/// num_blocks independently, uniformly chosen n-multipoles.
RmdSequence generate_sequence(int order, int num_blocks, uint64_t seed);

/// Thue-Morse signs t_k = +1 iff popcount(k) is even; the n->infinity limit
/// of the multipole recursion (multipole(n, +1) is a prefix of this).
std::vector<int> thue_morse_prefix(int length);

struct Spectrum {
  std::vector<double> freq;  // cycles per elementary period, one-sided
  std::vector<double> amp;   // |DFT|/N, so a constant sequence gives amp 1 at f=0
};

/// One-sided discrete Fourier magnitude of the +/-1 signal, zero-padded by
/// pad_factor for finer frequency resolution.
Spectrum sequence_spectrum(const std::vector<int>& polarities, int pad_factor = 4);

/// Least-squares slope of log(amp) vs log(freq) over the lowest frequency
/// decade above 2/length, with amplitudes averaged in log-spaced bins first
/// (raw DFT bins are too noisy for a slope estimate).
double spectrum_envelope_exponent(const Spectrum& spectrum, int sequence_length);

/// Mean low-frequency envelope exponent over an ensemble of seeds; the
/// amplitude spectra are averaged bin-by-bin before fitting.
double ensemble_envelope_exponent(int order, int num_blocks, const std::vector<uint64_t>& seeds,
                                  int pad_factor = 4);

/// Two-line text format: a JSON header {n, num_blocks, seed} followed by one
/// compact line of '+'/'-' characters.
void write_sequence(std::ostream& os, const RmdSequence& seq);
RmdSequence read_sequence(std::istream& is);

}  // namespace rmdsim
