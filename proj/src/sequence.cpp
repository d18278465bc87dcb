#include "rmdsim/sequence.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace rmdsim {

namespace {

uint64_t splitmix64(uint64_t& x) {
  uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

}  // namespace

Xoshiro256::Xoshiro256(uint64_t seed) {
  for (auto& word : s_) word = splitmix64(seed);
}

uint64_t Xoshiro256::next() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

std::vector<int> multipole(int order, int polarity) {
  if (order < 0) throw std::invalid_argument("multipole order must be non-negative");
  if (polarity != 1 && polarity != -1) throw std::invalid_argument("polarity must be +1 or -1");
  if (order == 0) return {polarity};
  std::vector<int> lower = multipole(order - 1, polarity);
  std::vector<int> block = lower;
  for (int sign : lower) block.push_back(-sign);
  return block;
}

RmdSequence generate_sequence(int order, int num_blocks, uint64_t seed) {
  if (num_blocks < 1) throw std::invalid_argument("num_blocks must be at least 1");
  const std::vector<int> plus = multipole(order, +1);
  const std::vector<int> minus = multipole(order, -1);
  RmdSequence seq;
  seq.order = order;
  seq.num_blocks = num_blocks;
  seq.seed = seed;
  seq.polarities.reserve(static_cast<size_t>(num_blocks) << order);
  Xoshiro256 rng(seed);
  for (int b = 0; b < num_blocks; ++b) {
    const auto& block = (rng.next() >> 63) ? minus : plus;
    seq.polarities.insert(seq.polarities.end(), block.begin(), block.end());
  }
  return seq;
}

std::vector<int> thue_morse_prefix(int length) {
  if (length < 1) throw std::invalid_argument("length must be at least 1");
  std::vector<int> signs(length);
  for (int k = 0; k < length; ++k)
    signs[k] = (__builtin_popcount(static_cast<unsigned>(k)) % 2 == 0) ? 1 : -1;
  return signs;
}

Spectrum sequence_spectrum(const std::vector<int>& polarities, int pad_factor) {
  const int n = static_cast<int>(polarities.size());
  if (n < 2) throw std::invalid_argument("spectrum needs a sequence of length >= 2");
  if (pad_factor < 1) throw std::invalid_argument("pad_factor must be at least 1");

  const size_t padded = static_cast<size_t>(n) * pad_factor;
  std::vector<std::complex<double>> signal(padded, 0.0);
  for (int k = 0; k < n; ++k) signal[k] = static_cast<double>(polarities[k]);

  std::vector<std::complex<double>> transform(padded);
  Eigen::FFT<double> fft;
  fft.fwd(transform, signal);

  Spectrum spec;
  const size_t half = padded / 2 + 1;
  spec.freq.resize(half);
  spec.amp.resize(half);
  for (size_t k = 0; k < half; ++k) {
    spec.freq[k] = static_cast<double>(k) / static_cast<double>(padded);
    spec.amp[k] = std::abs(transform[k]) / n;
  }
  return spec;
}

double spectrum_envelope_exponent(const Spectrum& spectrum, int sequence_length) {
  if (sequence_length < (1 << 10))
    throw std::invalid_argument("envelope fit needs sequence length >= 1024");
  const double f_lo = 2.0 / sequence_length;
  const double f_hi = std::min(10.0 * f_lo, 0.5);

  constexpr int kBins = 12;
  std::vector<double> bin_sum(kBins, 0.0);
  std::vector<int> bin_count(kBins, 0);
  const double log_lo = std::log(f_lo), log_hi = std::log(f_hi);
  for (size_t k = 1; k < spectrum.freq.size(); ++k) {
    const double f = spectrum.freq[k];
    if (f < f_lo || f >= f_hi) continue;
    int bin = static_cast<int>(kBins * (std::log(f) - log_lo) / (log_hi - log_lo));
    bin = std::min(std::max(bin, 0), kBins - 1);
    bin_sum[bin] += spectrum.amp[k];
    bin_count[bin] += 1;
  }

  // Simple regression of log(mean amp) on log(bin center).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (int b = 0; b < kBins; ++b) {
    if (bin_count[b] == 0) continue;
    const double center = std::exp(log_lo + (b + 0.5) * (log_hi - log_lo) / kBins);
    const double lx = std::log(center);
    const double lyv = std::log(bin_sum[b] / bin_count[b]);
    sx += lx;
    sy += lyv;
    sxx += lx * lx;
    sxy += lx * lyv;
    ++m;
  }
  if (m < 3) throw std::runtime_error("envelope fit: fewer than 3 populated frequency bins");
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

double ensemble_envelope_exponent(int order, int num_blocks, const std::vector<uint64_t>& seeds,
                                  int pad_factor) {
  if (seeds.empty()) throw std::invalid_argument("need at least one seed");
  Spectrum mean;
  int length = 0;
  for (size_t i = 0; i < seeds.size(); ++i) {
    const RmdSequence seq = generate_sequence(order, num_blocks, seeds[i]);
    const Spectrum s = sequence_spectrum(seq.polarities, pad_factor);
    if (i == 0) {
      mean = s;
      length = seq.num_periods();
    } else {
      for (size_t k = 0; k < mean.amp.size(); ++k) mean.amp[k] += s.amp[k];
    }
  }
  for (double& a : mean.amp) a /= static_cast<double>(seeds.size());
  return spectrum_envelope_exponent(mean, length);
}

void write_sequence(std::ostream& os, const RmdSequence& seq) {
  nlohmann::json header{{"n", seq.order}, {"num_blocks", seq.num_blocks}, {"seed", seq.seed}};
  os << header.dump() << '\n';
  std::string line;
  line.reserve(seq.polarities.size());
  for (int s : seq.polarities) line.push_back(s > 0 ? '+' : '-');
  os << line << '\n';
}

RmdSequence read_sequence(std::istream& is) {
  std::string header_line, signs;
  if (!std::getline(is, header_line) || !std::getline(is, signs))
    throw std::runtime_error("sequence file must have a JSON header line and a sign line");
  const auto header = nlohmann::json::parse(header_line);
  RmdSequence seq;
  seq.order = header.at("n").get<int>();
  seq.num_blocks = header.at("num_blocks").get<int>();
  seq.seed = header.at("seed").get<uint64_t>();
  seq.polarities.reserve(signs.size());
  for (char c : signs) {
    if (c == '+')
      seq.polarities.push_back(1);
    else if (c == '-')
      seq.polarities.push_back(-1);
    else
      throw std::runtime_error(std::string("invalid sign character '") + c + "' in sequence file");
  }
  const size_t expected = static_cast<size_t>(seq.num_blocks) << seq.order;
  if (seq.polarities.size() != expected)
    throw std::runtime_error("sequence length does not match header (n, num_blocks)");
  return seq;
}

}  // namespace rmdsim
