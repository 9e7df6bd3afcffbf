#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

// Windowed-sinc FIR design with a Kaiser window. Frequencies are normalized
// to cycles per sample (Nyquist = 0.5).
namespace qrng::dsp {

double kaiser_beta(double attenuation_db);

// Odd length meeting `attenuation_db` over a transition band of the given width.
std::size_t kaiser_length(double attenuation_db, double transition_width);

std::vector<double> kaiser_window(std::size_t length, double beta);

// Linear-phase low-pass, -6 dB at `cutoff`, unity DC gain.
std::vector<double> design_lowpass(double cutoff, std::size_t length, double beta);

// Linear-phase high-pass by spectral inversion; `length` must be odd.
std::vector<double> design_highpass(double cutoff, std::size_t length, double beta);

// Shortest Kaiser high-pass, starting from the length estimate, whose measured
// response stays below -attenuation_db on [0, stop_edge]; cutoff midway to pass_edge.
std::vector<double> design_highpass_to_spec(double stop_edge, double pass_edge, double attenuation_db);

// Type III Hilbert transformer (odd length, antisymmetric): -i sign(f) response
// with group delay (length - 1) / 2.
std::vector<double> design_hilbert(std::size_t length, double beta);

// Full linear convolution of two tap sets.
std::vector<double> convolve(std::span<const double> a, std::span<const double> b);

std::complex<double> frequency_response(std::span<const double> taps, double frequency);

}  // namespace qrng::dsp
