#pragma once

#include "adscreen/audio.hpp"

namespace adscreen {

struct DenoiseOptions {
  double alpha = 0.98;     // decision-directed a-priori SNR smoothing
  int noise_frames = 6;    // leading frames used to initialize the noise PSD
  double gain_floor = 0.1;  // lower clamp on the spectral gain
};

// MMSE log-spectral amplitude enhancement (Ephraim-Malah). The noise PSD is
// estimated from the leading frames and held fixed. Output length and rate
// equal the input exactly.
AudioClip denoise_mmse_lsa(const AudioClip& clip, const DenoiseOptions& opts = {});

// Exponential integral E1(x), x > 0; used by the LSA gain and exposed for
// direct verification against its series/continued-fraction definitions.
double expint_e1(double x);

}  // namespace adscreen
