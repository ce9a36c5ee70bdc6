#pragma once

#include <utility>

#include "cmtda/tensor.hpp"

namespace cmtda {

// Per-channel 2-D DFT magnitude and argument, unshifted (DC at index 0,0).
struct Spectrum {
    Tensor amplitude;  // (C,H,W), non-negative
    Tensor phase;      // (C,H,W), radians
};

// Forward DFT of a real image; rejects non-finite pixels.
Spectrum amplitude_of(const Tensor& image);

// Inverse DFT of amplitude*exp(i*phase), real part, scaled by 1/(H*W).
// Reconstructs the source image of amplitude_of within 1e-4.
Tensor inverse_of(const Tensor& amplitude, const Tensor& phase);

}  // namespace cmtda
