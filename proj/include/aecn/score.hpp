#pragma once

#include <aecn/model.hpp>
#include <aecn/optim.hpp>

namespace aecn {

/// Per-image anomaly score: mean squared difference between the image and its
/// reconstruction. No augmentation is applied.
inline float reconstruction_error(const AutoencoderModel& model, const Tensor& img) {
    const auto f = model.forward_sample(img);
    return mse_loss(f.reconstruction, img).value;
}

} // namespace aecn
