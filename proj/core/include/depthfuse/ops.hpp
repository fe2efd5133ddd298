#pragma once

#include <memory>
#include <span>
#include <vector>

#include "depthfuse/tensor.hpp"

namespace depthfuse {

/// Forward-pass mode for layers with train/eval behavior differences.
enum class Mode { kTrain, kEval };

/// 2-d convolution geometry. Kernels are square and odd-sized; stride is 1 or 2.
struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 3;
    int stride = 1;
    int padding = 0;

    /// "same" padding for stride 1: kernel / 2.
    static ConvSpec same(int in_ch, int out_ch, int kernel, int stride = 1) {
        return ConvSpec{in_ch, out_ch, kernel, stride, kernel / 2};
    }
    void validate() const;
};

/// Cross-correlation over NCHW input. w is [out_ch, in_ch, k, k], b is
/// [out_ch]. Differentiable w.r.t. x, w and b.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Elementwise binary ops. Shapes must match exactly, except that either side
/// may be a one-element tensor (scalar broadcast).
Tensor add(const Tensor& x, const Tensor& y);
Tensor sub(const Tensor& x, const Tensor& y);
Tensor mul_pointwise(const Tensor& x, const Tensor& y);
Tensor scale(const Tensor& x, double factor);

/// Concatenate along the channel axis of NCHW tensors.
Tensor concat_channels(std::span<const Tensor> xs);

/// Non-overlapping window max over spatial dims; dims must divide by window.
Tensor maxpool2d(const Tensor& x, int window = 2);

/// Nearest-neighbor spatial upsampling by an integer factor.
Tensor upsample_nearest(const Tensor& x, int factor = 2);

/// Mean squared error over mask-true positions only. mask length equals the
/// tensor element count; an all-false mask is an error.
Tensor mse_masked(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> mask);

/// Multiply every channel of x by a constant spatial map of length H*W.
/// The map carries no gradient.
Tensor mul_channel_map(const Tensor& x, std::shared_ptr<const std::vector<double>> map);

/// Per-channel normalization state shared between forward passes.
struct BatchNormState {
    std::shared_ptr<std::vector<double>> running_mean;
    std::shared_ptr<std::vector<double>> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNormState create(int channels);
};

/// Batch normalization over NCHW. Train mode normalizes with batch statistics
/// and updates the running estimates; eval mode applies the stored affine.
/// Differentiable w.r.t. x, gamma, beta in both modes.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   Mode mode);

}  // namespace depthfuse
