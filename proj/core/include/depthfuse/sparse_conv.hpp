#pragma once

#include "depthfuse/depth_map.hpp"
#include "depthfuse/ops.hpp"
#include "depthfuse/tensor.hpp"

namespace depthfuse {

/// A feature tensor paired with the binary visibility of each spatial
/// position. Visibility is data, not part of the autodiff graph: it is
/// carried alongside the features and updated by each sparsity-aware layer.
struct MaskedFeature {
    Tensor features;  // [1, C, H, W]
    Grid visibility;  // H x W of {0, 1}
};

MaskedFeature make_masked_feature(const DepthMap& map);

/// Sparsity-aware convolution. Invisible inputs are zeroed before the
/// convolution and the response is renormalized by how much of each kernel
/// window was actually observed:
///   - no visible input in the window   -> output 0 (bias suppressed)
///   - every in-bounds input visible    -> plain convolution (factor 1)
///   - partial visibility               -> factor K / (S + eps), K = kernel
///     area, S = visible count
/// Output visibility is the window max of the input visibility.
MaskedFeature sparse_conv(const MaskedFeature& input, const Tensor& weight, const Tensor& bias,
                          const ConvSpec& spec);

/// The renormalization map and propagated visibility for a visibility grid
/// under `spec`, exposed for tests.
struct SparseWindowStats {
    Grid factor;          // multiplier applied to the conv response
    Grid out_visibility;  // window max of the input visibility
};
SparseWindowStats sparse_window_stats(const Grid& visibility, const ConvSpec& spec);

constexpr double kSparseConvEps = 1e-8;

}  // namespace depthfuse
