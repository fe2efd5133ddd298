#pragma once

#include "depthfuse/confidence.hpp"
#include "depthfuse/depth_map.hpp"
#include "depthfuse/tensor.hpp"

namespace depthfuse {

/// Confidence-weighted fusion of the two modalities:
///   jointly valid  -> d_stereo * (1 - m) + d_lidar * m
///   one valid      -> that modality passes through unchanged
///   neither valid  -> invalid
DepthMap fuse_depth(const DepthMap& d_stereo, const DepthMap& d_lidar, const ConfidenceMap& m_lidar);

/// Differentiable counterpart used in the training graph. The depth inputs
/// are data; gradient flows through `m_lidar` ([1, 1, H, W], values in [0,1])
/// on jointly valid pixels. Pixels valid in neither modality come out 0.
Tensor fuse_depth_tensor(const DepthMap& d_stereo, const DepthMap& d_lidar, const Tensor& m_lidar);

}  // namespace depthfuse
