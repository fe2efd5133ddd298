#pragma once

#include <string>
#include <vector>

#include "depthfuse/confidence.hpp"
#include "depthfuse/nn.hpp"
#include "depthfuse/sparse_conv.hpp"

namespace depthfuse {

/// Shape of the point-confidence regressor: a stack of sparsity-aware
/// conv/batchnorm/relu blocks, then a 1-channel sparsity-aware conv squashed
/// into (0,1).
struct ApcConfig {
    std::vector<int> widths{16, 16, 16};
    std::vector<int> kernels{3, 3, 3};
    int head_kernel = 3;

    void validate() const;
};

/// Regresses per-pixel lidar confidence from a sparse depth map. Parameters
/// register under the "apc." prefix.
class ConfidenceNet {
public:
    ConfidenceNet(ParamStore& store, const ApcConfig& config, Rng& rng);

    /// Differentiable forward: [1, 1, H, W] confidence tensor, values in (0,1).
    Tensor forward(const MaskedFeature& input, Mode mode);

    /// Eval-mode convenience over a raw sparse map.
    ConfidenceMap infer(const DepthMap& d_lidar_sparse);

    const ApcConfig& config() const { return config_; }

private:
    ApcConfig config_;
    std::vector<Conv2d> convs_;
    std::vector<BatchNorm2d> norms_;
    Conv2d head_;
};

}  // namespace depthfuse
