#pragma once

#include <vector>

#include "depthfuse/depth_map.hpp"
#include "depthfuse/nn.hpp"

namespace depthfuse {

/// Stacked-hourglass geometry. Defaults follow the reference configuration:
/// three 2-level stages, 16 channels, confidence appended to the fused depth
/// as a second input channel. Dense cross-stage connections can be ablated.
struct HourglassConfig {
    int stages = 3;
    int levels = 2;
    int base_channels = 16;
    bool with_confidence_input = true;
    bool dense_connections = true;

    int input_channels() const { return with_confidence_input ? 2 : 1; }
    int downsample_multiple() const { return 1 << levels; }
    void validate() const;
};

/// Cascade of encoder-decoder stages regressing depth. Each stage sees the
/// network input plus every earlier stage's regressed depth; with dense
/// connections on, same-resolution features of earlier stages are
/// concatenated in and re-mixed by a 1x1 conv. Stage heads are 1x1 convs over
/// the decoder output and the raw input, ReLU-clamped to non-negative depth.
/// Parameters register under the "hg." prefix.
class HourglassNet {
public:
    HourglassNet(ParamStore& store, const HourglassConfig& config, Rng& rng);

    /// input: [1, input_channels, H, W], H and W divisible by 2^levels.
    /// Returns one [1, 1, H, W] prediction per stage; the last is the final
    /// output.
    std::vector<Tensor> forward(const Tensor& input, Mode mode);

    const HourglassConfig& config() const { return config_; }

private:
    struct Block {
        Conv2d conv;
        BatchNorm2d bn;
    };
    struct Stage {
        Block entry;
        std::vector<Block> enc;    // one per level, shallow to deep
        std::vector<Block> dec;    // one per level, deep to shallow
        std::vector<Block> merge;  // dense-connection mixers per position
        Conv2d head;
    };

    Tensor run_block(Block& b, const Tensor& x, Mode mode);

    HourglassConfig config_;
    std::vector<Stage> stages_;
};

/// Per-stage supervision: mse over groundtruth-valid pixels.
std::vector<Tensor> stage_losses(const std::vector<Tensor>& outputs, const DepthMap& d_gt);

/// Unweighted sum of every stage loss and the confidence loss.
Tensor total_loss(const std::vector<Tensor>& stage, const Tensor& l_c);

}  // namespace depthfuse
