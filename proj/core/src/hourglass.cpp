#include "depthfuse/hourglass.hpp"

#include <string>

#include "depthfuse/errors.hpp"
#include "depthfuse/ops.hpp"

namespace depthfuse {

void HourglassConfig::validate() const {
    if (stages < 1) throw ArgumentError("hourglass: stages must be >= 1");
    if (levels < 1) throw ArgumentError("hourglass: levels must be >= 1");
    if (base_channels < 1) throw ArgumentError("hourglass: base_channels must be >= 1");
}

HourglassNet::HourglassNet(ParamStore& store, const HourglassConfig& config, Rng& rng)
    : config_(config) {
    config_.validate();
    const int cb = config_.base_channels;
    const int c_in = config_.input_channels();
    const int positions = 2 * config_.levels + 1;

    for (int i = 0; i < config_.stages; ++i) {
        const std::string sp = "hg.stage" + std::to_string(i) + ".";
        Stage stage{
            .entry = Block{Conv2d(store, sp + "entry.conv", ConvSpec::same(c_in + i, cb, 3), rng),
                           BatchNorm2d(store, sp + "entry.bn", cb)},
            .enc = {},
            .dec = {},
            .merge = {},
            .head = {},
        };
        for (int l = 1; l <= config_.levels; ++l) {
            const std::string bp = sp + "enc" + std::to_string(l) + ".";
            stage.enc.push_back(Block{Conv2d(store, bp + "conv", ConvSpec::same(cb, cb, 3), rng),
                                      BatchNorm2d(store, bp + "bn", cb)});
        }
        for (int l = config_.levels - 1; l >= 0; --l) {
            const std::string bp = sp + "dec" + std::to_string(l) + ".";
            stage.dec.push_back(Block{Conv2d(store, bp + "conv", ConvSpec::same(2 * cb, cb, 3), rng),
                                      BatchNorm2d(store, bp + "bn", cb)});
        }
        if (config_.dense_connections && i > 0) {
            for (int p = 0; p < positions; ++p) {
                const std::string bp = sp + "merge" + std::to_string(p) + ".";
                stage.merge.push_back(
                    Block{Conv2d(store, bp + "conv", ConvSpec::same((i + 1) * cb, cb, 1), rng),
                          BatchNorm2d(store, bp + "bn", cb)});
            }
        }
        stage.head = Conv2d(store, sp + "head.conv", ConvSpec::same(cb + c_in, 1, 1), rng);
        // Pass-through initialization: unit weight on the fused-depth channel
        // so an untrained stage reproduces its depth input and training
        // refines from there, instead of climbing from zero output to metric
        // scale at a fixed learning rate.
        stage.head.weight.mutable_data()[cb] = 1.0;
        stages_.push_back(std::move(stage));
    }
}

Tensor HourglassNet::run_block(Block& b, const Tensor& x, Mode mode) {
    return relu(b.bn(b.conv(x), mode));
}

std::vector<Tensor> HourglassNet::forward(const Tensor& input, Mode mode) {
    if (!input.defined()) throw ArgumentError("hourglass: empty input");
    const Shape& s = input.shape();
    if (s.size() != 4 || s[0] != 1 || s[1] != config_.input_channels()) {
        throw ArgumentError("hourglass: input must be [1, " +
                            std::to_string(config_.input_channels()) + ", H, W], got " +
                            shape_str(s));
    }
    const int mult = config_.downsample_multiple();
    if (s[2] % mult != 0 || s[3] % mult != 0) {
        throw ArgumentError("hourglass: spatial dims must be divisible by " +
                            std::to_string(mult) + ", got " + shape_str(s) +
                            " (pad the input first)");
    }

    const int positions = 2 * config_.levels + 1;
    // feats[i][p]: stage i's feature at graph position p, all stages sharing
    // the position layout [entry, enc1.., encL, dec(L-1).., dec0].
    std::vector<std::vector<Tensor>> feats(stages_.size(),
                                           std::vector<Tensor>(positions));
    std::vector<Tensor> outputs;

    auto place = [&](std::size_t i, int pos, Tensor f, Mode m) -> Tensor {
        Stage& stage = stages_[i];
        if (!stage.merge.empty()) {
            std::vector<Tensor> cat{std::move(f)};
            for (std::size_t j = 0; j < i; ++j) cat.push_back(feats[j][pos]);
            f = run_block(stage.merge[pos], concat_channels(cat), m);
        }
        feats[i][pos] = f;
        return f;
    };

    for (std::size_t i = 0; i < stages_.size(); ++i) {
        Stage& stage = stages_[i];
        Tensor x = input;
        if (i > 0) {
            std::vector<Tensor> cat{input};
            cat.insert(cat.end(), outputs.begin(), outputs.end());
            x = concat_channels(cat);
        }

        Tensor f = place(i, 0, run_block(stage.entry, x, mode), mode);
        for (int l = 1; l <= config_.levels; ++l) {
            f = place(i, l, run_block(stage.enc[l - 1], maxpool2d(f), mode), mode);
        }
        for (int l = config_.levels - 1; l >= 0; --l) {
            Tensor skip = feats[i][l];
            Tensor up = upsample_nearest(f);
            Tensor merged = concat_channels(std::vector<Tensor>{up, skip});
            const int pos = 2 * config_.levels - l;
            f = place(i, pos, run_block(stage.dec[config_.levels - 1 - l], merged, mode), mode);
        }

        Tensor head_in = concat_channels(std::vector<Tensor>{f, input});
        outputs.push_back(relu(stage.head(head_in)));
    }
    return outputs;
}

std::vector<Tensor> stage_losses(const std::vector<Tensor>& outputs, const DepthMap& d_gt) {
    if (outputs.empty()) throw ArgumentError("stage_losses: no stage outputs");
    const Shape expect{1, 1, d_gt.height(), d_gt.width()};
    auto gv = d_gt.values();
    Tensor gt = Tensor::from_vector(expect, std::vector<double>(gv.begin(), gv.end()));
    std::vector<Tensor> losses;
    losses.reserve(outputs.size());
    for (const Tensor& s : outputs) {
        if (!s.defined() || s.shape() != expect) {
            throw ArgumentError("stage_losses: stage output does not match groundtruth dims");
        }
        losses.push_back(mse_masked(s, gt, d_gt.valid()));
    }
    return losses;
}

Tensor total_loss(const std::vector<Tensor>& stage, const Tensor& l_c) {
    if (stage.empty()) throw ArgumentError("total_loss: no stage losses");
    Tensor acc = stage[0];
    for (std::size_t i = 1; i < stage.size(); ++i) acc = add(acc, stage[i]);
    return add(acc, l_c);
}

}  // namespace depthfuse
