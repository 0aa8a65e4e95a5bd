#pragma once

#include <array>
#include <string>

#include "polyper/params.hpp"
#include "polyper/tape.hpp"

namespace polyper {

/// Channel plan for the four pyramid stages at strides 4/8/16/32.
struct EncoderPlan {
    std::array<int, 4> channels{32, 64, 128, 256};
};

/// Tape ids of the four stage outputs E0..E3.
struct PyramidIds {
    std::array<int, 4> stages{};
};

inline void check_encoder_input(int height, int width) {
    if (height % 32 != 0)
        throw SizingError("encoder: input height " + std::to_string(height) + " is not divisible by 32");
    if (width % 32 != 0)
        throw SizingError("encoder: input width " + std::to_string(width) + " is not divisible by 32");
}

/// Register the encoder parameters: five strided 3x3 convolutions, two for
/// the stride-4 stem and one per remaining stage.
template <typename T>
void init_encoder_params(ParamStore<T>& store, Rng& rng, const EncoderPlan& plan) {
    const int c0 = plan.channels[0];
    auto add_conv = [&](const std::string& name, int cin, int cout) {
        store.add(name + ".w", glorot_uniform<T>(rng, {cout, cin, 3, 3}, cin * 9, cout * 9));
        store.add(name + ".b", Tensor<T>({cout}));
    };
    add_conv("encoder.conv0", 3, c0);
    add_conv("encoder.conv1", c0, c0);
    add_conv("encoder.conv2", c0, plan.channels[1]);
    add_conv("encoder.conv3", plan.channels[1], plan.channels[2]);
    add_conv("encoder.conv4", plan.channels[2], plan.channels[3]);
}

/// Small strided convolutional pyramid. Any module producing four stages at
/// strides 4/8/16/32 can replace this behind the same contract.
template <typename T>
PyramidIds encode(Tape<T>& tape, BoundParams<T>& p, int image, [[maybe_unused]] const EncoderPlan& plan) {
    const Tensor<T>& img = tape.val(image);
    if (img.rank() != 3 || img.shape[0] != 3) throw SizingError("encoder: expected a 3xHxW image");
    check_encoder_input(img.shape[1], img.shape[2]);

    auto block = [&](int x, const std::string& name) {
        return tape.silu(tape.conv2d(x, p(name + ".w"), p(name + ".b"), 2, 1));
    };
    int x = block(image, "encoder.conv0");
    PyramidIds out;
    out.stages[0] = block(x, "encoder.conv1");
    out.stages[1] = block(out.stages[0], "encoder.conv2");
    out.stages[2] = block(out.stages[1], "encoder.conv3");
    out.stages[3] = block(out.stages[2], "encoder.conv4");
    return out;
}

}  // namespace polyper
