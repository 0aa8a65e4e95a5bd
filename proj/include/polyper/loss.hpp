#pragma once

#include "polyper/mask.hpp"
#include "polyper/tape.hpp"

namespace polyper {

/// Training objective on one sample: overlap loss plus cross-entropy on the
/// final logits, and the same pair at 0.4 weight on the initial logits
/// (upsampled to the target size) so the first mask gets direct supervision.
template <typename T>
int segmentation_loss(Tape<T>& tape, int final_logits, int initial_logits, const BinaryMask& gt) {
    Tensor<T> target = gt.template to_tensor<T>();
    const int final_term = tape.add(tape.soft_dice_loss(final_logits, target),
                                    tape.bce_with_logits_mean(final_logits, target));
    const int init_up = tape.upsample_bilinear(initial_logits, gt.height, gt.width);
    const int aux_term =
        tape.add(tape.soft_dice_loss(init_up, target), tape.bce_with_logits_mean(init_up, target));
    return tape.add(final_term, tape.scale(aux_term, T(0.4)));
}

}  // namespace polyper
