// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "vlprvos/config.hpp"
#include "vlprvos/encoders.hpp"

namespace vlprvos {

/// Per-frame temporal carriers, each [m_tmp × C_v].
using TemporalCarriers = std::vector<ad::Var>;

/// Temporal capture built from one frozen vision layer and nothing else.
/// Encoder: the layer over the carriers of all frames as one sequence.
/// Decoder: the same layer with self-attention swapped for cross-attention from the encoded
/// carriers to the patch tokens of all frames. Output is split back per frame.
TemporalCarriers prtc_forward(const TemporalCarriers& carriers, const std::vector<ad::Var>& frame_patches,
                              const TransformerLayerWeights& layer);

struct PrtcFlopBreakdown {
  std::uint64_t attention = 0;   // 2(T_c m)^2 C_v + 2 (T_c m)(T_c N_v) C_v
  std::uint64_t projection = 0;  // q/k/v/out maps and FFN
  std::uint64_t total() const { return attention + projection; }
};

/// Closed-form multiply-accumulate count of one prtc_forward at the configured clip length.
PrtcFlopBreakdown prtc_flops(const ModelConfig& cfg);

/// Closed-form multiply-accumulate count of one vision layer forward over a whole clip, with the
/// prompt slots the configuration wires in (history from a full previous clip). The stage-1
/// language cross-attention term is not included.
std::uint64_t vision_layer_flops(const ModelConfig& cfg);

}  // namespace vlprvos
