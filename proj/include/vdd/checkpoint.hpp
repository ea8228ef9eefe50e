#pragma once

#include <string>

#include "vdd/model.hpp"
#include "vdd/tensor.hpp"

namespace vdd {

// Tensor snapshot: magic "VDT1", uint32 little-endian header length, ASCII
// header "rank e0 e1 ...", then raw little-endian float32 data in row-major
// order. Round trips are bit-exact.
void save_tensor(const std::string& path, const Tensor& t);
TensorPtr load_tensor(const std::string& path);

// Checkpoint directory: one VDT1 file per named parameter, manifest.txt with
// one "name [d0,d1,...] kind trainable" row per parameter in name order, and
// config.txt capturing the architecture and noise-schedule settings.
void save_checkpoint(const VideoModel& model, const std::string& dir);
VideoModel load_checkpoint(const std::string& dir);

std::string format_manifest(const VideoModel& model);

}  // namespace vdd
