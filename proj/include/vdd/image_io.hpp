#pragma once

#include <string>

#include "vdd/scene.hpp"
#include "vdd/tensor.hpp"

namespace vdd {

// Binary PPM (P6, 8-bit); pixel values map linearly from [-1,1] to 0..255.
void write_ppm(const std::string& path, const TensorPtr& rgb_frame);  // [3,H,W]
TensorPtr read_ppm(const std::string& path);

// Binary PGM (P5, 16-bit big-endian): value = round(65535*(d-dmin)/(dmax-dmin))
// with (dmin, dmax) taken over the whole video.
void write_pgm16(const std::string& path, const TensorPtr& frame, double dmin, double dmax);  // [1,H,W] raw depths
TensorPtr read_pgm16(const std::string& path, double dmin, double dmax);  // back to raw depths

// Video directory layout: frame_%04d.ppm, depth_%04d.pgm, prompt.txt and
// depth_range.txt ("dmin dmax", needed to undo the PGM normalization).
void write_video_dir(const std::string& dir, const RenderedVideo& video);
RenderedVideo read_video_dir(const std::string& dir);      // frames + depths + prompt
TensorPtr read_video_frames(const std::string& dir);       // rgb only

// All frames side by side in one PPM, for quick visual inspection.
void write_contact_sheet(const std::string& path, const TensorPtr& rgb_video);  // [F,3,H,W]

}  // namespace vdd
