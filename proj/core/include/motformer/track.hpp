#pragma once

#include <array>

#include "motformer/geometry.hpp"

namespace motformer {

// Persistent identity carried across frames. The learned hidden state of the
// track lives in the tracker's feature matrix at the track's list position.
struct Track {
  int id = 0;
  Box3D box;                                // last associated detection
  std::array<double, 2> velocity_est{0.0, 0.0};
  int last_update_frame = 0;
  int age_since_match = 0;
  int class_id = 0;
  double score = 0.0;
  int identity = -1;                        // training-only ground-truth id, -1 if none
};

}  // namespace motformer
