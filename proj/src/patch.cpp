// Copyright 2026 The DeepShield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "deepshield/patch.hpp"

#include <cmath>

namespace deepshield {

PatchLabelGrid patch_labels(const BlendMask& mask, int num_patches, int theta) {
  DS_CHECK(!mask.empty(), "shape_mismatch", "empty mask");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(num_patches))));
  const int h = static_cast<int>(mask.front().rows()), w = static_cast<int>(mask.front().cols());
  DS_CHECK(side * side == num_patches && side > 0 && h % side == 0 && w % side == 0, "not_divisible",
           "patch count " + std::to_string(num_patches) + " does not tile a " + std::to_string(h) + "x" +
               std::to_string(w) + " frame into square-grid patches");
  const int ph = h / side, pw = w / side;
  PatchLabelGrid grid;
  grid.theta = theta;
  grid.labels = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(mask.size()), num_patches);
  for (std::size_t t = 0; t < mask.size(); ++t) {
    DS_CHECK(mask[t].rows() == h && mask[t].cols() == w, "shape_mismatch", "mask frames differ in size");
    for (int gy = 0; gy < side; ++gy)
      for (int gx = 0; gx < side; ++gx) {
        const int score = patch_mask_score(mask[t].block(gy * ph, gx * pw, ph, pw));
        grid.labels(static_cast<Eigen::Index>(t), gy * side + gx) = score >= theta ? 1 : 0;
      }
  }
  return grid;
}

}  // namespace deepshield
