#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace zfs::enc {

/// One convolution or pooling stage, as seen by receptive-field arithmetic.
struct Stage {
  int64_t k = 1, s = 1, p = 0;
  bool pool = false;
};

/// Geometry of a feature grid relative to the network input. The receptive
/// window of cell (i,j) along one axis is [offset + i*jump, offset + i*jump
/// + rf - 1], clipped to the input bounds.
struct FeatureGeometry {
  int64_t h = 0, w = 0, c = 0;
  int64_t rf = 1;      // receptive field side, pixels
  int64_t jump = 1;    // input pixels per feature cell
  int64_t offset = 0;  // window start for cell 0 (negative with padding)

  /// Clipped pixel range [lo, hi] covered by cell index i along an axis of
  /// the given input size. May be empty (lo > hi) only for degenerate input.
  std::pair<int64_t, int64_t> window(int64_t i, int64_t input_size) const {
    int64_t lo = offset + i * jump;
    int64_t hi = lo + rf - 1;
    if (lo < 0) lo = 0;
    if (hi > input_size - 1) hi = input_size - 1;
    return {lo, hi};
  }
};

inline int64_t stage_out(int64_t in, const Stage& st) {
  const int64_t span = in + 2 * st.p - st.k;
  return span < 0 ? 0 : span / st.s + 1;
}

/// Standard convolution-arithmetic recurrence:
///   rf' = rf + (k-1)*jump,  jump' = jump*s,  offset' = offset - p*jump.
inline FeatureGeometry fold_stage(FeatureGeometry g, const Stage& st, int64_t in_h, int64_t in_w) {
  FeatureGeometry out = g;
  out.h = stage_out(in_h, st);
  out.w = stage_out(in_w, st);
  out.rf = g.rf + (st.k - 1) * g.jump;
  out.offset = g.offset - st.p * g.jump;
  out.jump = g.jump * st.s;
  return out;
}

inline FeatureGeometry fold_stages(const std::vector<Stage>& stages, int64_t input_size) {
  FeatureGeometry g;
  g.h = g.w = input_size;
  for (const auto& st : stages) g = fold_stage(g, st, g.h, g.w);
  return g;
}

}  // namespace zfs::enc
