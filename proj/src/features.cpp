#include "sparsepose/features.hpp"

#include <algorithm>
#include <string>

#include "sparsepose/errors.hpp"

namespace sparsepose {

std::vector<double> encode_frame(std::span<const TrackerFrame> cur,
                                 std::span<const TrackerFrame> prev) {
  if (cur.size() != prev.size())
    throw InvalidArgument("encode_frame: " + std::to_string(cur.size()) +
                          " current devices vs " + std::to_string(prev.size()) + " previous");
  std::vector<double> x;
  x.reserve(kFeaturesPerDevice * cur.size());
  for (std::size_t d = 0; d < cur.size(); ++d) {
    const Vec3 v = cur[d].pos - prev[d].pos;
    const Rotation6D theta = matrix_to_6d(cur[d].orient);
    const Rotation6D omega = matrix_to_6d(angular_velocity(prev[d].orient, cur[d].orient));
    x.insert(x.end(), cur[d].pos.data(), cur[d].pos.data() + 3);
    x.insert(x.end(), v.data(), v.data() + 3);
    x.insert(x.end(), theta.r.begin(), theta.r.end());
    x.insert(x.end(), omega.r.begin(), omega.r.end());
  }
  return x;
}

FeatureSequence encode_stream(const TrackerStream& stream) {
  FeatureSequence seq;
  seq.width = kFeaturesPerDevice * stream.devices();
  if (stream.size() < 2) return seq;
  seq.rows.reserve((stream.size() - 1) * seq.width);
  for (std::size_t t = 1; t < stream.size(); ++t) {
    const auto row = encode_frame(stream.frames[t], stream.frames[t - 1]);
    seq.rows.insert(seq.rows.end(), row.begin(), row.end());
  }
  return seq;
}

std::size_t window_count(std::size_t stream_frames, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0 || stream_frames < length + 1) return 0;
  return (stream_frames - length - 1) / stride + 1;
}

WindowSet make_windows(const TrackerStream& stream, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0)
    throw InvalidArgument("make_windows: length and stride must be positive");
  WindowSet out;
  const std::size_t count = window_count(stream.size(), length, stride);
  if (count == 0) {
    out.too_short = true;
    return out;
  }
  const FeatureSequence seq = encode_stream(stream);
  out.windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    Window win;
    win.target_frame = length + w * stride;
    win.length = length;
    win.width = seq.width;
    // Feature row of frame t is t-1; the window covers frames target-length+1..target.
    const std::size_t first_row = win.target_frame - length;
    win.rows.assign(seq.rows.begin() + static_cast<long>(first_row * seq.width),
                    seq.rows.begin() + static_cast<long>((first_row + length) * seq.width));
    out.windows.push_back(std::move(win));
  }
  return out;
}

}  // namespace sparsepose
