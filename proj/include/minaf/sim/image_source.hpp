#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "minaf/dsp/spectrogram.hpp"
#include "minaf/geometry/mesh.hpp"

namespace minaf::sim {

using geometry::Vec3;

/// Rectangular room [0, Lx] x [0, Ly] x [0, Lz]. Reflection coefficients are
/// ordered (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz); z is vertical.
struct ShoeboxRoom {
  Vec3 dims{4.0, 3.0, 2.5};
  std::array<double, 6> beta{0.9, 0.9, 0.9, 0.9, 0.8, 0.8};
  double c_sound = 343.0;
  double fs = 16000.0;

  void validate() const;
  bool strictly_inside(const Vec3& p) const;
  geometry::TriangleMesh mesh() const;
};

struct ImageSource {
  Vec3 pos;
  double amp = 1.0;
  std::array<int, 3> index{0, 0, 0};
  int order() const;
};

/// Mirror images with |nx| + |ny| + |nz| <= max_order, sorted by
/// (order, nx, ny, nz). Throws InvalidArgument unless src is strictly inside.
std::vector<ImageSource> image_sources(const ShoeboxRoom& room, const Vec3& src, int max_order);

/// Binaural receiver: ears at pos +/- ear_offset along the axis at
/// orientation + 90 deg (left) and orientation - 90 deg (right), each with
/// gain (0.5 (1 + cos psi))^gain_exponent; exponent 0 is omnidirectional.
struct ReceiverSpec {
  Vec3 pos = Vec3::Zero();
  int orientation = 0;  // quarter turns: 0, 1, 2, 3 for 0/90/180/270 deg
  double ear_offset = 0.09;
  double gain_exponent = 1.0;

  double orientation_rad() const;
  /// Unit ear axis for channel 0 (left) or 1 (right).
  Vec3 ear_axis(int channel) const;
  Vec3 ear_position(int channel) const;
};

inline constexpr int kFractionalDelayTaps = 81;

/// Value of the Hann-windowed sinc kernel at offset x (samples); zero for
/// |x| beyond the kernel half-width.
double windowed_sinc(double x);

/// Two channels (left, right) of length round(length_s * fs). Images whose
/// arrival falls past the end are dropped. Throws InvalidArgument if either
/// ear lies outside the room.
std::array<dsp::Waveform, 2> render_rir(const ShoeboxRoom& room, const std::vector<ImageSource>& images,
                                        const ReceiverSpec& rx, double length_s);

}  // namespace minaf::sim
