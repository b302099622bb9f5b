#include "minaf/sim/image_source.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "minaf/common/error.hpp"

namespace minaf::sim {

void ShoeboxRoom::validate() const {
  require((dims.array() > 0.0).all(), "ShoeboxRoom: dimensions must be positive");
  for (double b : beta) require(b >= 0.0 && b < 1.0, "ShoeboxRoom: reflection coefficients must lie in [0, 1)");
  require(c_sound > 0.0 && fs > 0.0, "ShoeboxRoom: speed of sound and sample rate must be positive");
}

bool ShoeboxRoom::strictly_inside(const Vec3& p) const {
  return (p.array() > 0.0).all() && (p.array() < dims.array()).all();
}

geometry::TriangleMesh ShoeboxRoom::mesh() const { return geometry::box_mesh(Vec3::Zero(), dims); }

int ImageSource::order() const { return std::abs(index[0]) + std::abs(index[1]) + std::abs(index[2]); }

namespace {

// Reflections off the low (coordinate 0) and high (coordinate L) wall for
// lattice index n along one axis.
std::pair<int, int> wall_hits(int n) {
  const int m = std::abs(n);
  return n >= 0 ? std::pair{m / 2, (m + 1) / 2} : std::pair{(m + 1) / 2, m / 2};
}

double image_coordinate(int n, double length, double s) {
  return (n % 2 == 0) ? n * length + s : (n + 1) * length - s;
}

}  // namespace

std::vector<ImageSource> image_sources(const ShoeboxRoom& room, const Vec3& src, int max_order) {
  room.validate();
  require(max_order >= 0, "image_sources: max_order must be >= 0");
  require(room.strictly_inside(src), "image_sources: source must lie strictly inside the room");
  std::vector<ImageSource> out;
  for (int nx = -max_order; nx <= max_order; ++nx) {
    const int rest_x = max_order - std::abs(nx);
    for (int ny = -rest_x; ny <= rest_x; ++ny) {
      const int rest_y = rest_x - std::abs(ny);
      for (int nz = -rest_y; nz <= rest_y; ++nz) {
        ImageSource img;
        img.index = {nx, ny, nz};
        img.pos = Vec3(image_coordinate(nx, room.dims.x(), src.x()), image_coordinate(ny, room.dims.y(), src.y()),
                       image_coordinate(nz, room.dims.z(), src.z()));
        double amp = 1.0;
        for (int axis = 0; axis < 3; ++axis) {
          const auto [lo, hi] = wall_hits(img.index[static_cast<std::size_t>(axis)]);
          amp *= std::pow(room.beta[static_cast<std::size_t>(2 * axis)], lo) *
                 std::pow(room.beta[static_cast<std::size_t>(2 * axis + 1)], hi);
        }
        img.amp = amp;
        out.push_back(img);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const ImageSource& a, const ImageSource& b) {
    return std::tuple(a.order(), a.index[0], a.index[1], a.index[2]) <
           std::tuple(b.order(), b.index[0], b.index[1], b.index[2]);
  });
  return out;
}

double ReceiverSpec::orientation_rad() const { return orientation * std::numbers::pi / 2.0; }

Vec3 ReceiverSpec::ear_axis(int channel) const {
  // Exact quarter-turn values keep mirrored geometries bit-symmetric.
  const int quarter = ((orientation + (channel == 0 ? 1 : -1)) % 4 + 4) % 4;
  static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
  static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
  return Vec3(kCos[quarter], kSin[quarter], 0.0);
}

Vec3 ReceiverSpec::ear_position(int channel) const { return pos + ear_offset * ear_axis(channel); }

namespace {
constexpr double kHalf = (kFractionalDelayTaps - 1) / 2.0 + 1.0;  // window reaches zero at +/- 41
}  // namespace

double windowed_sinc(double x) {
  if (std::abs(x) >= kHalf) return 0.0;
  const double window = 0.5 * (1.0 + std::cos(std::numbers::pi * x / kHalf));
  const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
  return window * sinc;
}

std::array<dsp::Waveform, 2> render_rir(const ShoeboxRoom& room, const std::vector<ImageSource>& images,
                                        const ReceiverSpec& rx, double length_s) {
  room.validate();
  require(rx.orientation >= 0 && rx.orientation < 4, "render_rir: orientation must be one of 4 quarter turns");
  const auto length = static_cast<std::size_t>(std::llround(length_s * room.fs));
  require(length >= 1, "render_rir: length must cover at least one sample");
  std::array<dsp::Waveform, 2> out;
  constexpr int half_taps = (kFractionalDelayTaps - 1) / 2;
  const double kStepCos = std::cos(std::numbers::pi / kHalf);
  const double kStepSin = std::sin(std::numbers::pi / kHalf);
  for (int ch = 0; ch < 2; ++ch) {
    const Vec3 ear = rx.ear_position(ch);
    require(room.strictly_inside(ear), "render_rir: receiver ear lies outside the room");
    const Vec3 axis = rx.ear_axis(ch);
    dsp::Waveform& w = out[static_cast<std::size_t>(ch)];
    w.fs = room.fs;
    w.samples.assign(length, 0.0);
    for (const ImageSource& img : images) {
      const Vec3 offset = img.pos - ear;
      const double dist = offset.norm();
      const double delay = dist * room.fs / room.c_sound;
      if (delay > static_cast<double>(length - 1)) continue;
      const double cos_psi = dist > 0.0 ? offset.dot(axis) / dist : 1.0;
      const double gain = rx.gain_exponent == 0.0 ? 1.0 : std::pow(0.5 * (1.0 + cos_psi), rx.gain_exponent);
      const double amplitude = img.amp * gain / (4.0 * std::numbers::pi * std::max(dist, 1e-3));
      const long centre = std::lround(delay);
      const long first = std::max(centre - half_taps, 0L);
      const long last = std::min(centre + half_taps, static_cast<long>(length) - 1);
      // Same values as windowed_sinc, with one sin/cos pair per image: the
      // sinc numerator alternates sign per tap and the window phase rotates.
      const double x0 = static_cast<double>(first) - delay;
      double sin_pi_x = std::sin(std::numbers::pi * x0);
      double wc = std::cos(std::numbers::pi * x0 / kHalf);
      double ws = std::sin(std::numbers::pi * x0 / kHalf);
      for (long n = first; n <= last; ++n) {
        const double x = static_cast<double>(n) - delay;
        const double sinc = x == 0.0 ? 1.0 : sin_pi_x / (std::numbers::pi * x);
        w.samples[static_cast<std::size_t>(n)] += amplitude * 0.5 * (1.0 + wc) * sinc;
        sin_pi_x = -sin_pi_x;
        const double next_c = wc * kStepCos - ws * kStepSin;
        ws = ws * kStepCos + wc * kStepSin;
        wc = next_c;
      }
    }
  }
  return out;
}

}  // namespace minaf::sim
