#include "support/digit_fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "ganem/rng.hpp"

namespace ganem::testsupport {
namespace {

constexpr int kSide = 28;

struct Point {
  double x, y;
};

double dist_segment(double px, double py, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = px - a.x, wy = py - a.y;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::hypot(dx, dy);
}

// Approximate pixel distance to an axis-aligned ellipse outline.
double dist_ellipse(double px, double py, double cx, double cy, double rx, double ry) {
  const double qx = (px - cx) / rx, qy = (py - cy) / ry;
  const double q = std::hypot(qx, qy);
  return std::abs(q - 1.0) * 0.5 * (rx + ry);
}

// Linear anti-alias ramp around a stroke of the given half width.
double ink(double dist, double half_width) {
  return std::clamp(half_width + 0.5 - dist, 0.0, 1.0);
}

void render_zero(std::vector<double>& img, Rng& rng) {
  const double cx = 14 + rng.uniform(-1.75, 1.75);
  const double cy = 14 + rng.uniform(-1.75, 1.75);
  const double rx = rng.uniform(5.0, 6.5);
  const double ry = rng.uniform(7.5, 9.0);
  const double hw = rng.uniform(0.8, 1.4);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double d = dist_ellipse(x + 0.5, y + 0.5, cx, cy, rx, ry);
      double& v = img[static_cast<std::size_t>(y) * kSide + x];
      v = std::max(v, ink(d, hw));
    }
}

void render_one(std::vector<double>& img, Rng& rng) {
  const double x0 = 14 + rng.uniform(-1.75, 1.75);
  const double y0 = 6 + rng.uniform(-1.0, 1.0);
  const double y1 = 22 + rng.uniform(-1.0, 1.0);
  const double slant = rng.uniform(-1.5, 1.5);
  const double hw = rng.uniform(0.8, 1.4);
  const Point top{x0 + slant, y0};
  const Point bottom{x0 - slant, y1};
  // Short flag from the top toward the lower left.
  const Point flag{top.x - rng.uniform(2.5, 4.0), top.y + rng.uniform(2.0, 3.5)};
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double d = std::min(dist_segment(px, py, top, bottom),
                                dist_segment(px, py, top, flag));
      double& v = img[static_cast<std::size_t>(y) * kSide + x];
      v = std::max(v, ink(d, hw));
    }
}

void render_two(std::vector<double>& img, Rng& rng) {
  const double dx = rng.uniform(-1.75, 1.75);
  const double dy = rng.uniform(-1.25, 1.25);
  const double r = rng.uniform(4.2, 5.2);
  const double hw = rng.uniform(0.8, 1.3);
  const double acx = 14 + dx, acy = 10 + dy;
  // Upper arc as a polyline from 200 degrees around to -10 degrees.
  std::vector<Point> arc;
  for (int i = 0; i <= 8; ++i) {
    const double ang = (200.0 - 230.0 * i / 8) * std::numbers::pi / 180.0;
    arc.push_back({acx + r * std::cos(ang), acy - r * std::sin(ang)});
  }
  const Point diag_end{9 + dx + rng.uniform(-0.5, 0.5), 21.5 + dy};
  const Point bar_end{19 + dx + rng.uniform(-0.5, 0.5), 21.5 + dy};
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double d = dist_segment(px, py, arc.back(), diag_end);  // descending diagonal
      d = std::min(d, dist_segment(px, py, diag_end, bar_end));  // base bar
      for (std::size_t i = 0; i + 1 < arc.size(); ++i)
        d = std::min(d, dist_segment(px, py, arc[i], arc[i + 1]));
      double& v = img[static_cast<std::size_t>(y) * kSide + x];
      v = std::max(v, ink(d, hw));
    }
}

void put_u32_be(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

DigitFixturePaths write_digit_fixture(const std::string& dir, int n_per_class,
                                      std::uint64_t seed) {
  if (n_per_class <= 0) throw std::invalid_argument("digit fixture: n_per_class must be > 0");
  const int n = 3 * n_per_class;
  Rng rng = Rng(seed).substream("digit-fixture");

  DigitFixturePaths paths{dir + "/digits-images.idx", dir + "/digits-labels.idx"};
  std::ofstream images(paths.images, std::ios::binary);
  std::ofstream labels(paths.labels, std::ios::binary);
  if (!images || !labels) throw std::runtime_error("digit fixture: cannot open " + dir);

  put_u32_be(images, 0x00000803);
  put_u32_be(images, static_cast<std::uint32_t>(n));
  put_u32_be(images, kSide);
  put_u32_be(images, kSide);
  put_u32_be(labels, 0x00000801);
  put_u32_be(labels, static_cast<std::uint32_t>(n));

  std::vector<double> img(kSide * kSide);
  std::vector<unsigned char> bytes(kSide * kSide);
  for (int i = 0; i < n; ++i) {
    const int c = i % 3;
    std::fill(img.begin(), img.end(), 0.0);
    if (c == 0) render_zero(img, rng);
    else if (c == 1) render_one(img, rng);
    else render_two(img, rng);
    for (std::size_t j = 0; j < img.size(); ++j)
      bytes[j] = static_cast<unsigned char>(std::lround(255.0 * std::clamp(img[j], 0.0, 1.0)));
    images.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
    labels.put(static_cast<char>(c));
  }
  if (!images || !labels) throw std::runtime_error("digit fixture: write failed");
  return paths;
}

}  // namespace ganem::testsupport
