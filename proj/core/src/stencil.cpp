#include "tcdp/stencil.hpp"

#include <algorithm>
#include <stdexcept>

namespace tcdp {

namespace {

// Shared 3x3 walk: returns false when the window leaves the grid or touches
// an invalid pixel, otherwise invokes fn(dx, dy, value...) per tap.
template <typename Fn>
bool window3(const ScalarGrid& g, int x, int y, Fn&& fn) {
  if (x < 1 || y < 1 || x > g.width() - 2 || y > g.height() - 2) return false;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (!g.valid_at(x + dx, y + dy)) return false;
    }
  }
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      fn(dx, dy, g.at(x + dx, y + dy));
    }
  }
  return true;
}

template <typename Fn>
bool window3(const VectorGrid& g, int x, int y, Fn&& fn) {
  if (x < 1 || y < 1 || x > g.width() - 2 || y > g.height() - 2) return false;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (!g.valid_at(x + dx, y + dy)) return false;
    }
  }
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      fn(dx, dy, x + dx, y + dy);
    }
  }
  return true;
}

inline int sobel_wx(int dx, int dy) {
  static const int k[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  return k[dy + 1][dx + 1];
}

inline int sobel_wy(int dx, int dy) {
  static const int k[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  return k[dy + 1][dx + 1];
}

}  // namespace

VectorGrid sobel_gradients(const ScalarGrid& g) {
  VectorGrid out(g.width(), g.height(), 2, 0.0f, false);
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      double gx = 0.0, gy = 0.0;
      bool ok = window3(g, x, y, [&](int dx, int dy, double v) {
        gx += sobel_wx(dx, dy) * v;
        gy += sobel_wy(dx, dy) * v;
      });
      if (ok) {
        out.at(x, y, 0) = static_cast<float>(gx);
        out.at(x, y, 1) = static_cast<float>(gy);
        out.set_valid(x, y, true);
      }
    }
  }
  return out;
}

VectorGrid sobel_gradients(const VectorGrid& g) {
  VectorGrid out(g.width(), g.height(), 2 * g.channels(), 0.0f, false);
  std::vector<double> acc(static_cast<std::size_t>(2) * g.channels());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      bool ok = window3(g, x, y, [&](int dx, int dy, int sx, int sy) {
        int wx = sobel_wx(dx, dy);
        int wy = sobel_wy(dx, dy);
        for (int c = 0; c < g.channels(); ++c) {
          double v = g.at(sx, sy, c);
          acc[2 * c + 0] += wx * v;
          acc[2 * c + 1] += wy * v;
        }
      });
      if (ok) {
        for (std::size_t i = 0; i < acc.size(); ++i) {
          out.at(x, y, static_cast<int>(i)) = static_cast<float>(acc[i]);
        }
        out.set_valid(x, y, true);
      }
    }
  }
  return out;
}

ScalarGrid laplacian(const ScalarGrid& g) {
  ScalarGrid out(g.width(), g.height(), 0.0f, false);
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (x < 1 || y < 1 || x > g.width() - 2 || y > g.height() - 2) continue;
      if (!g.valid_at(x, y) || !g.valid_at(x - 1, y) || !g.valid_at(x + 1, y) ||
          !g.valid_at(x, y - 1) || !g.valid_at(x, y + 1)) {
        continue;
      }
      double v = static_cast<double>(g.at(x - 1, y)) + g.at(x + 1, y) + g.at(x, y - 1) +
                 g.at(x, y + 1) - 4.0 * g.at(x, y);
      out.set(x, y, static_cast<float>(v), true);
    }
  }
  return out;
}

VectorGrid laplacian(const VectorGrid& g) {
  VectorGrid out(g.width(), g.height(), g.channels(), 0.0f, false);
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (x < 1 || y < 1 || x > g.width() - 2 || y > g.height() - 2) continue;
      if (!g.valid_at(x, y) || !g.valid_at(x - 1, y) || !g.valid_at(x + 1, y) ||
          !g.valid_at(x, y - 1) || !g.valid_at(x, y + 1)) {
        continue;
      }
      for (int c = 0; c < g.channels(); ++c) {
        double v = static_cast<double>(g.at(x - 1, y, c)) + g.at(x + 1, y, c) +
                   g.at(x, y - 1, c) + g.at(x, y + 1, c) - 4.0 * g.at(x, y, c);
        out.at(x, y, c) = static_cast<float>(v);
      }
      out.set_valid(x, y, true);
    }
  }
  return out;
}

ScalarGrid dilate(const ScalarGrid& g, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate: negative radius");
  ScalarGrid out(g.width(), g.height(), 0.0f, true);
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      bool set = false;
      for (int dy = -radius; dy <= radius && !set; ++dy) {
        for (int dx = -radius; dx <= radius && !set; ++dx) {
          int sx = x + dx, sy = y + dy;
          if (!g.in_bounds(sx, sy)) continue;
          set = g.valid_at(sx, sy) && g.at(sx, sy) != 0.0f;
        }
      }
      out.at(x, y) = set ? 1.0f : 0.0f;
    }
  }
  return out;
}

ScalarGrid downsample2(const ScalarGrid& g) {
  int w = g.width() / 2, h = g.height() / 2;
  ScalarGrid out(w, h, 0.0f, false);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int sx = 2 * x, sy = 2 * y;
      if (!g.valid_at(sx, sy) || !g.valid_at(sx + 1, sy) || !g.valid_at(sx, sy + 1) ||
          !g.valid_at(sx + 1, sy + 1)) {
        continue;
      }
      double v = (static_cast<double>(g.at(sx, sy)) + g.at(sx + 1, sy) + g.at(sx, sy + 1) +
                  g.at(sx + 1, sy + 1)) * 0.25;
      out.set(x, y, static_cast<float>(v), true);
    }
  }
  return out;
}

VectorGrid downsample2(const VectorGrid& g) {
  int w = g.width() / 2, h = g.height() / 2;
  VectorGrid out(w, h, g.channels(), 0.0f, false);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int sx = 2 * x, sy = 2 * y;
      if (!g.valid_at(sx, sy) || !g.valid_at(sx + 1, sy) || !g.valid_at(sx, sy + 1) ||
          !g.valid_at(sx + 1, sy + 1)) {
        continue;
      }
      for (int c = 0; c < g.channels(); ++c) {
        double v = (static_cast<double>(g.at(sx, sy, c)) + g.at(sx + 1, sy, c) +
                    g.at(sx, sy + 1, c) + g.at(sx + 1, sy + 1, c)) * 0.25;
        out.at(x, y, c) = static_cast<float>(v);
      }
      out.set_valid(x, y, true);
    }
  }
  return out;
}

}  // namespace tcdp
