#include "dba/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace dba::kernels {

namespace {

inline double conv_at(const double* in, int h, int w, int ic, const double* kernel, int oc_i,
                      int k, int y, int x) {
    const int r = k / 2;
    double acc = 0.0;
    const double* kw = kernel + static_cast<size_t>(oc_i) * ic * k * k;
    for (int ci = 0; ci < ic; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            int sy = y + ky - r;
            if (sy < 0 || sy >= h)
                continue;
            for (int kx = 0; kx < k; ++kx) {
                int sx = x + kx - r;
                if (sx < 0 || sx >= w)
                    continue;
                acc += kw[(static_cast<size_t>(ci) * k + ky) * k + kx] *
                       in[(static_cast<size_t>(sy) * w + sx) * ic + ci];
            }
        }
    }
    return acc;
}

struct BilinearAxis {
    int lo, hi;
    double frac;
};

inline BilinearAxis bilinear_axis(int d, int in_n, int out_n) {
    double s = (d + 0.5) * (static_cast<double>(in_n) / out_n) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_n - 1));
    int lo = static_cast<int>(std::floor(s));
    int hi = std::min(lo + 1, in_n - 1);
    return {lo, hi, s - lo};
}

} // namespace

void conv2d_same(const double* in, int h, int w, int ic, const double* kernel,
                 const double* bias, int oc, int k, double* out) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* orow = out + (static_cast<size_t>(y) * w + x) * oc;
            for (int o = 0; o < oc; ++o)
                orow[o] = bias[o] + conv_at(in, h, w, ic, kernel, o, k, y, x);
        }
    }
}

void conv2d_same_serial(const double* in, int h, int w, int ic, const double* kernel,
                        const double* bias, int oc, int k, double* out) {
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* orow = out + (static_cast<size_t>(y) * w + x) * oc;
            for (int o = 0; o < oc; ++o)
                orow[o] = bias[o] + conv_at(in, h, w, ic, kernel, o, k, y, x);
        }
    }
}

void relu_inplace(double* v, size_t n) {
    for (size_t i = 0; i < n; ++i)
        v[i] = v[i] > 0.0 ? v[i] : 0.0;
}

void maxpool2(const double* in, int h, int w, int c, double* out) {
    const int oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int ci = 0; ci < c; ++ci) {
                auto idx = [&](int yy, int xx) {
                    return (static_cast<size_t>(yy) * w + xx) * c + ci;
                };
                double m = in[idx(2 * y, 2 * x)];
                m = std::max(m, in[idx(2 * y, 2 * x + 1)]);
                m = std::max(m, in[idx(2 * y + 1, 2 * x)]);
                m = std::max(m, in[idx(2 * y + 1, 2 * x + 1)]);
                out[(static_cast<size_t>(y) * ow + x) * c + ci] = m;
            }
        }
    }
}

void maxpool2_serial(const double* in, int h, int w, int c, double* out) {
    const int oh = h / 2, ow = w / 2;
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int ci = 0; ci < c; ++ci) {
                auto idx = [&](int yy, int xx) {
                    return (static_cast<size_t>(yy) * w + xx) * c + ci;
                };
                double m = in[idx(2 * y, 2 * x)];
                m = std::max(m, in[idx(2 * y, 2 * x + 1)]);
                m = std::max(m, in[idx(2 * y + 1, 2 * x)]);
                m = std::max(m, in[idx(2 * y + 1, 2 * x + 1)]);
                out[(static_cast<size_t>(y) * ow + x) * c + ci] = m;
            }
        }
    }
}

void dense(const double* in, int n_in, const double* w, const double* bias, int n_out,
           double* out) {
#pragma omp parallel for schedule(static)
    for (int m = 0; m < n_out; ++m) {
        double acc = bias[m];
        const double* row = w + static_cast<size_t>(m) * n_in;
        for (int n = 0; n < n_in; ++n)
            acc += row[n] * in[n];
        out[m] = acc;
    }
}

void dense_serial(const double* in, int n_in, const double* w, const double* bias, int n_out,
                  double* out) {
    for (int m = 0; m < n_out; ++m) {
        double acc = bias[m];
        const double* row = w + static_cast<size_t>(m) * n_in;
        for (int n = 0; n < n_in; ++n)
            acc += row[n] * in[n];
        out[m] = acc;
    }
}

void softmax_inplace(double* v, int n) {
    double mx = v[0];
    for (int i = 1; i < n; ++i)
        mx = std::max(mx, v[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        v[i] = std::exp(v[i] - mx);
        sum += v[i];
    }
    for (int i = 0; i < n; ++i)
        v[i] /= sum;
}

void resize_bilinear(const double* in, int ih, int iw, int c, double* out, int oh, int ow) {
#pragma omp parallel for schedule(static)
    for (int dy = 0; dy < oh; ++dy) {
        BilinearAxis ay = bilinear_axis(dy, ih, oh);
        for (int dx = 0; dx < ow; ++dx) {
            BilinearAxis ax = bilinear_axis(dx, iw, ow);
            for (int ci = 0; ci < c; ++ci) {
                auto px = [&](int yy, int xx) {
                    return in[(static_cast<size_t>(yy) * iw + xx) * c + ci];
                };
                double top = px(ay.lo, ax.lo) * (1.0 - ax.frac) + px(ay.lo, ax.hi) * ax.frac;
                double bot = px(ay.hi, ax.lo) * (1.0 - ax.frac) + px(ay.hi, ax.hi) * ax.frac;
                out[(static_cast<size_t>(dy) * ow + dx) * c + ci] =
                    top * (1.0 - ay.frac) + bot * ay.frac;
            }
        }
    }
}

void resize_bilinear_serial(const double* in, int ih, int iw, int c, double* out, int oh,
                            int ow) {
    for (int dy = 0; dy < oh; ++dy) {
        BilinearAxis ay = bilinear_axis(dy, ih, oh);
        for (int dx = 0; dx < ow; ++dx) {
            BilinearAxis ax = bilinear_axis(dx, iw, ow);
            for (int ci = 0; ci < c; ++ci) {
                auto px = [&](int yy, int xx) {
                    return in[(static_cast<size_t>(yy) * iw + xx) * c + ci];
                };
                double top = px(ay.lo, ax.lo) * (1.0 - ax.frac) + px(ay.lo, ax.hi) * ax.frac;
                double bot = px(ay.hi, ax.lo) * (1.0 - ax.frac) + px(ay.hi, ax.hi) * ax.frac;
                out[(static_cast<size_t>(dy) * ow + dx) * c + ci] =
                    top * (1.0 - ay.frac) + bot * ay.frac;
            }
        }
    }
}

} // namespace dba::kernels
