#include "trace/render.hpp"

#include <cmath>
#include <stdexcept>

namespace trace {
namespace {

Eigen::Vector2d pixel_center(int row, int col, int h, int w) {
    return {col + 0.5 - 0.5 * w, row + 0.5 - 0.5 * h};
}

void check_view(const ViewTransform& c) {
    if (!c.invertible()) throw std::invalid_argument("degenerate view");
}

}  // namespace

ViewTransform sample_view(const ViewRanges& r, std::uint64_t seed,
                          std::uint64_t index) {
    auto eng = make_engine(seed, stream::view, index);
    double scale = uniform(eng, r.scale_lo, r.scale_hi);
    double rot = uniform(eng, r.rot_lo, r.rot_hi);
    double tx = uniform(eng, r.trans_lo, r.trans_hi);
    double ty = uniform(eng, r.trans_lo, r.trans_hi);
    ViewTransform v;
    v.linear << scale * std::cos(rot), -scale * std::sin(rot),
        scale * std::sin(rot), scale * std::cos(rot);
    v.translation << tx, ty;
    return v;
}

DirectFieldGenerator::DirectFieldGenerator(int height, int width, int channels)
    : h_(height), w_(width), c_(channels) {
    if (height < 1 || width < 1 || channels < 1)
        throw std::invalid_argument("bad canvas shape");
}

Canvas DirectFieldGenerator::render(const Vec& theta, const ViewTransform& view,
                                    Exec) const {
    if (theta.size() != param_count())
        throw std::invalid_argument("theta size mismatch");
    check_view(view);
    Canvas out(h_, w_, c_);
    for (int row = 0; row < h_; ++row) {
        for (int col = 0; col < w_; ++col) {
            Eigen::Vector2d q =
                view.linear * pixel_center(row, col, h_, w_) + view.translation;
            double gx = q.x() + 0.5 * w_ - 0.5;
            double gy = q.y() + 0.5 * h_ - 0.5;
            gx = std::fmin(std::fmax(gx, 0.0), w_ - 1.0);
            gy = std::fmin(std::fmax(gy, 0.0), h_ - 1.0);
            int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
            int x1 = std::min(x0 + 1, w_ - 1), y1 = std::min(y0 + 1, h_ - 1);
            double fx = gx - x0, fy = gy - y0;
            for (int ch = 0; ch < c_; ++ch) {
                auto node = [&](int r, int c) {
                    return theta[(r * w_ + c) * c_ + ch];
                };
                out.at(row, col, ch) =
                    (1.0 - fy) * ((1.0 - fx) * node(y0, x0) + fx * node(y0, x1)) +
                    fy * ((1.0 - fx) * node(y1, x0) + fx * node(y1, x1));
            }
        }
    }
    return out;
}

Vec DirectFieldGenerator::render_vjp(const Vec& theta, const ViewTransform& view,
                                     const Canvas& grad_canvas, Exec) const {
    if (theta.size() != param_count())
        throw std::invalid_argument("theta size mismatch");
    if (grad_canvas.height != h_ || grad_canvas.width != w_ ||
        grad_canvas.channels != c_)
        throw std::invalid_argument("grad canvas shape mismatch");
    check_view(view);
    Vec grad = Vec::Zero(param_count());
    // scatter of the bilinear weights; serial to keep accumulation order fixed
    for (int row = 0; row < h_; ++row) {
        for (int col = 0; col < w_; ++col) {
            Eigen::Vector2d q =
                view.linear * pixel_center(row, col, h_, w_) + view.translation;
            double gx = q.x() + 0.5 * w_ - 0.5;
            double gy = q.y() + 0.5 * h_ - 0.5;
            gx = std::fmin(std::fmax(gx, 0.0), w_ - 1.0);
            gy = std::fmin(std::fmax(gy, 0.0), h_ - 1.0);
            int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
            int x1 = std::min(x0 + 1, w_ - 1), y1 = std::min(y0 + 1, h_ - 1);
            double fx = gx - x0, fy = gy - y0;
            for (int ch = 0; ch < c_; ++ch) {
                double g = grad_canvas.at(row, col, ch);
                grad[(y0 * w_ + x0) * c_ + ch] += (1.0 - fy) * (1.0 - fx) * g;
                grad[(y0 * w_ + x1) * c_ + ch] += (1.0 - fy) * fx * g;
                grad[(y1 * w_ + x0) * c_ + ch] += fy * (1.0 - fx) * g;
                grad[(y1 * w_ + x1) * c_ + ch] += fy * fx * g;
            }
        }
    }
    return grad;
}

Vec DirectFieldGenerator::initial_theta(std::uint64_t seed) const {
    auto eng = make_engine(seed, stream::nn_init, 0xf1e1d);
    Vec theta(param_count());
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        theta[i] = 0.1 * standard_normal(eng);
    return theta;
}

Splat2DGenerator::Splat2DGenerator(int n_splats, int height, int width,
                                   int channels, double background)
    : n_(n_splats), h_(height), w_(width), c_(channels), bg_(background) {
    if (height < 1 || width < 1 || channels < 1 || n_splats < 0)
        throw std::invalid_argument("bad splat generator shape");
}

Canvas Splat2DGenerator::render(const Vec& theta, const ViewTransform& view,
                                Exec exec) const {
    if (theta.size() != param_count())
        throw std::invalid_argument("theta size mismatch");
    check_view(view);
    const int pps = params_per_splat();
    Canvas out(h_, w_, c_);

#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (int pix = 0; pix < h_ * w_; ++pix) {
        int row = pix / w_, col = pix % w_;
        Eigen::Vector2d q =
            view.linear * pixel_center(row, col, h_, w_) + view.translation;
        for (int ch = 0; ch < c_; ++ch) out.at(row, col, ch) = bg_;
        for (int s = 0; s < n_; ++s) {  // fixed order: bit-reproducible
            const double* p = theta.data() + s * pps;
            double dx = q.x() - p[0], dy = q.y() - p[1];
            double inv_sx2 = std::exp(-2.0 * p[2]);
            double inv_sy2 = std::exp(-2.0 * p[3]);
            double ca = std::cos(p[4]), sa = std::sin(p[4]);
            double u0 = ca * dx + sa * dy;
            double u1 = -sa * dx + ca * dy;
            double m = inv_sx2 * u0 * u0 + inv_sy2 * u1 * u1;
            double g = std::exp(-0.5 * m);
            double op = 1.0 / (1.0 + std::exp(-p[5]));
            for (int ch = 0; ch < c_; ++ch)
                out.at(row, col, ch) += op * p[kGeomParams + ch] * g;
        }
    }
    return out;
}

Vec Splat2DGenerator::render_vjp(const Vec& theta, const ViewTransform& view,
                                 const Canvas& grad_canvas, Exec exec) const {
    if (theta.size() != param_count())
        throw std::invalid_argument("theta size mismatch");
    if (grad_canvas.height != h_ || grad_canvas.width != w_ ||
        grad_canvas.channels != c_)
        throw std::invalid_argument("grad canvas shape mismatch");
    check_view(view);
    const int pps = params_per_splat();
    Vec grad = Vec::Zero(param_count());

    // parallel over splats: each owns a disjoint gradient block and walks
    // the pixels in a fixed order
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (int s = 0; s < n_; ++s) {
        const double* p = theta.data() + s * pps;
        double* gs = grad.data() + s * pps;
        double inv_sx2 = std::exp(-2.0 * p[2]);
        double inv_sy2 = std::exp(-2.0 * p[3]);
        double ca = std::cos(p[4]), sa = std::sin(p[4]);
        double op = 1.0 / (1.0 + std::exp(-p[5]));
        double dop = op * (1.0 - op);
        for (int pix = 0; pix < h_ * w_; ++pix) {
            int row = pix / w_, col = pix % w_;
            Eigen::Vector2d q =
                view.linear * pixel_center(row, col, h_, w_) + view.translation;
            double dx = q.x() - p[0], dy = q.y() - p[1];
            double u0 = ca * dx + sa * dy;
            double u1 = -sa * dx + ca * dy;
            double m = inv_sx2 * u0 * u0 + inv_sy2 * u1 * u1;
            double g = std::exp(-0.5 * m);

            // shared chain pieces across channels
            double gi = 0.0;  // sum_ch grad * intensity
            for (int ch = 0; ch < c_; ++ch) {
                double gc = grad_canvas.at(row, col, ch);
                gi += gc * p[kGeomParams + ch];
                gs[kGeomParams + ch] += gc * op * g;  // d/d intensity
            }
            double base = gi * op * g;  // common factor for geometry params

            // d m / d center = -2 M d, with M d expressed through u
            double Md_x = ca * inv_sx2 * u0 - sa * inv_sy2 * u1;
            double Md_y = sa * inv_sx2 * u0 + ca * inv_sy2 * u1;
            gs[0] += base * Md_x;
            gs[1] += base * Md_y;

            // d m / d log_s = -2 exp(-2 ls) u^2
            gs[2] += base * inv_sx2 * u0 * u0;
            gs[3] += base * inv_sy2 * u1 * u1;

            // d u / d angle through R'
            double du0 = -sa * dx + ca * dy;   // = u1
            double du1 = -ca * dx - sa * dy;   // = -u0
            double dm_dang = 2.0 * (inv_sx2 * u0 * du0 + inv_sy2 * u1 * du1);
            gs[4] += base * (-0.5) * dm_dang;

            gs[5] += gi * dop * g;  // d/d logit opacity
        }
    }
    return grad;
}

Vec Splat2DGenerator::initial_theta(std::uint64_t seed) const {
    auto eng = make_engine(seed, stream::nn_init, 0x5b1a7);
    const int pps = params_per_splat();
    Vec theta(param_count());
    double extent = 0.35 * std::min(h_, w_);
    for (int s = 0; s < n_; ++s) {
        double* p = theta.data() + s * pps;
        p[0] = uniform(eng, -extent, extent);
        p[1] = uniform(eng, -extent, extent);
        p[2] = p[3] = std::log(std::max(1.0, std::min(h_, w_) / 8.0));
        p[4] = uniform(eng, 0.0, 2.0 * M_PI);
        p[5] = 0.0;  // opacity 0.5
        for (int ch = 0; ch < c_; ++ch) p[kGeomParams + ch] = 0.5;
    }
    return theta;
}

}  // namespace trace
