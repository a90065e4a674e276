#pragma once

#include <cstdint>
#include <memory>

#include "trace/gmm.hpp"
#include "trace/view.hpp"

namespace trace {

// H x W x C intensity grid plus its flattening convention: index
// (row * W + col) * C + channel.
struct Canvas {
    int height = 32;
    int width = 32;
    int channels = 1;
    Vec data;  // height * width * channels

    Canvas() = default;
    Canvas(int h, int w, int c)
        : height(h), width(w), channels(c), data(Vec::Zero(h * w * c)) {}

    int size() const { return height * width * channels; }
    double& at(int row, int col, int ch = 0) {
        return data[(row * width + col) * channels + ch];
    }
    double at(int row, int col, int ch = 0) const {
        return data[(row * width + col) * channels + ch];
    }
};

// Differentiable image former g(theta, c). Pixel centers live in a
// canvas-centered frame: pixel (row, col) sits at
// (col + 0.5 - W/2, row + 0.5 - H/2); the view maps that point into the
// object frame before evaluation.
class Generator {
public:
    virtual ~Generator() = default;
    virtual int param_count() const = 0;
    virtual int canvas_height() const = 0;
    virtual int canvas_width() const = 0;
    virtual int canvas_channels() const = 0;
    virtual Canvas render(const Vec& theta, const ViewTransform& c,
                          Exec exec = Exec::parallel) const = 0;
    // (d render / d theta)^T * grad_canvas, analytic
    virtual Vec render_vjp(const Vec& theta, const ViewTransform& c,
                           const Canvas& grad_canvas,
                           Exec exec = Exec::parallel) const = 0;
    virtual Vec initial_theta(std::uint64_t seed) const = 0;
};

// theta is the pixel grid itself; render bilinearly resamples it under the
// view (border-clamped). Identity view reproduces theta bitwise.
class DirectFieldGenerator : public Generator {
public:
    DirectFieldGenerator(int height, int width, int channels = 1);

    int param_count() const override { return h_ * w_ * c_; }
    int canvas_height() const override { return h_; }
    int canvas_width() const override { return w_; }
    int canvas_channels() const override { return c_; }
    Canvas render(const Vec& theta, const ViewTransform& c,
                  Exec exec = Exec::parallel) const override;
    Vec render_vjp(const Vec& theta, const ViewTransform& c,
                   const Canvas& grad_canvas, Exec exec = Exec::parallel) const override;
    Vec initial_theta(std::uint64_t seed) const override;

private:
    int h_, w_, c_;
};

// Additive 2D Gaussian splats. Per splat the raw parameter block is
// [cx, cy, log_sx, log_sy, angle, logit_opacity, intensity x channels];
// covariance exp(2 log_s) rotated by angle, opacity through a sigmoid.
class Splat2DGenerator : public Generator {
public:
    Splat2DGenerator(int n_splats, int height, int width, int channels = 1,
                     double background = 0.0);

    static constexpr int kGeomParams = 6;
    int params_per_splat() const { return kGeomParams + c_; }
    int param_count() const override { return n_ * params_per_splat(); }
    int n_splats() const { return n_; }
    int canvas_height() const override { return h_; }
    int canvas_width() const override { return w_; }
    int canvas_channels() const override { return c_; }
    double background() const { return bg_; }
    Canvas render(const Vec& theta, const ViewTransform& c,
                  Exec exec = Exec::parallel) const override;
    Vec render_vjp(const Vec& theta, const ViewTransform& c,
                   const Canvas& grad_canvas, Exec exec = Exec::parallel) const override;
    Vec initial_theta(std::uint64_t seed) const override;

private:
    int n_, h_, w_, c_;
    double bg_;
};

}  // namespace trace
