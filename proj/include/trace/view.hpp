#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace trace {

// Affine map of canvas coordinates: x -> linear * x + translation.
struct ViewTransform {
    Eigen::Matrix2d linear = Eigen::Matrix2d::Identity();
    Eigen::Vector2d translation = Eigen::Vector2d::Zero();

    static ViewTransform identity() { return {}; }

    bool invertible() const { return std::abs(linear.determinant()) > 1e-6; }

    // The 6 affine coefficients, row-major linear part then translation.
    Eigen::Matrix<double, 6, 1> coefficients() const {
        Eigen::Matrix<double, 6, 1> c;
        c << linear(0, 0), linear(0, 1), linear(1, 0), linear(1, 1),
            translation(0), translation(1);
        return c;
    }
};

struct ViewRanges {
    // scale is the inverse of the camera-distance analog
    double scale_lo = 1.0 / 4.0;
    double scale_hi = 1.0 / 1.5;
    double rot_lo = 0.0;
    double rot_hi = 2.0 * M_PI;
    double trans_lo = -0.1;
    double trans_hi = 0.1;

    static ViewRanges identity_only() {
        return {1.0, 1.0, 0.0, 0.0, 0.0, 0.0};
    }
};

ViewTransform sample_view(const ViewRanges& ranges, std::uint64_t seed,
                          std::uint64_t index);

}  // namespace trace
