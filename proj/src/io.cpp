#include "trace/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace trace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_dir(const std::string& path) {
    std::filesystem::create_directories(path);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void write_csv(const Mat& m, const std::string& path,
               const std::vector<std::string>& header) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            out << (i ? "," : "") << header[i];
        out << "\n";
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out << (c ? "," : "") << format_double(m(r, c));
        out << "\n";
    }
}

void write_pgm(const Canvas& canvas, const std::string& path, double lo,
               double hi) {
    if (lo == hi) {
        lo = canvas.data.minCoeff();
        hi = canvas.data.maxCoeff();
        if (lo == hi) hi = lo + 1.0;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P5\n" << canvas.width << " " << canvas.height << "\n255\n";
    for (int r = 0; r < canvas.height; ++r)
        for (int c = 0; c < canvas.width; ++c) {
            double v = canvas.at(r, c, 0);
            int g = static_cast<int>(std::lround(255.0 * (v - lo) / (hi - lo)));
            out.put(static_cast<char>(std::clamp(g, 0, 255)));
        }
}

void write_signed_ppm(const Canvas& canvas, const std::string& path) {
    double m = std::max(1e-300, canvas.data.cwiseAbs().maxCoeff());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P6\n" << canvas.width << " " << canvas.height << "\n255\n";
    for (int r = 0; r < canvas.height; ++r)
        for (int c = 0; c < canvas.width; ++c) {
            double v = canvas.at(r, c, 0) / m;  // [-1,1]
            int red = 255, green = 255, blue = 255;
            if (v > 0) {
                green = blue = static_cast<int>(std::lround(255 * (1.0 - v)));
            } else {
                red = green = static_cast<int>(std::lround(255 * (1.0 + v)));
            }
            out.put(static_cast<char>(std::clamp(red, 0, 255)));
            out.put(static_cast<char>(std::clamp(green, 0, 255)));
            out.put(static_cast<char>(std::clamp(blue, 0, 255)));
        }
}

void write_line_plot(const std::vector<double>& xs,
                     const std::vector<std::vector<double>>& ys,
                     const std::vector<std::string>& labels,
                     const std::string& path, int width, int height) {
    if (xs.empty() || ys.empty())
        throw std::invalid_argument("empty plot data");
    double xlo = *std::min_element(xs.begin(), xs.end());
    double xhi = *std::max_element(xs.begin(), xs.end());
    double ylo = 1e300, yhi = -1e300;
    for (const auto& s : ys)
        for (double v : s) {
            if (std::isfinite(v)) {
                ylo = std::min(ylo, v);
                yhi = std::max(yhi, v);
            }
        }
    if (xlo == xhi) xhi = xlo + 1.0;
    if (ylo >= yhi) yhi = ylo + 1.0;

    std::vector<unsigned char> img(width * height * 3, 255);
    auto put = [&](int x, int y, int r, int g, int b) {
        if (x < 0 || x >= width || y < 0 || y >= height) return;
        int i = (y * width + x) * 3;
        img[i] = r;
        img[i + 1] = g;
        img[i + 2] = b;
    };
    const int margin = 32;
    auto to_px = [&](double x, double y) {
        int px = margin + static_cast<int>((width - 2 * margin) *
                                           (x - xlo) / (xhi - xlo));
        int py = height - margin -
                 static_cast<int>((height - 2 * margin) * (y - ylo) /
                                  (yhi - ylo));
        return std::pair<int, int>{px, py};
    };
    // axes
    for (int x = margin; x < width - margin; ++x)
        put(x, height - margin, 0, 0, 0);
    for (int y = margin; y < height - margin; ++y) put(margin, y, 0, 0, 0);

    const int palette[6][3] = {{200, 30, 30},  {30, 30, 200}, {30, 160, 30},
                               {200, 130, 20}, {130, 30, 200}, {20, 150, 150}};
    for (std::size_t s = 0; s < ys.size(); ++s) {
        const int* col = palette[s % 6];
        for (std::size_t i = 1; i < xs.size() && i < ys[s].size(); ++i) {
            if (!std::isfinite(ys[s][i - 1]) || !std::isfinite(ys[s][i]))
                continue;
            auto [x0, y0] = to_px(xs[i - 1], ys[s][i - 1]);
            auto [x1, y1] = to_px(xs[i], ys[s][i]);
            int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
            for (int k = 0; k <= steps; ++k) {
                int x = x0 + (x1 - x0) * k / steps;
                int y = y0 + (y1 - y0) * k / steps;
                put(x, y, col[0], col[1], col[2]);
            }
        }
    }
    (void)labels;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()),
              static_cast<std::streamsize>(img.size()));
}

namespace {

// JSON has no NaN literal; unmeasured values become null
std::string json_number(double v) {
    return std::isfinite(v) ? format_double(v) : "null";
}

}  // namespace

void write_run_record(const RunRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "{\"type\":\"header\",\"config_digest\":\"" << record.config_digest
        << "\",\"seed\":" << record.seed << ",\"method\":\""
        << (record.method == Method::sds ? "sds" : "trace")
        << "\",\"aborted\":" << (record.aborted ? "true" : "false")
        << ",\"abort_reason\":\"" << record.abort_reason << "\"}\n";
    for (const auto& it : record.iterations) {
        out << "{\"type\":\"iter\",\"iter\":" << it.iter
            << ",\"t\":" << json_number(it.t)
            << ",\"t_prime\":" << json_number(it.t_prime)
            << ",\"phi_loss\":" << json_number(it.phi_loss)
            << ",\"grad_norm\":" << json_number(it.grad_norm)
            << ",\"sliced_w1\":" << json_number(it.sliced_w1)
            << ",\"mmd\":" << json_number(it.mmd) << "}\n";
    }
    out << "{\"type\":\"final\",\"sliced_w1\":"
        << json_number(record.final_sliced_w1)
        << ",\"mmd\":" << json_number(record.final_mmd) << "}\n";
}

}  // namespace trace
