#pragma once

#include <string>
#include <vector>

#include "trace/distill.hpp"
#include "trace/render.hpp"

namespace trace {

// Doubles are printed with %.17g everywhere so that reruns with the same
// config and seed produce byte-identical files.
std::string format_double(double v);

void write_csv(const Mat& m, const std::string& path,
               const std::vector<std::string>& header = {});

// 8-bit PGM, linearly mapped from [lo, hi]; lo == hi autoscales.
void write_pgm(const Canvas& canvas, const std::string& path, double lo = 0.0,
               double hi = 0.0);

// Signed data on a blue-white-red ramp.
void write_signed_ppm(const Canvas& canvas, const std::string& path);

// Simple polyline chart (one series per column of ys) as a PPM.
void write_line_plot(const std::vector<double>& xs,
                     const std::vector<std::vector<double>>& ys,
                     const std::vector<std::string>& labels,
                     const std::string& path, int width = 640,
                     int height = 480);

void write_run_record(const RunRecord& record, const std::string& path);

void ensure_dir(const std::string& path);

std::uint64_t fnv1a(const std::string& s);

}  // namespace trace
