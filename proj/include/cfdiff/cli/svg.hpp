#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cfdiff/engine.hpp"
#include "cfdiff/metrics.hpp"

namespace cfdiff::cli {

/// Minimal SVG builder over a data-coordinate viewport.
class SvgCanvas {
public:
    SvgCanvas(int width, int height, double x_lo, double x_hi, double y_lo, double y_hi);

    double px(double x) const;
    double py(double y) const;

    void rect(double x0, double y0, double x1, double y1, const std::string& fill, double opacity);
    void circle(double x, double y, double r_px, const std::string& fill, const std::string& css_class = {});
    void arrow(double x0, double y0, double x1, double y1, const std::string& stroke);
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  const std::string& css_class);
    /// Raw pixel-space helpers for axes and bars.
    void pixel_rect(double x, double y, double w, double h, const std::string& fill);
    void pixel_line(double x0, double y0, double x1, double y1, const std::string& stroke);
    void text(double x_px, double y_px, const std::string& s, int size = 12);

    std::string str() const;

private:
    int width_, height_;
    double x_lo_, x_hi_, y_lo_, y_hi_;
    std::string body_;
};

const std::string& class_color(int c);

/// World samples, classifier decision regions, one arrow per record and one
/// polyline per trajectory, all in latent coordinates. World must be 2D.
std::string scatter_svg(const MixtureWorld& world, const AffineCodec& codec, const Classifier& classifier,
                        const std::vector<CounterfactualRecord>& records, const std::vector<Trajectory>& trajectories,
                        std::uint64_t seed);

std::string angle_histogram_svg(const std::vector<std::size_t>& histogram, double threshold_deg,
                                double fraction_above);

std::string cout_curves_svg(const std::vector<CoutCurve>& curves);

}  // namespace cfdiff::cli
