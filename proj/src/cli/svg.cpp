#include "cfdiff/cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cfdiff::cli {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

SvgCanvas::SvgCanvas(int width, int height, double x_lo, double x_hi, double y_lo, double y_hi)
    : width_(width), height_(height), x_lo_(x_lo), x_hi_(x_hi), y_lo_(y_lo), y_hi_(y_hi) {
    detail::require(x_hi > x_lo && y_hi > y_lo, "svg: empty viewport");
}

double SvgCanvas::px(double x) const { return (x - x_lo_) / (x_hi_ - x_lo_) * width_; }
double SvgCanvas::py(double y) const { return (y_hi_ - y) / (y_hi_ - y_lo_) * height_; }

void SvgCanvas::rect(double x0, double y0, double x1, double y1, const std::string& fill, double opacity) {
    const double l = px(std::min(x0, x1));
    const double t = py(std::max(y0, y1));
    body_ += "<rect x=\"" + num(l) + "\" y=\"" + num(t) + "\" width=\"" + num(std::abs(px(x1) - px(x0))) +
             "\" height=\"" + num(std::abs(py(y1) - py(y0))) + "\" fill=\"" + fill + "\" fill-opacity=\"" +
             num(opacity) + "\"/>\n";
}

void SvgCanvas::circle(double x, double y, double r_px, const std::string& fill, const std::string& css_class) {
    body_ += "<circle";
    if (!css_class.empty()) body_ += " class=\"" + css_class + "\"";
    body_ += " cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"" + num(r_px) + "\" fill=\"" + fill + "\"/>\n";
}

void SvgCanvas::arrow(double x0, double y0, double x1, double y1, const std::string& stroke) {
    body_ += "<line class=\"arrow\" x1=\"" + num(px(x0)) + "\" y1=\"" + num(py(y0)) + "\" x2=\"" + num(px(x1)) +
             "\" y2=\"" + num(py(y1)) + "\" stroke=\"" + stroke + "\" stroke-width=\"1.2\" marker-end=\"url(#head)\"/>\n";
}

void SvgCanvas::polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                         const std::string& css_class) {
    body_ += "<polyline class=\"" + css_class + "\" fill=\"none\" stroke=\"" + stroke +
             "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) body_ += ' ';
        body_ += num(px(pts[i].first)) + "," + num(py(pts[i].second));
    }
    body_ += "\"/>\n";
}

void SvgCanvas::pixel_rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
             "\" fill=\"" + fill + "\"/>\n";
}

void SvgCanvas::pixel_line(double x0, double y0, double x1, double y1, const std::string& stroke) {
    body_ += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y1) +
             "\" stroke=\"" + stroke + "\"/>\n";
}

void SvgCanvas::text(double x_px, double y_px, const std::string& s, int size) {
    body_ += "<text x=\"" + num(x_px) + "\" y=\"" + num(y_px) + "\" font-size=\"" + std::to_string(size) +
             "\" font-family=\"sans-serif\">" + escape(s) + "</text>\n";
}

std::string SvgCanvas::str() const {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(width_) + "\" height=\"" + std::to_string(height_) + "\" viewBox=\"0 0 " +
           std::to_string(width_) + " " + std::to_string(height_) +
           "\">\n"
           "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" "
           "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"black\"/></marker></defs>\n"
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
           body_ + "</svg>\n";
}

const std::string& class_color(int c) {
    static const std::vector<std::string> palette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    return palette[static_cast<std::size_t>(c) % palette.size()];
}

std::string scatter_svg(const MixtureWorld& world, const AffineCodec& codec, const Classifier& classifier,
                        const std::vector<CounterfactualRecord>& records, const std::vector<Trajectory>& trajectories,
                        std::uint64_t seed) {
    detail::require(world.latent_dim() == 2, "plot: scatter plots need a 2D world");
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    auto grow = [&](const Vec& z) {
        x_lo = std::min(x_lo, z[0]);
        x_hi = std::max(x_hi, z[0]);
        y_lo = std::min(y_lo, z[1]);
        y_hi = std::max(y_hi, z[1]);
    };
    for (const auto& c : world.components()) {
        const double r = 3.0 * std::sqrt(c.variance);
        grow(c.mean + Vec::Constant(2, r));
        grow(c.mean - Vec::Constant(2, r));
    }
    for (const auto& r : records) {
        grow(codec.encode(r.x_factual));
        grow(codec.encode(r.x_counterfactual));
    }

    SvgCanvas svg(600, 600, x_lo, x_hi, y_lo, y_hi);
    constexpr int grid = 60;
    const double dx = (x_hi - x_lo) / grid;
    const double dy = (y_hi - y_lo) / grid;
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            Vec z(2);
            z << x_lo + (i + 0.5) * dx, y_lo + (j + 0.5) * dy;
            const int c = predict(classifier, codec.decode(z));
            svg.rect(x_lo + i * dx, y_lo + j * dy, x_lo + (i + 1) * dx, y_lo + (j + 1) * dy, class_color(c), 0.15);
        }
    }
    const LabeledSamples pts = sample(world, std::nullopt, 400, seed);
    for (std::size_t i = 0; i < pts.points.size(); ++i) {
        svg.circle(pts.points[i][0], pts.points[i][1], 2.0, class_color(pts.labels[i]), "sample");
    }
    for (const auto& t : trajectories) {
        std::vector<std::pair<double, double>> line;
        for (const auto& s : t.steps) {
            const Vec z = codec.encode(s.x0_hat);
            line.emplace_back(z[0], z[1]);
        }
        svg.polyline(line, "#555555", "trajectory");
    }
    for (const auto& r : records) {
        const Vec a = codec.encode(r.x_factual);
        const Vec b = codec.encode(r.x_counterfactual);
        svg.arrow(a[0], a[1], b[0], b[1], class_color(r.y_target));
    }
    svg.text(10, 20, "factual -> counterfactual (arrow colour = target class)");
    return svg.str();
}

std::string angle_histogram_svg(const std::vector<std::size_t>& histogram, double threshold_deg,
                                double fraction_above) {
    SvgCanvas svg(720, 360, 0.0, 180.0, 0.0, 1.0);
    const std::size_t peak = std::max<std::size_t>(1, *std::max_element(histogram.begin(), histogram.end()));
    const double left = 40, bottom = 320, plot_w = 660, plot_h = 280;
    const double bar_w = plot_w / double(histogram.size());
    for (std::size_t b = 0; b < histogram.size(); ++b) {
        const double h = plot_h * double(histogram[b]) / double(peak);
        svg.pixel_rect(left + b * bar_w, bottom - h, bar_w - 1.0, h, "#1f77b4");
    }
    svg.pixel_line(left, bottom, left + plot_w, bottom, "black");
    const double tx = left + plot_w * threshold_deg / 180.0;
    svg.pixel_line(tx, bottom, tx, bottom - plot_h, "#d62728");
    for (int deg = 0; deg <= 180; deg += 30) {
        svg.text(left + plot_w * deg / 180.0 - 8, bottom + 16, std::to_string(deg));
    }
    char caption[96];
    std::snprintf(caption, sizeof caption, "angle (deg); fraction above %.0f: %.4f", threshold_deg, fraction_above);
    svg.text(left, 24, caption);
    return svg.str();
}

std::string cout_curves_svg(const std::vector<CoutCurve>& curves) {
    SvgCanvas svg(600, 400, 0.0, 1.0, 0.0, 1.0);
    const double left = 40, bottom = 360, plot_w = 540, plot_h = 320;
    svg.pixel_line(left, bottom, left + plot_w, bottom, "black");
    svg.pixel_line(left, bottom, left, bottom - plot_h, "black");
    std::string lines;
    for (const auto& c : curves) {
        const std::size_t T = c.probs_target.size() - 1;
        auto draw = [&](const std::vector<double>& p, const std::string& colour) {
            std::vector<std::pair<double, double>> pts;
            for (std::size_t t = 0; t <= T; ++t) {
                // Data viewport is the unit square; map into the plot frame.
                const double x = (left + plot_w * (T ? double(t) / double(T) : 0.0)) / 600.0;
                const double y = 1.0 - (bottom - plot_h * p[t]) / 400.0;
                pts.emplace_back(x, y);
            }
            svg.polyline(pts, colour, "cout");
        };
        draw(c.probs_target, "#d62728");
        draw(c.probs_factual, "#1f77b4");
    }
    svg.text(left, 24, "insertion curves: target class (red), factual class (blue)");
    return svg.str();
}

}  // namespace cfdiff::cli
