#include "segadapt/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "segadapt/common.hpp"

namespace segadapt {

namespace {

const std::vector<cv::Scalar>& palette() {
    static const std::vector<cv::Scalar> colors = {
        {180, 60, 30}, {30, 120, 200}, {40, 160, 60}, {30, 70, 220}, {150, 40, 150}};
    return colors;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

void line_plot(const std::string& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series, int width,
               int height) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ShapeMismatch("series x/y lengths disagree");
        for (const auto v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
        for (const auto v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    }
    if (!std::isfinite(xmin) || !std::isfinite(ymin)) {
        throw InvalidConfig("cannot plot empty series");
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const int ml = 70, mr = 20, mt = 40, mb = 50;  // margins
    cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
    const auto to_px = [&](double x, double y) {
        const int px = ml + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) *
                                                         (width - ml - mr)));
        const int py = height - mb -
                       static_cast<int>(std::lround((y - ymin) / (ymax - ymin) *
                                                    (height - mt - mb)));
        return cv::Point(px, py);
    };

    const cv::Scalar axis(60, 60, 60);
    cv::line(canvas, {ml, mt}, {ml, height - mb}, axis, 1);
    cv::line(canvas, {ml, height - mb}, {width - mr, height - mb}, axis, 1);

    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / ticks;
        const double fy = ymin + (ymax - ymin) * i / ticks;
        const auto px = to_px(fx, ymin);
        const auto py = to_px(xmin, fy);
        cv::line(canvas, {px.x, height - mb}, {px.x, height - mb + 4}, axis, 1);
        cv::putText(canvas, tick_label(fx), {px.x - 14, height - mb + 18},
                    cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1, cv::LINE_AA);
        cv::line(canvas, {ml - 4, py.y}, {ml, py.y}, axis, 1);
        cv::putText(canvas, tick_label(fy), {6, py.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35, axis,
                    1, cv::LINE_AA);
    }
    cv::putText(canvas, title, {ml, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.55, axis, 1, cv::LINE_AA);
    cv::putText(canvas, xlabel, {width / 2 - 30, height - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.42,
                axis, 1, cv::LINE_AA);
    cv::putText(canvas, ylabel, {8, mt - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.42, axis, 1,
                cv::LINE_AA);

    for (size_t si = 0; si < series.size(); ++si) {
        const auto color = palette()[si % palette().size()];
        const auto& s = series[si];
        for (size_t i = 1; i < s.x.size(); ++i) {
            cv::line(canvas, to_px(s.x[i - 1], s.y[i - 1]), to_px(s.x[i], s.y[i]), color, 2,
                     cv::LINE_AA);
        }
        for (size_t i = 0; i < s.x.size(); ++i) {
            cv::circle(canvas, to_px(s.x[i], s.y[i]), 3, color, cv::FILLED, cv::LINE_AA);
        }
        if (!s.name.empty()) {
            const int ly = mt + 18 * static_cast<int>(si);
            cv::line(canvas, {width - mr - 120, ly}, {width - mr - 96, ly}, color, 2);
            cv::putText(canvas, s.name, {width - mr - 90, ly + 4}, cv::FONT_HERSHEY_SIMPLEX,
                        0.38, axis, 1, cv::LINE_AA);
        }
    }

    if (!cv::imwrite(path, canvas)) throw IoError("cannot write plot: " + path);
}

}  // namespace segadapt
