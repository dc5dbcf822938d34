#include "mortsmooth/chart.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "mortsmooth/errors.hpp"

namespace mortsmooth {

namespace {

constexpr double kWidth = 760.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 190.0;  // legend column
constexpr double kTop = 40.0;
constexpr double kBottom = 52.0;

struct Style {
    const char* color;
    const char* dash;
};

Style model_style(const std::string& model) {
    static const std::map<std::string, Style> known{
        {"dyn-poisson", {"#d62728", ""}},
        {"gaussian-dlm", {"#1f77b4", ""}},
        {"topals", {"#9467bd", ""}},
        {"truth", {"#000000", ""}},
    };
    if (auto it = known.find(model); it != known.end()) return it->second;
    return {"#7f7f7f", ""};
}

const char* kDashes[] = {"", "6,3", "2,2", "8,3,2,3"};

std::string escape(std::string_view text) {
    std::string out;
    for (char c : text) {
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

std::string render_chart(const ObservedRates& observed, const std::vector<FitResult>& fits,
                         const StandardSchedule* standard, const std::string& title) {
    const auto ages = static_cast<Eigen::Index>(observed.size());
    if (ages < 2) throw InvalidArgument("chart needs at least two ages");
    for (const auto& f : fits) {
        if (f.log_rate_hat.size() != ages) throw InvalidArgument("chart series must share the age grid");
    }
    if (standard && standard->log_rates.size() != ages) throw InvalidArgument("chart series must share the age grid");

    const auto logs = log_rates(observed);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    auto extend = [&](double v) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    };
    for (const auto& v : logs) if (v) extend(*v);
    for (const auto& f : fits) for (Eigen::Index x = 0; x < ages; ++x) extend(f.log_rate_hat(x));
    if (standard) for (Eigen::Index x = 0; x < ages; ++x) extend(standard->log_rates(x));
    if (!std::isfinite(lo)) {
        lo = -10.0;
        hi = 0.0;
    }
    lo = std::floor(lo - 0.25);
    hi = std::ceil(hi + 0.25);
    if (hi - lo < 1.0) hi = lo + 1.0;

    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const double x_max = static_cast<double>(ages - 1);
    auto px = [&](double age) { return kLeft + plot_w * age / x_max; };
    auto py = [&](double v) { return kTop + plot_h * (hi - v) / (hi - lo); };
    const double axis_y = kTop + plot_h;

    std::string svg;
    svg += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
                       "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"12\">\n",
                       kWidth, kHeight, kWidth, kHeight);
    svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", kWidth, kHeight);
    if (!title.empty()) {
        svg += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                           kLeft + plot_w / 2.0, escape(title));
    }

    // Axes, ticks and labels.
    svg += fmt::format("<g id=\"axes\" stroke=\"#333\" fill=\"none\">\n"
                       "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\"/>\n",
                       kLeft, kTop, plot_w, plot_h);
    for (int age = 0; age <= static_cast<int>(x_max); age += 10) {
        svg += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\"/>\n", px(age), axis_y,
                           axis_y + 5.0);
    }
    for (double v = lo; v <= hi + 1e-9; v += 1.0) {
        svg += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\"/>\n", kLeft - 5.0,
                           py(v), kLeft);
    }
    svg += "</g>\n<g id=\"labels\" fill=\"#333\">\n";
    for (int age = 0; age <= static_cast<int>(x_max); age += 10) {
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", px(age),
                           axis_y + 19.0, age);
    }
    for (double v = lo; v <= hi + 1e-9; v += 1.0) {
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.0f}</text>\n", kLeft - 8.0,
                           py(v) + 4.0, v);
    }
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">Age</text>\n", kLeft + plot_w / 2.0,
                       kHeight - 10.0);
    svg += fmt::format("<text x=\"16\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.2f})\">"
                       "log mortality rate</text>\n</g>\n",
                       kTop + plot_h / 2.0);

    // Ages with no observable rate.
    svg += "<g id=\"no-deaths\" stroke=\"#000\" stroke-width=\"1\">\n";
    for (Eigen::Index x = 0; x < ages; ++x) {
        if (observed[static_cast<std::size_t>(x)].has_rate()) continue;
        svg += fmt::format("<line class=\"zero-tick\" x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\"/>\n",
                           px(static_cast<double>(x)), axis_y, axis_y - 8.0);
    }
    svg += "</g>\n";

    auto polyline = [&](const Eigen::VectorXd& v, const Style& style, const char* dash, const std::string& id) {
        std::string pts;
        for (Eigen::Index x = 0; x < ages; ++x) {
            if (!pts.empty()) pts += ' ';
            pts += fmt::format("{:.2f},{:.2f}", px(static_cast<double>(x)), py(std::clamp(v(x), lo, hi)));
        }
        std::string dash_attr = *dash ? fmt::format(" stroke-dasharray=\"{}\"", dash) : std::string();
        return fmt::format("<polyline id=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{} points=\"{}\"/>\n",
                           escape(id), style.color, dash_attr, pts);
    };

    struct LegendEntry {
        std::string label;
        std::string color;
        std::string dash;
        bool circle;
    };
    std::vector<LegendEntry> legend;
    legend.push_back({"observed", "#000000", "", true});

    if (standard) {
        const Style s{"#2ca02c", ""};
        svg += polyline(standard->log_rates, s, "", "standard");
        legend.push_back({"standard", s.color, "", false});
    }
    std::map<std::string, int> seen;
    for (std::size_t k = 0; k < fits.size(); ++k) {
        const auto& f = fits[k];
        const Style s = model_style(f.model);
        const int repeat = seen[f.model]++;
        const char* dash = kDashes[repeat % 4];
        svg += polyline(f.log_rate_hat, s, dash, fmt::format("fit-{}", k));
        legend.push_back({fmt::format("{} ({})", f.model, f.area_id), s.color, dash, false});
    }

    svg += "<g id=\"observed\" fill=\"none\" stroke=\"#000\" stroke-width=\"1\">\n";
    for (Eigen::Index x = 0; x < ages; ++x) {
        const auto& v = logs[static_cast<std::size_t>(x)];
        if (!v) continue;
        svg += fmt::format("<circle class=\"obs\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\"/>\n", px(static_cast<double>(x)),
                           py(std::clamp(*v, lo, hi)));
    }
    svg += "</g>\n";

    svg += "<g id=\"legend\">\n";
    const double lx = kWidth - kRight + 16.0;
    for (std::size_t k = 0; k < legend.size(); ++k) {
        const double ly = kTop + 12.0 + 20.0 * static_cast<double>(k);
        const auto& e = legend[k];
        if (e.circle) {
            svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"none\" stroke=\"{}\"/>\n", lx + 12.0,
                               ly, e.color);
        } else {
            std::string dash_attr = e.dash.empty() ? std::string() : fmt::format(" stroke-dasharray=\"{}\"", e.dash);
            svg += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"{3}\" "
                               "stroke-width=\"2\"{4}/>\n",
                               lx, ly, lx + 24.0, e.color, dash_attr);
        }
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", lx + 30.0, ly + 4.0, escape(e.label));
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

void emit_chart(const ObservedRates& observed, const std::vector<FitResult>& fits, const StandardSchedule* standard,
                const std::filesystem::path& path, const std::string& title) {
    const std::string svg = render_chart(observed, fits, standard, title);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << svg;
    if (!out) throw Error(fmt::format("error writing '{}'", path.string()));
}

}  // namespace mortsmooth
