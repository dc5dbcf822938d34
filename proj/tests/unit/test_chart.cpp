#include <doctest.h>

#include <regex>
#include <set>

#include "mortsmooth/chart.hpp"
#include "test_helpers.hpp"

using namespace mortsmooth;

namespace {

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

ObservedRates observed(int with_rate) {
    ObservedRates o;
    for (int x = 0; x < 100; ++x) o.push_back(x < with_rate ? RateCell::rate(0.001 * (x + 1)) : RateCell::zero_deaths());
    return o;
}

FitResult curve(const std::string& model, const std::string& area, double shift) {
    FitResult f;
    f.area_id = area;
    f.model = model;
    f.log_rate_hat = Eigen::VectorXd::LinSpaced(100, -8.0 + shift, -1.0 + shift);
    return f;
}

StandardSchedule standard() {
    StandardSchedule s;
    s.log_rates = Eigen::VectorXd::LinSpaced(100, -8.5, -1.5);
    return s;
}

}  // namespace

TEST_CASE("observed points and standard only") {
    const auto s = standard();
    const auto svg = render_chart(observed(60), {}, &s, "toy");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(count(svg, "<circle") == 60 + 1);  // plus the legend marker
    CHECK(svg.find("standard") != std::string::npos);
    CHECK(svg.find("toy") != std::string::npos);
    CHECK(svg.find("href") == std::string::npos);
}

TEST_CASE("all zero deaths: no circles, a tick at every age") {
    const auto svg = render_chart(observed(0), {}, nullptr);
    CHECK(count(svg, "class=\"obs\"") == 0);
    CHECK(count(svg, "class=\"zero-tick\"") == 100);
}

TEST_CASE("two models get distinct styles and legend entries") {
    const auto svg = render_chart(observed(80), {curve("topals", "a", 0.0), curve("dyn-poisson", "a", 0.2)}, nullptr);
    CHECK(count(svg, "<polyline") == 2);
    CHECK(svg.find("#9467bd") != std::string::npos);
    CHECK(svg.find("#d62728") != std::string::npos);
    CHECK(svg.find("topals (a)") != std::string::npos);
    CHECK(svg.find("dyn-poisson (a)") != std::string::npos);
}

TEST_CASE("repeated model is dashed differently") {
    const auto svg = render_chart(observed(80), {curve("topals", "a", 0.0), curve("topals", "b", 0.2)}, nullptr);
    std::regex line("<polyline[^>]*>");
    std::set<std::string> styles;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), line); it != std::sregex_iterator(); ++it) {
        const std::string tag = it->str();
        const auto d = tag.find("stroke-dasharray");
        styles.insert(d == std::string::npos ? "solid" : tag.substr(d, tag.find('"', d + 18) - d));
    }
    CHECK(styles.size() == 2);
    CHECK(svg.find("topals (b)") != std::string::npos);
}

TEST_CASE("emit writes the file") {
    testing::TempDir dir;
    emit_chart(observed(10), {}, nullptr, dir / "sub" / "c.svg");
    CHECK(testing::slurp(dir / "sub" / "c.svg") == render_chart(observed(10), {}, nullptr));
}
