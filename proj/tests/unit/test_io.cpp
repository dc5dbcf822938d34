#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mortsmooth/errors.hpp"
#include "mortsmooth/io.hpp"
#include "test_helpers.hpp"

using namespace mortsmooth;
using testing::slurp;
using testing::spit;
using testing::TempDir;

namespace {

std::string standard_csv(int skip_age = -1, bool male = true) {
    std::ostringstream s;
    s << "age,sex,log_rate\n";
    for (const char* sex : {"female", "male"}) {
        if (!male && std::string(sex) == "male") continue;
        for (int x = 0; x < 100; ++x) {
            if (x == skip_age) continue;
            s << x << ',' << sex << ',' << (std::string(sex) == "female" ? -6.0 : -5.0) + 0.04 * x << '\n';
        }
    }
    return s.str();
}

std::string dataset_csv(int areas, int ages = 100) {
    std::ostringstream s;
    s << "area_id,sex,age,deaths,exposure\n";
    for (int a = 0; a < areas; ++a)
        for (const char* sex : {"female", "male"})
            for (int x = 0; x < ages; ++x) s << "A" << a << ',' << sex << ',' << x << ',' << (x % 3) << ",1" << x << ".25\n";
    return s.str();
}

// Replaces the first line that starts with `prefix` by `replacement`.
std::string replace_row(const std::string& text, const std::string& prefix, const std::string& replacement) {
    const auto pos = text.find("\n" + prefix);
    REQUIRE(pos != std::string::npos);
    const auto end = text.find('\n', pos + 1);
    return text.substr(0, pos + 1) + replacement + text.substr(end);
}

template <class Fn>
std::size_t schema_line(Fn fn) {
    try {
        fn();
    } catch (const SchemaError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST_CASE("standard file with two sexes") {
    TempDir dir;
    spit(dir / "s.csv", standard_csv());
    const auto table = read_standard(dir / "s.csv");
    CHECK(table.has(Sex::female));
    CHECK(table.has(Sex::male));
    CHECK(table.has(Sex::both));
    CHECK(table.schedules().count(Sex::both) == 0);
    const auto f = table.select(Sex::female);
    const auto m = table.select(Sex::male);
    CHECK(f.size() == 100);
    CHECK(m.size() == 100);
    CHECK(f.log_rates(10) == doctest::Approx(-5.6));
    const auto b = table.select(Sex::both);
    CHECK(b.log_rates.isApprox(0.5 * (f.log_rates + m.log_rates)));
    CHECK(b.sex == Sex::both);
}

TEST_CASE("standard file errors name the line") {
    TempDir dir;
    SUBCASE("missing age") {
        spit(dir / "s.csv", standard_csv(37));
        CHECK_THROWS_WITH_AS(read_standard(dir / "s.csv"), doctest::Contains("age 37"), SchemaError);
        CHECK(schema_line([&] { read_standard(dir / "s.csv"); }) > 0);
    }
    SUBCASE("duplicate row") {
        spit(dir / "s.csv", standard_csv() + "5,male,-3.0\n");
        CHECK(schema_line([&] { read_standard(dir / "s.csv"); }) == 202);
    }
    SUBCASE("non-finite value") {
        spit(dir / "s.csv", replace_row(standard_csv(), "4,female", "4,female,inf"));
        CHECK(schema_line([&] { read_standard(dir / "s.csv"); }) == 6);
    }
    SUBCASE("wrong header") {
        spit(dir / "s.csv", "age,sex,rate\n0,female,-5\n");
        CHECK(schema_line([&] { read_standard(dir / "s.csv"); }) == 1);
    }
    SUBCASE("missing sex schedule") {
        spit(dir / "s.csv", standard_csv(-1, false));
        CHECK_THROWS_AS(read_standard(dir / "s.csv", Sex::male), InvalidArgument);
        CHECK_THROWS_AS(read_standard(dir / "s.csv", Sex::both), InvalidArgument);
    }
    CHECK_THROWS_AS(read_standard(dir / "absent.csv"), Error);
}

TEST_CASE("standard round trip") {
    TempDir dir;
    spit(dir / "s.csv", standard_csv());
    const auto a = read_standard(dir / "s.csv");
    write_standard(a, dir / "t.csv");
    const auto b = read_standard(dir / "t.csv");
    CHECK(a.select(Sex::female).log_rates == b.select(Sex::female).log_rates);
    CHECK(a.select(Sex::male).log_rates == b.select(Sex::male).log_rates);
}

TEST_CASE("dataset reading and filtering") {
    TempDir dir;
    spit(dir / "d.csv", dataset_csv(2));
    const auto all = read_dataset(dir / "d.csv");
    CHECK(all.size() == 4);
    CHECK(all[0].id == "A0");
    CHECK(all[0].sex == Sex::female);
    CHECK(all[1].sex == Sex::male);
    CHECK(all[0].exposures[7] == 17.25);
    CHECK(all[0].deaths[7] == 1);

    const auto female = read_dataset(dir / "d.csv", Sex::female);
    CHECK(female.size() == 2);
    for (const auto& r : female.populations()) CHECK(r.sex == Sex::female);
}

TEST_CASE("dataset rows out of order are accepted") {
    TempDir dir;
    std::ostringstream s;
    s << "area_id,sex,age,deaths,exposure\n";
    for (int x = 2; x >= 0; --x) s << "Z,both," << x << ",1,10\n";
    spit(dir / "d.csv", s.str());
    const auto d = read_dataset(dir / "d.csv", std::nullopt, AgeGrid(3));
    CHECK(d.size() == 1);
    CHECK(d[0].deaths == std::vector<std::int64_t>{1, 1, 1});
}

TEST_CASE("dataset validation errors carry the row") {
    TempDir dir;
    const std::string good = dataset_csv(1);
    SUBCASE("deaths with zero exposure") {
        spit(dir / "d.csv", replace_row(good, "A0,female,3,", "A0,female,3,3,0"));
        CHECK_THROWS_AS(read_dataset(dir / "d.csv"), ValidationError);
        CHECK(schema_line([&] { read_dataset(dir / "d.csv"); }) == 5);
    }
    SUBCASE("negative deaths") {
        spit(dir / "d.csv", replace_row(good, "A0,female,3,", "A0,female,3,-1,5"));
        CHECK_THROWS_AS(read_dataset(dir / "d.csv"), ValidationError);
    }
    SUBCASE("negative exposure") {
        spit(dir / "d.csv", replace_row(good, "A0,female,3,", "A0,female,3,0,-5"));
        CHECK_THROWS_AS(read_dataset(dir / "d.csv"), ValidationError);
    }
    SUBCASE("non-integer deaths") {
        spit(dir / "d.csv", replace_row(good, "A0,male,9,", "A0,male,9,2.5,5"));
        CHECK_THROWS_AS(read_dataset(dir / "d.csv"), ValidationError);
        CHECK(schema_line([&] { read_dataset(dir / "d.csv"); }) == 111);
    }
    SUBCASE("missing age row") {
        const auto pos = good.find("\nA0,male,50,");
        const auto end = good.find('\n', pos + 1);
        spit(dir / "d.csv", good.substr(0, pos) + good.substr(end));
        CHECK_THROWS_WITH_AS(read_dataset(dir / "d.csv"), doctest::Contains("age 50"), SchemaError);
    }
    SUBCASE("duplicate row") {
        spit(dir / "d.csv", good + "A0,female,0,0,1\n");
        CHECK(schema_line([&] { read_dataset(dir / "d.csv"); }) == 202);
    }
    SUBCASE("field count") {
        spit(dir / "d.csv", replace_row(good, "A0,female,3,", "A0,female,3,1"));
        CHECK(schema_line([&] { read_dataset(dir / "d.csv"); }) == 5);
    }
    SUBCASE("unknown sex") {
        spit(dir / "d.csv", replace_row(good, "A0,female,3,", "A0,F,3,1,2"));
        CHECK(schema_line([&] { read_dataset(dir / "d.csv"); }) == 5);
    }
    SUBCASE("age beyond the grid") {
        spit(dir / "d.csv", good + "A0,female,100,0,1\n");
        CHECK_THROWS_AS(read_dataset(dir / "d.csv"), SchemaError);
    }
}

TEST_CASE("dataset round trip") {
    TempDir dir;
    PopulationRecord r;
    r.id = "3550308";
    r.sex = Sex::male;
    for (int x = 0; x < 100; ++x) {
        r.deaths.push_back(x % 4);
        r.exposures.push_back(1000.0 / 3.0 + x * 0.1);
    }
    r.exposures[99] = 0.0;
    r.deaths[99] = 0;
    const MortalityDataset d(AgeGrid(), {r});
    write_dataset(d, dir / "d.csv");
    const auto back = read_dataset(dir / "d.csv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].id == r.id);
    CHECK(back[0].sex == r.sex);
    CHECK(back[0].deaths == r.deaths);
    CHECK(back[0].exposures == r.exposures);
}

TEST_CASE("fit files") {
    TempDir dir;
    std::vector<FitResult> fits;
    for (const char* area : {"a1", "a2", "a3"}) {
        FitResult f;
        f.area_id = area;
        f.sex = Sex::female;
        f.model = "topals";
        f.log_rate_hat = Eigen::VectorXd::LinSpaced(100, -9.0, -1.0);
        fits.push_back(f);
    }
    write_fit(fits, dir / "f.csv");
    const std::string text = slurp(dir / "f.csv");
    CHECK(text.rfind("area_id,sex,age,log_rate_hat,lower,upper,model\n", 0) == 0);
    CHECK(text.find("a1,female,0,-9.000000,,,topals\n") != std::string::npos);
    CHECK(text.find("a1,female,99,") < text.find("a2,female,0,"));
    CHECK(text.find("a2,female,99,") < text.find("a3,female,0,"));

    write_fit(fits, dir / "g.csv");
    CHECK(slurp(dir / "g.csv") == text);

    fits[1].lower = fits[1].log_rate_hat.array() - 0.1;
    fits[1].upper = fits[1].log_rate_hat.array() + 0.1;
    fits[1].model = "dyn-poisson";
    write_fit(fits, dir / "h.csv");
    const auto back = read_fit(dir / "h.csv");
    REQUIRE(back.size() == 3);
    CHECK(back[0].area_id == "a1");
    CHECK_FALSE(back[0].has_interval());
    CHECK(back[1].has_interval());
    CHECK(back[1].model == "dyn-poisson");
    CHECK((*back[1].upper - *fits[1].upper).lpNorm<Eigen::Infinity>() < 1e-6);
    write_fit(back, dir / "i.csv");
    CHECK(slurp(dir / "i.csv") == slurp(dir / "h.csv"));
}

TEST_CASE("reference files") {
    TempDir dir;
    ReferenceSchedule r;
    r.age_structure = Eigen::VectorXd::Constant(4, 0.25);
    r.true_rates = Eigen::VectorXd::LinSpaced(4, 0.001, 0.1);
    write_reference(r, dir / "r.csv");
    const auto b = read_reference(dir / "r.csv");
    CHECK(b.age_structure == r.age_structure);
    CHECK(b.true_rates == r.true_rates);

    spit(dir / "bad.csv", "age,population_share,rate\n0,0.5,0.01\n1,0.4,0.02\n");
    CHECK_THROWS_AS(read_reference(dir / "bad.csv"), SchemaError);
    spit(dir / "bad.csv", "age,population_share,rate\n0,0.5,0.01\n1,0.5,0\n");
    CHECK_THROWS_AS(read_reference(dir / "bad.csv"), SchemaError);
    spit(dir / "gap.csv", "age,population_share,rate\n0,0.5,0.01\n2,0.5,0.02\n");
    CHECK_THROWS_AS(read_reference(dir / "gap.csv"), SchemaError);

    const auto bundled = read_reference(testing::data_dir() / "reference_sp_like.csv");
    CHECK(bundled.size() == 100);
    CHECK_NOTHROW(bundled.validate());
}

TEST_CASE("metrics table") {
    TempDir dir;
    BenchmarkRow ok;
    ok.size = 1000;
    ok.seed = 3;
    ok.model = ModelKind::topals;
    ok.metrics = MetricsRow{0.01, 0.2, 0.03, 100};
    ok.zero_death_ages = 61;
    ok.seconds = 0.5;
    BenchmarkRow bad = ok;
    bad.model = ModelKind::gaussian_dlm;
    bad.metrics.reset();
    bad.status = "only 3 observed ages, need 5";
    write_metrics({ok, bad}, dir / "m.csv");
    const auto text = slurp(dir / "m.csv");
    CHECK(text.rfind("size,seed,model,status,rbias,rmse,mape,n_ages,zero_death_ages\n", 0) == 0);
    CHECK(text.find("1000,3,topals,ok,") != std::string::npos);
    CHECK(text.find("1000,3,gaussian-dlm,error: only 3 observed ages; need 5,,,,,61\n") != std::string::npos);
    CHECK(text.find("seconds") == std::string::npos);
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) CHECK(std::count(line.begin(), line.end(), ',') == 8);

    write_metrics({ok}, dir / "t.csv", true);
    CHECK(slurp(dir / "t.csv").find(",seconds\n") != std::string::npos);
}

TEST_CASE("seed files") {
    TempDir dir;
    spit(dir / "s.txt", "# seeds\n1\n\n 42 \n18446744073709551615\n");
    CHECK(read_seeds(dir / "s.txt") == std::vector<std::uint64_t>{1, 42, 18446744073709551615ULL});
    spit(dir / "s.txt", "1\n-2\n");
    CHECK(schema_line([&] { read_seeds(dir / "s.txt"); }) == 2);
    spit(dir / "s.txt", "# none\n");
    CHECK_THROWS_AS(read_seeds(dir / "s.txt"), SchemaError);
}

TEST_CASE("bundled data files validate") {
    const auto table = read_standard(testing::data_dir() / "standard_hmd_like.csv");
    CHECK(table.has(Sex::female));
    CHECK(table.has(Sex::male));
    const auto toy = read_dataset(testing::data_dir() / "toy" / "dataset.csv");
    CHECK(toy.size() == 4);
}
