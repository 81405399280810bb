#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "mortcast/lifetable.hpp"

using namespace mortcast;

namespace {

// Slice with constant one-year death probability q until the closing age.
LifeTableSlice constant_q_slice(int age_min, int n, double q) {
    LifeTableSlice t;
    t.age_min = age_min;
    t.q = VectorXd::Constant(n, q);
    t.q(n - 1) = 1.0;
    return t;
}

LifeTableSlice random_slice(int age_min, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.001, 0.4);
    LifeTableSlice t;
    t.age_min = age_min;
    t.q = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) t.q(i) = u(rng);
    t.q(n - 1) = 1.0;
    return t;
}

RateSurface gompertz_surface(int age_min, int age_max, int year_min, int year_max,
                             double c0 = -12.0, double c1 = 0.09) {
    RateSurface rs(age_min, age_max, year_min, year_max);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = age_min; age <= age_max; ++age)
            for (int year = year_min; year <= year_max; ++year)
                rs.set_rate(g, age, year, std::exp(c0 + c1 * age));
    return rs;
}

}  // namespace

TEST_CASE("central rates convert to death probabilities") {
    CHECK(rate_to_q(0.0) == 0.0);
    CHECK(rate_to_q(0.01) == doctest::Approx(1.0 - std::exp(-0.01)).epsilon(1e-15));
    CHECK(rate_to_q(0.1) < rate_to_q(0.2));
    CHECK(rate_to_q(60.0) == 1.0);  // saturates but never exceeds one
    CHECK_THROWS_AS(rate_to_q(-0.001), DataError);
    VectorXd m(2);
    m << 0.01, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(rates_to_q(m), DataError);
}

TEST_CASE("slice validation catches malformed tables") {
    LifeTableSlice t = constant_q_slice(60, 5, 0.1);
    CHECK_NOTHROW(t.validate());
    CHECK(t.omega() == 64);

    LifeTableSlice open = t;
    open.q(4) = 0.9;
    CHECK_THROWS_AS(open.validate(), DataError);

    LifeTableSlice bad = t;
    bad.q(2) = 1.5;
    CHECK_THROWS_AS(bad.validate(), DataError);

    LifeTableSlice empty;
    CHECK_THROWS_AS(empty.validate(), DataError);
}

TEST_CASE("certain death at the entry age leaves only the half year") {
    const LifeTableSlice t = constant_q_slice(90, 4, 1.0);
    CHECK(life_expectancy(t, 90) == 0.5);
    CHECK(annuity_value(t, 90, {0.05}) == 0.0);
    CHECK(life_expectancy(t, 93) == 0.5);  // the closing age itself
}

TEST_CASE("constant survival matches the geometric closed forms") {
    const double q = 0.2;
    const int n = 11;
    const LifeTableSlice t = constant_q_slice(70, n, q);
    const double p = 1.0 - q;

    const double e = life_expectancy(t, 70);
    const double geo_e = 0.5 + p * (1.0 - std::pow(p, n - 1)) / (1.0 - p);
    CHECK(std::abs(e - geo_e) <= 1e-10);

    const double r = 0.04;
    const double vp = p / (1.0 + r);
    const double a = annuity_value(t, 70, {r});
    const double geo_a = vp * (1.0 - std::pow(vp, n - 1)) / (1.0 - vp);
    CHECK(std::abs(a - geo_a) <= 1e-10);
}

TEST_CASE("zero interest recovers the expectancy identity exactly") {
    const LifeTableSlice t = random_slice(55, 30, 17);
    for (int x : {55, 60, 71, 83}) {
        // Bitwise: both sides accumulate the identical survival sum.
        CHECK(annuity_value(t, x, {0.0}) + 0.5 == life_expectancy(t, x));
    }
}

TEST_CASE("positive interest discounts the annuity below the expectancy") {
    const LifeTableSlice t = random_slice(55, 30, 18);
    const double e = life_expectancy(t, 55);
    const double a2 = annuity_value(t, 55, {0.02});
    const double a5 = annuity_value(t, 55, {0.05});
    CHECK(a5 < a2);
    CHECK(a2 < e - 0.5);
    CHECK_THROWS_AS(annuity_value(t, 55, {-1.0}), DataError);
    CHECK_THROWS_AS(life_expectancy(t, 54), DataError);
    CHECK_THROWS_AS(life_expectancy(t, 85), DataError);
}

TEST_CASE("period slices pass observed rates through and close at omega") {
    const RateSurface rs = gompertz_surface(60, 80, 2015, 2015);
    const LifeTableSlice t = period_slice(rs, Gender::Female, 60, 2015, 90);
    CHECK(t.age_min == 60);
    CHECK(t.omega() == 90);
    REQUIRE(t.q.size() == 31);
    for (int age = 60; age <= 80; ++age)
        CHECK(t.q(age - 60) == rate_to_q(rs.rate(Gender::Female, age, 2015)));
    CHECK(t.q(30) == 1.0);

    // Starting age above the surface floor shifts the slice, not the data.
    const LifeTableSlice upper = period_slice(rs, Gender::Female, 70, 2015, 90);
    CHECK(upper.age_min == 70);
    CHECK(upper.q(0) == t.q(10));
}

TEST_CASE("extrapolated ages continue an exactly log-linear surface") {
    const double c0 = -12.0, c1 = 0.09;
    const RateSurface rs = gompertz_surface(60, 80, 2015, 2015, c0, c1);
    const LifeTableSlice t = period_slice(rs, Gender::Male, 60, 2015, 95);
    for (int age = 81; age <= 94; ++age) {
        const double truth = rate_to_q(std::exp(c0 + c1 * age));
        CHECK(t.q(age - 60) == doctest::Approx(truth).epsilon(1e-8));
    }
}

TEST_CASE("slice construction errors name the offending cell") {
    RateSurface rs = gompertz_surface(60, 80, 2015, 2015);
    CHECK_THROWS_AS(period_slice(rs, Gender::Female, 60, 2015, 59), DataError);
    CHECK_THROWS_AS(period_slice(rs, Gender::Female, 59, 2015, 90), DataError);

    RateSurface holey(60, 70, 2015, 2015);
    for (int age = 60; age <= 70; ++age)
        if (age != 65) holey.set_rate(Gender::Female, age, 2015, 0.01);
    try {
        period_slice(holey, Gender::Female, 60, 2015, 80);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("65") != std::string::npos);
    }
}

TEST_CASE("cohort slices follow the diagonal") {
    const RateSurface rs = gompertz_surface(60, 100, 2015, 2019);
    const LifeTableSlice t = cohort_slice(rs, Gender::Male, 96, 2015, 100);
    CHECK(t.age_min == 96);
    REQUIRE(t.q.size() == 5);
    for (int k = 0; k < 4; ++k)
        CHECK(t.q(k) == rate_to_q(rs.rate(Gender::Male, 96 + k, 2015 + k)));
    CHECK(t.q(4) == 1.0);

    // Age 95 still fits: the diagonal ends at (99, 2019) and q at omega is
    // forced to one without a rate read.
    const LifeTableSlice fit = cohort_slice(rs, Gender::Male, 95, 2015, 100);
    CHECK(fit.q(5) == 1.0);

    // One year earlier the diagonal runs past the surface's last year.
    try {
        cohort_slice(rs, Gender::Male, 94, 2015, 100);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("99") != std::string::npos);
        CHECK(what.find("2020") != std::string::npos);
    }
}

TEST_CASE("provision aggregates exposure-weighted annuities") {
    const RateSurface rs = gompertz_surface(60, 100, 2016, 2056);
    const AnnuityConfig cfg{0.03};

    MortalityDataset expo(60, 100, 2016, 2016);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 100; ++age)
            expo.set_cell(g, age, 2016, 0.0, 10.0 * (101 - age));

    const ProvisionResult res = aggregate_provision(expo, rs, 2016, cfg);
    CHECK(res.total > 0.0);
    CHECK(res.total == res.by_gender[0] + res.by_gender[1]);

    // Linearity: doubling every exposure doubles the provision.
    MortalityDataset doubled(60, 100, 2016, 2016);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 100; ++age)
            doubled.set_cell(g, age, 2016, 0.0, 20.0 * (101 - age));
    const ProvisionResult res2 = aggregate_provision(doubled, rs, 2016, cfg);
    CHECK(std::abs(res2.total - 2.0 * res.total) <= 1e-10 * res.total);

    // Static basis: with rates constant over calendar time, the cohort
    // diagonal reads the same cells as a period table.
    double period_total = 0.0;
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 100; ++age) {
            const LifeTableSlice t = period_slice(rs, g, age, 2016, 100);
            period_total += expo.exposure(g, age, 2016) * annuity_value(t, age, cfg);
        }
    CHECK(std::abs(res.total - period_total) <= 1e-10 * res.total);

    CHECK_THROWS_AS(aggregate_provision(expo, rs, 2015, cfg), DataError);
}

TEST_CASE("provision skips empty cells and is zero at the closing age") {
    const RateSurface rs = gompertz_surface(60, 100, 2016, 2056);
    const AnnuityConfig cfg{0.03};

    MortalityDataset one(60, 100, 2016, 2016);
    one.set_cell(Gender::Female, 75, 2016, 0.0, 500.0);
    const ProvisionResult res = aggregate_provision(one, rs, 2016, cfg);
    const LifeTableSlice t = cohort_slice(rs, Gender::Female, 75, 2016, 100);
    CHECK(res.total == 500.0 * annuity_value(t, 75, cfg));
    CHECK(res.by_gender[gender_index(Gender::Male)] == 0.0);

    MortalityDataset top(60, 100, 2016, 2016);
    top.set_cell(Gender::Male, 100, 2016, 0.0, 40.0);
    CHECK(aggregate_provision(top, rs, 2016, cfg).total == 0.0);
}

TEST_CASE("zero-mortality projection translates the population") {
    RateSurface rs(60, 64, 2015, 2018);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 64; ++age)
            for (int year = 2015; year <= 2018; ++year) rs.set_rate(g, age, year, 0.0);

    MortalityDataset base(60, 64, 2015, 2015);
    const double start[5] = {100.0, 80.0, 60.0, 40.0, 20.0};
    for (Gender g : {Gender::Female, Gender::Male})
        for (int r = 0; r < 5; ++r) base.set_cell(g, 60 + r, 2015, 0.0, start[r]);

    const CashFlowProjection proj = project_exposure(base, rs, 2015, 3);
    CHECK(proj.horizon == 3);
    for (Gender g : {Gender::Female, Gender::Male}) {
        const MatrixXd& grid = proj.exposure[gender_index(g)];
        for (int k = 0; k <= 3; ++k)
            for (int r = 0; r < 5; ++r)
                CHECK(grid(r, k) == (r >= k ? start[r - k] : 0.0));
    }
    CHECK(proj.annual_total(0) == 2.0 * 300.0);
    CHECK(proj.annual_total(3) == 2.0 * (100.0 + 80.0));  // the rest aged out
}

TEST_CASE("certain death empties the projection after one step") {
    RateSurface rs(60, 62, 2015, 2016);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 62; ++age)
            for (int year = 2015; year <= 2016; ++year) rs.set_rate(g, age, year, 60.0);

    MortalityDataset base(60, 62, 2015, 2015);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 62; ++age) base.set_cell(g, age, 2015, 0.0, 128.0);

    const CashFlowProjection proj = project_exposure(base, rs, 2015, 2);
    CHECK(proj.annual_total(0) == 6.0 * 128.0);
    CHECK(proj.annual_total(1) == 0.0);
    CHECK(proj.annual_total(2) == 0.0);
}

TEST_CASE("projection follows the survival recurrence cell by cell") {
    RateSurface rs(60, 62, 2015, 2015);
    const double m[3] = {0.01, 0.02, 0.03};
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 62; ++age) rs.set_rate(g, age, 2015, m[age - 60]);

    MortalityDataset base(60, 62, 2015, 2015);
    base.set_cell(Gender::Female, 60, 2015, 0.0, 100.0);
    base.set_cell(Gender::Female, 61, 2015, 0.0, 50.0);
    base.set_cell(Gender::Female, 62, 2015, 0.0, 25.0);

    const CashFlowProjection proj = project_exposure(base, rs, 2015, 1);
    const MatrixXd& f = proj.exposure[gender_index(Gender::Female)];
    CHECK(f(0, 1) == 0.0);  // closed group: nobody enters
    CHECK(f(1, 1) == 100.0 * (1.0 - rate_to_q(0.01)));
    CHECK(f(2, 1) == 50.0 * (1.0 - rate_to_q(0.02)));
    // The top age leaves the tracked range regardless of its mortality.
    CHECK(proj.annual_total(1) == f(1, 1) + f(2, 1));
}

TEST_CASE("projected exposure is conserved up to deaths and exits") {
    RateSurface rs(60, 69, 2015, 2019);
    Rng rng(23);
    std::uniform_real_distribution<double> um(0.005, 0.2), ue(10.0, 500.0);
    MortalityDataset base(60, 69, 2015, 2015);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 69; ++age) {
            for (int year = 2015; year <= 2019; ++year) rs.set_rate(g, age, year, um(rng));
            base.set_cell(g, age, 2015, 0.0, ue(rng));
        }

    const CashFlowProjection proj = project_exposure(base, rs, 2015, 4);
    for (int k = 0; k < 4; ++k) {
        double deaths_and_exits = 0.0;
        for (Gender g : {Gender::Female, Gender::Male}) {
            const MatrixXd& grid = proj.exposure[gender_index(g)];
            for (int r = 0; r + 1 < 10; ++r) {
                CHECK(grid(r + 1, k + 1) <= grid(r, k));
                deaths_and_exits += grid(r, k) - grid(r + 1, k + 1);
            }
            deaths_and_exits += grid(9, k);  // top-age exit
        }
        CHECK(proj.annual_total(k + 1) + deaths_and_exits ==
              doctest::Approx(proj.annual_total(k)).epsilon(1e-12));
    }

    // Negative exposure is rejected at insertion, so a projection can never
    // see one through the public API.
    MortalityDataset negative(60, 69, 2015, 2015);
    CHECK_THROWS_AS(negative.set_cell(Gender::Male, 60, 2015, 0.0, -1.0), DataError);
    CHECK_THROWS_AS(project_exposure(base, rs, 2014, 1), DataError);
    CHECK_THROWS_AS(project_exposure(base, rs, 2015, -1), DataError);
}

TEST_CASE("projection comparison bands the differences") {
    RateSurface rs(60, 72, 2015, 2017);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 72; ++age)
            for (int year = 2015; year <= 2017; ++year) rs.set_rate(g, age, year, 0.0);
    MortalityDataset base(60, 72, 2015, 2017);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 72; ++age) base.set_cell(g, age, 2015, 0.0, 100.0 + age);

    const CashFlowProjection proj = project_exposure(base, rs, 2015, 2);

    // Observations equal to the projection: every band difference is zero.
    MortalityDataset same(60, 72, 2015, 2017);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 72; ++age)
            same.set_cell(g, age, 2017,  0.0,
                          proj.exposure[gender_index(g)](age - 60, 2));
    const ProjectionComparison eq = compare_projection(proj, same, 2017);
    CHECK(eq.year == 2017);
    REQUIRE(eq.bands.size() == 3);  // [60,64], [65,69], [70,72]
    CHECK(eq.bands[0].age_lo == 60);
    CHECK(eq.bands[0].age_hi == 64);
    CHECK(eq.bands[2].age_hi == 72);
    for (const auto& band : eq.bands) {
        REQUIRE(band.rel_diff.has_value());
        CHECK(*band.rel_diff == 0.0);
    }
    CHECK(eq.total_rel_diff == 0.0);

    // Band sums partition the projected total.
    double band_pred = 0.0;
    for (const auto& band : eq.bands) band_pred += band.predicted;
    CHECK(band_pred == doctest::Approx(proj.annual_total(2)).epsilon(1e-12));

    // Observed at predicted/1.005: every defined band shows +0.5%.
    MortalityDataset shifted(60, 72, 2015, 2017);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 72; ++age)
            shifted.set_cell(g, age, 2017, 0.0,
                             proj.exposure[gender_index(g)](age - 60, 2) / 1.005);
    const ProjectionComparison pct = compare_projection(proj, shifted, 2017);
    for (const auto& band : pct.bands) {
        if (band.age_lo <= 61 && band.observed == 0.0) continue;
        REQUIRE(band.rel_diff.has_value());
        CHECK(*band.rel_diff == doctest::Approx(0.005).epsilon(1e-12));
    }
    CHECK(pct.total_rel_diff == doctest::Approx(0.005).epsilon(1e-12));

    // A band with zero observed exposure has no relative difference.
    MortalityDataset sparse(60, 72, 2015, 2017);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 60; age <= 69; ++age)
            sparse.set_cell(g, age, 2017, 0.0,
                            proj.exposure[gender_index(g)](age - 60, 2) + 1.0);
    const ProjectionComparison gap = compare_projection(proj, sparse, 2017);
    REQUIRE(gap.bands.size() == 3);
    CHECK(!gap.bands[2].rel_diff.has_value());
    CHECK(gap.bands[2].predicted > 0.0);

    MortalityDataset empty(60, 72, 2015, 2017);
    CHECK_THROWS_AS(compare_projection(proj, empty, 2017), DataError);
    CHECK_THROWS_AS(compare_projection(proj, same, 2018), DataError);
    CHECK_THROWS_AS(compare_projection(proj, same, 2017, 0), DataError);
}

TEST_CASE("life table files round-trip exactly") {
    const LifeTableSlice t = random_slice(62, 12, 31);
    const auto dir = std::filesystem::temp_directory_path() / "mortcast_lifetable";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "slice.csv").string();

    save_life_table(t, path);
    const LifeTableSlice back = load_life_table(path);
    CHECK(back.age_min == 62);
    REQUIRE(back.q.size() == t.q.size());
    for (Eigen::Index i = 0; i < t.q.size(); ++i) CHECK(back.q(i) == t.q(i));

    // A table that does not close fails validation on save and load.
    LifeTableSlice open = t;
    open.q(11) = 0.7;
    CHECK_THROWS_AS(save_life_table(open, path), DataError);
    std::filesystem::remove_all(dir);
}
