#include <algorithm>

#include "catch_amalgamated.hpp"
#include "ehrgrid/interventions.hpp"

using namespace ehrgrid;

namespace {

InterventionEventRow span(std::int64_t stay, const std::string& name, Timestamp intime,
                          double start_hours, double end_hours) {
    InterventionEventRow ev;
    ev.icustay_id = stay;
    ev.name = name;
    ev.starttime = add_hours(intime, start_hours);
    ev.endtime = add_hours(intime, end_hours);
    return ev;
}

CohortRow stay_of(std::int64_t id, Timestamp intime, double hours) {
    CohortRow row;
    row.icustay_id = id;
    row.subject_id = id;
    row.hadm_id = id;
    row.intime = intime;
    row.outtime = add_hours(intime, hours);
    return row;
}

}  // namespace

TEST_CASE("continuous records mark every hour their span touches") {
    const Timestamp t0 = make_timestamp(2115, 4, 2);
    const auto hours = [&](double s, double e) {
        return rasterize_continuous(span(1, "vent", t0, s, e), t0, 48);
    };

    CHECK(hours(2.0, 5.0) == std::vector<std::int64_t>{2, 3, 4});   // end boundary open
    CHECK(hours(2.0, 5.5) == std::vector<std::int64_t>{2, 3, 4, 5});
    CHECK(hours(2.5, 2.75) == std::vector<std::int64_t>{2});
    CHECK(hours(2.0, 2.0) == std::vector<std::int64_t>{2});          // zero length still counts
    CHECK(hours(3.0, 3.0) == std::vector<std::int64_t>{3});

    // Clipping to the grid on both sides.
    CHECK(hours(-5.0, 1.5) == std::vector<std::int64_t>{0, 1});
    CHECK(hours(46.5, 60.0) == std::vector<std::int64_t>{46, 47});
    CHECK(hours(-3.0, -1.0).empty());
    CHECK(hours(50.0, 55.0).empty());
}

TEST_CASE("bolus records mark only their administration hour inside the stay") {
    const Timestamp t0 = make_timestamp(2115, 4, 2);
    const Timestamp out = add_hours(t0, 48);
    const auto hours = [&](double s) {
        return rasterize_intermittent(span(1, "crystalloid_bolus", t0, s, s), t0, out, 48);
    };

    CHECK(hours(0.0) == std::vector<std::int64_t>{0});      // at intime
    CHECK(hours(2.5) == std::vector<std::int64_t>{2});
    CHECK(hours(47.99) == std::vector<std::int64_t>{47});
    CHECK(hours(-0.01).empty());                              // before the stay
    CHECK(hours(48.0).empty());                               // exactly at outtime: gone
    CHECK(hours(50.0).empty());
}

TEST_CASE("only the fluid boluses use intermittent semantics") {
    for (std::size_t col = 0; col < kInterventionColumns.size(); ++col) {
        const std::string name = kInterventionColumns[col];
        if (name == "colloid_bolus" || name == "crystalloid_bolus")
            CHECK(is_intermittent(col));
        else
            CHECK_FALSE(is_intermittent(col));
    }
}

TEST_CASE("column lookup knows every column and rejects strangers") {
    for (std::size_t i = 0; i < kInterventionColumns.size(); ++i)
        CHECK(intervention_column(kInterventionColumns[i]) == i);
    CHECK_FALSE(intervention_column("ventt").has_value());
    CHECK_FALSE(intervention_column("").has_value());
}

TEST_CASE("the treatment grid rasterizes per stay and ORs the pressor columns") {
    const Timestamp t0 = make_timestamp(2115, 4, 2);
    const std::vector<CohortRow> cohort{stay_of(1, t0, 10.0), stay_of(2, t0, 6.0)};

    std::vector<InterventionEventRow> events{
        span(1, "vent", t0, 1.0, 3.5),
        span(1, "dopamine", t0, 2.0, 4.0),
        span(1, "vaso", t0, 8.0, 9.0),               // direct record, no drug
        span(1, "crystalloid_bolus", t0, 5.25, 5.25),
        span(2, "norepinephrine", t0, 0.0, 2.0),
    };

    const InterventionGrid grid = build_intervention_grid(events, cohort);
    REQUIRE(grid.stays.size() == 2);
    const auto& s1 = grid.stays[0];
    const auto& s2 = grid.stays[1];
    REQUIRE(s1.icustay_id == 1);
    REQUIRE(s1.n_hours == 10);
    REQUIRE(s2.n_hours == 6);

    const auto col = [](const char* name) { return *intervention_column(name); };

    for (std::int64_t h = 0; h < 10; ++h) {
        CHECK(s1.get(h, col("vent")) == (h >= 1 && h <= 3));
        CHECK(s1.get(h, col("dopamine")) == (h >= 2 && h <= 3));
        CHECK(s1.get(h, col("crystalloid_bolus")) == (h == 5));
        // vaso = its own records plus any pressor drug.
        const bool expect_vaso = (h >= 2 && h <= 3) || h == 8;
        CHECK(s1.get(h, col("vaso")) == expect_vaso);
    }
    for (std::int64_t h = 0; h < 6; ++h) {
        CHECK(s2.get(h, col("norepinephrine")) == (h <= 1));
        CHECK(s2.get(h, col("vaso")) == (h <= 1));
        CHECK_FALSE(s2.get(h, col("vent")));
    }

    // The OR invariant holds cell-wise for every drug column.
    for (const auto& s : grid.stays)
        for (std::int64_t h = 0; h < s.n_hours; ++h)
            for (std::size_t c = kFirstDrugColumn; c <= kLastDrugColumn; ++c)
                if (s.get(h, c)) CHECK(s.get(h, kVasoColumn));
}

TEST_CASE("records for stays outside the cohort are ignored") {
    const Timestamp t0 = make_timestamp(2115, 4, 2);
    const std::vector<CohortRow> cohort{stay_of(1, t0, 10.0)};
    std::vector<InterventionEventRow> events{
        span(1, "vent", t0, 0.0, 2.0),
        span(99, "vent", t0, 0.0, 2.0),  // excluded stay: silently skipped
    };
    const InterventionGrid grid = build_intervention_grid(events, cohort);
    REQUIRE(grid.stays.size() == 1);
    CHECK(grid.stays[0].get(0, *intervention_column("vent")));
}

TEST_CASE("unknown treatment names are fatal") {
    const Timestamp t0 = make_timestamp(2115, 4, 2);
    const std::vector<CohortRow> cohort{stay_of(1, t0, 10.0)};
    std::vector<InterventionEventRow> events{span(1, "ventilator", t0, 0.0, 2.0)};
    try {
        build_intervention_grid(events, cohort);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unknown_intervention_name);
        CHECK(std::string(e.what()).find("ventilator") != std::string::npos);
    }
}

TEST_CASE("adenosine pushes behave like one-hour pulses") {
    const Timestamp t0 = make_timestamp(2115, 4, 2);
    const std::vector<CohortRow> cohort{stay_of(1, t0, 10.0)};
    std::vector<InterventionEventRow> events{span(1, "adenosine", t0, 4.5, 4.5)};
    const InterventionGrid grid = build_intervention_grid(events, cohort);
    const auto& s = grid.stays[0];
    for (std::int64_t h = 0; h < 10; ++h) {
        CHECK(s.get(h, *intervention_column("adenosine")) == (h == 4));
        CHECK(s.get(h, kVasoColumn) == (h == 4));  // adenosine is one of the pressors
    }
}
