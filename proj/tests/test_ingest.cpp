#include <filesystem>
#include <fstream>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "ehrgrid/ingest.hpp"
#include "ehrgrid/synthgen.hpp"

using namespace ehrgrid;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

SourceDataset tiny_dataset() {
    SourceDataset ds;
    PatientRow p;
    p.subject_id = 42;
    p.gender = "F";
    p.dob = make_timestamp(2050, 1, 1);
    p.ethnicity = "OTHER";
    p.insurance = "Medicare";
    ds.patients.push_back(p);

    AdmissionRow a;
    a.hadm_id = 100;
    a.subject_id = 42;
    a.admittime = make_timestamp(2100, 1, 1);
    a.dischtime = make_timestamp(2100, 1, 10);
    a.admission_type = "EMERGENCY";
    ds.admissions.push_back(a);

    StayRow s;
    s.icustay_id = 7000;
    s.hadm_id = 100;
    s.subject_id = 42;
    s.intime = make_timestamp(2100, 1, 1, 6, 0, 0);
    s.outtime = make_timestamp(2100, 1, 3, 6, 0, 0);
    s.first_careunit = "MICU";
    ds.stays.push_back(s);

    EventRow keyed;
    keyed.subject_id = 42;
    keyed.hadm_id = 100;
    keyed.icustay_id = 7000;
    keyed.itemid = 211;
    keyed.charttime = make_timestamp(2100, 1, 1, 7, 30, 0);
    keyed.valuenum = 81.5;
    ds.events.push_back(keyed);

    EventRow lab = keyed;
    lab.icustay_id.reset();
    lab.itemid = 50820;
    lab.valuenum = 7.38;
    lab.valueuom = "units";
    ds.events.push_back(lab);

    InterventionEventRow iv;
    iv.icustay_id = 7000;
    iv.name = "vent";
    iv.starttime = make_timestamp(2100, 1, 1, 8, 0, 0);
    iv.endtime = make_timestamp(2100, 1, 1, 20, 0, 0);
    ds.intervention_events.push_back(iv);
    return ds;
}

// In-place textual surgery so each failure mode is exercised through the
// same reader the pipeline uses.
void patch_file(const fs::path& file, const std::string& from, const std::string& to) {
    std::ifstream in(file, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), to);
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << text;
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::internal_error;
}

}  // namespace

TEST_CASE("source tables survive a save/load round trip") {
    TempDir dir("ehrgrid_ingest_roundtrip");
    const SourceDataset original = tiny_dataset();
    save_source_dataset(original, dir.path);
    CHECK(load_source_dataset(dir.path) == original);
}

TEST_CASE("generated data survives a save/load round trip") {
    TempDir dir("ehrgrid_ingest_gen_roundtrip");
    GenParams params;
    params.n_subjects = 40;
    params.seed = 11;
    const GenOutput gen = generate(params);
    save_source_dataset(gen.dataset, dir.path);
    CHECK(load_source_dataset(dir.path) == gen.dataset);
}

TEST_CASE("header problems are schema mismatches naming the column") {
    TempDir dir("ehrgrid_ingest_schema");
    save_source_dataset(tiny_dataset(), dir.path);

    SECTION("renamed column") {
        patch_file(dir.path / "patients.csv", "subject_id", "subject");
        try {
            load_source_dataset(dir.path);
            FAIL("expected schema mismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::schema_mismatch);
            CHECK(std::string(e.what()).find("patients.csv") != std::string::npos);
            CHECK(std::string(e.what()).find("subject_id") != std::string::npos);
        }
    }
    SECTION("extra column") {
        patch_file(dir.path / "icustays.csv", "first_careunit", "first_careunit,bogus");
        patch_file(dir.path / "icustays.csv", "MICU", "MICU,1");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::schema_mismatch);
    }
    SECTION("duplicated column") {
        patch_file(dir.path / "events.csv", "valueuom", "valueuom,valueuom");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::schema_mismatch);
    }
    SECTION("missing file") {
        fs::remove(dir.path / "admissions.csv");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::missing_file);
    }
}

TEST_CASE("cell problems are parse errors carrying the location") {
    TempDir dir("ehrgrid_ingest_parse");
    save_source_dataset(tiny_dataset(), dir.path);

    SECTION("non-numeric id") {
        patch_file(dir.path / "patients.csv", "42,F", "fortytwo,F");
        try {
            load_source_dataset(dir.path);
            FAIL("expected parse error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::parse_error);
            const std::string what = e.what();
            CHECK(what.find("patients.csv") != std::string::npos);
            CHECK(what.find("subject_id") != std::string::npos);
            // Row numbers count the header, matching what a spreadsheet shows.
            CHECK(what.find("row 2") != std::string::npos);
        }
    }
    SECTION("malformed timestamp") {
        patch_file(dir.path / "icustays.csv", "2100-01-01 06:00:00", "2100/01/01 06:00:00");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::parse_error);
    }
    SECTION("malformed flag") {
        patch_file(dir.path / "admissions.csv", "EMERGENCY,0", "EMERGENCY,maybe");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::parse_error);
    }
    SECTION("discharge before admission") {
        patch_file(dir.path / "admissions.csv", "2100-01-10 00:00:00", "2099-01-10 00:00:00");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::parse_error);
    }
    SECTION("stay ends before it starts") {
        patch_file(dir.path / "icustays.csv", "2100-01-03 06:00:00", "2100-01-01 05:00:00");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::parse_error);
    }
}

TEST_CASE("referential problems are integrity errors") {
    SECTION("duplicate subject") {
        TempDir dir("ehrgrid_ingest_integ1");
        save_source_dataset(tiny_dataset(), dir.path);
        patch_file(dir.path / "patients.csv", "42,F,2050-01-01 00:00:00,OTHER,Medicare",
                   "42,F,2050-01-01 00:00:00,OTHER,Medicare\n42,M,2051-01-01 00:00:00,OTHER,Private");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::integrity_error);
    }
    SECTION("stay pointing at an unknown admission") {
        TempDir dir("ehrgrid_ingest_integ2");
        save_source_dataset(tiny_dataset(), dir.path);
        patch_file(dir.path / "icustays.csv", "7000,100", "7000,999");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::integrity_error);
    }
    SECTION("treatment record pointing at an unknown stay") {
        TempDir dir("ehrgrid_ingest_integ3");
        save_source_dataset(tiny_dataset(), dir.path);
        patch_file(dir.path / "intervention_events.csv", "7000,vent", "7001,vent");
        CHECK(code_of([&] { load_source_dataset(dir.path); }) == ErrorCode::integrity_error);
    }
}

TEST_CASE("lab events attach to the stay containing their chart time") {
    const Timestamp t0 = make_timestamp(2100, 5, 1);
    std::vector<StayRow> stays(2);
    stays[0].icustay_id = 1;
    stays[0].hadm_id = 10;
    stays[0].subject_id = 5;
    stays[0].intime = t0;
    stays[0].outtime = add_hours(t0, 10);
    stays[1] = stays[0];
    stays[1].icustay_id = 2;
    stays[1].intime = add_hours(t0, 20);
    stays[1].outtime = add_hours(t0, 30);

    auto lab_at = [&](double hours) {
        EventRow e;
        e.subject_id = 5;
        e.hadm_id = 10;
        e.itemid = 50820;
        e.charttime = add_hours(t0, hours);
        e.valuenum = 7.4;
        return e;
    };

    std::vector<EventRow> events{lab_at(0), lab_at(10), lab_at(15), lab_at(20), lab_at(30),
                                 lab_at(31)};
    EventRow keyed = lab_at(15);  // between stays, but already keyed
    keyed.icustay_id = 2;
    events.push_back(keyed);

    const AttachResult got = attach_stay_to_lab_events(std::move(events), stays);

    REQUIRE(got.events.size() == 5);
    CHECK(got.n_attached == 4);
    CHECK(got.n_dropped == 2);  // 15h and 31h fall in no stay
    CHECK(got.events[0].icustay_id == 1);  // intime boundary included
    CHECK(got.events[1].icustay_id == 1);  // outtime boundary included
    CHECK(got.events[2].icustay_id == 2);
    CHECK(got.events[3].icustay_id == 2);
    CHECK(got.events[4].icustay_id == 2);  // keyed event untouched
    CHECK(got.events[4].charttime.sec == add_hours(t0, 15).sec);
}

TEST_CASE("attachment prefers the earliest stay on ties") {
    const Timestamp t0 = make_timestamp(2100, 5, 1);
    std::vector<StayRow> stays(2);
    stays[0].icustay_id = 9;
    stays[0].hadm_id = 10;
    stays[0].subject_id = 5;
    stays[0].intime = t0;
    stays[0].outtime = add_hours(t0, 10);
    stays[1] = stays[0];
    stays[1].icustay_id = 3;  // same window, smaller id wins
    EventRow e;
    e.subject_id = 5;
    e.hadm_id = 10;
    e.itemid = 50820;
    e.charttime = add_hours(t0, 5);
    e.valuenum = 7.4;
    const AttachResult got = attach_stay_to_lab_events({e}, stays);
    REQUIRE(got.events.size() == 1);
    CHECK(got.events[0].icustay_id == 3);
}

TEST_CASE("flags accept the documented spellings only") {
    TempDir dir("ehrgrid_ingest_flags");
    SourceDataset ds = tiny_dataset();
    save_source_dataset(ds, dir.path);
    for (const std::string& ok : {"1", "true", "True"}) {
        patch_file(dir.path / "admissions.csv", "EMERGENCY,0", "EMERGENCY," + ok);
        CHECK(load_source_dataset(dir.path).admissions[0].hospital_expire_flag);
        patch_file(dir.path / "admissions.csv", "EMERGENCY," + ok, "EMERGENCY,0");
    }
    for (const std::string& off : {"0", "false", "False"}) {
        patch_file(dir.path / "admissions.csv", "EMERGENCY,0", "EMERGENCY," + off);
        CHECK_FALSE(load_source_dataset(dir.path).admissions[0].hospital_expire_flag);
        patch_file(dir.path / "admissions.csv", "EMERGENCY," + off, "EMERGENCY,0");
    }
}
