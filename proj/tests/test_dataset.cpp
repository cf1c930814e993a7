#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "protoscope/dataset.hpp"
#include "protoscope/rng.hpp"
#include "helpers.hpp"

using namespace protoscope;
using namespace protoscope::dataset;
using protoscope::dicom::MetaRecord;

namespace {

MetaRecord cohort_record(const std::string& body, dicom::Weighting w, dicom::Plane plane,
                         const std::string& series = "s", int instance = 1) {
    rng::Stream stream(static_cast<std::uint64_t>(instance) * 7919 + series.size(), 3);
    auto rec = test_helpers::random_record(stream);
    rec.body_part = body;
    rec.weighting = w;
    rec.plane = plane;
    rec.coil = "C1";
    rec.series_id = series;
    rec.instance_number = instance;
    return rec;
}

FeatureTable tiny_table(const std::vector<std::vector<double>>& rows,
                        const std::vector<int>& labels) {
    FeatureTable table;
    for (std::size_t j = 0; j < rows[0].size(); ++j)
        table.columns.push_back({"f" + std::to_string(j), FeatureGroup::commonly_modified,
                                 Encoding::numeric});
    table.rows = rows;
    table.labels = labels;
    table.scores.assign(rows.size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i)
        table.provenance.push_back({"st" + std::to_string(i), "se" + std::to_string(i)});
    return table;
}

} // namespace

TEST_CASE("group_series keys cohorts by (body, weighting, coil, plane)", "[dataset]") {
    std::vector<MetaRecord> records = {
        cohort_record("CSPINE", dicom::Weighting::T1, dicom::Plane::sagittal, "a"),
        cohort_record("CSPINE", dicom::Weighting::T1, dicom::Plane::sagittal, "b"),
        cohort_record("LSPINE", dicom::Weighting::T2, dicom::Plane::sagittal, "c"),
        cohort_record("CSPINE", dicom::Weighting::T1, dicom::Plane::axial, "d"),
    };
    const auto cohorts = group_series(records);
    REQUIRE(cohorts.size() == 3);
    std::vector<std::size_t> sizes;
    for (const auto& [key, members] : cohorts) sizes.push_back(members.size());
    std::sort(sizes.begin(), sizes.end());
    CHECK(sizes == std::vector<std::size_t>{1, 1, 2});
    CHECK(group_series({}).empty());

    CHECK(cohort_eligible({"CSPINE", dicom::Weighting::T1, "C1", dicom::Plane::sagittal}));
    CHECK(!cohort_eligible({"CSPINE", dicom::Weighting::T1, "C1", dicom::Plane::axial}));
    CHECK(!cohort_eligible({"CSPINE", dicom::Weighting::other, "C1", dicom::Plane::sagittal}));
}

TEST_CASE("select_slice picks the median instance, lower middle on even counts", "[dataset]") {
    std::vector<MetaRecord> series;
    for (int i = 1; i <= 5; ++i)
        series.push_back(cohort_record("C", dicom::Weighting::T1, dicom::Plane::sagittal, "s", i));
    CHECK(select_slice(series).instance_number == 3);
    series.pop_back();
    CHECK(select_slice(series).instance_number == 2);
    CHECK(select_slice({series[0]}).instance_number == 1);
}

TEST_CASE("assemble_table one-hot encodes sex and drops rows missing features", "[dataset]") {
    rng::Stream stream(42, 0);
    std::vector<MetaRecord> records;
    std::vector<quality::QualityLabel> labels;
    for (int i = 0; i < 4; ++i) {
        auto rec = test_helpers::random_record(stream);
        rec.sex = i % 2 == 0 ? dicom::Sex::F : dicom::Sex::M;
        records.push_back(rec);
        labels.push_back({0.1 * i, i % 2});
    }
    records[3].tr_ms.reset(); // forces a drop

    const auto result = assemble_table(records, labels);
    CHECK(result.table.n() == 3);
    CHECK(result.dropped_rows == 1);
    CHECK(result.missing_by_column.at("tr_ms") == 1);

    const auto f_col = result.table.column_index("sex_F");
    const auto m_col = result.table.column_index("sex_M");
    REQUIRE(f_col >= 0);
    REQUIRE(m_col >= 0);
    CHECK(result.table.rows[0][static_cast<std::size_t>(f_col)] == 1.0);
    CHECK(result.table.rows[0][static_cast<std::size_t>(m_col)] == 0.0);
    CHECK(result.table.rows[1][static_cast<std::size_t>(f_col)] == 0.0);
    CHECK(result.table.rows[1][static_cast<std::size_t>(m_col)] == 1.0);

    // provenance survives the drop
    CHECK(result.table.provenance.size() == 3);
    CHECK(result.table.provenance[0].series_id == records[0].series_id);
}

TEST_CASE("reduce_correlated removes exactly one of a duplicated column", "[dataset]") {
    rng::Stream stream(1, 0);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 50; ++i) {
        const double v = stream.uniform();
        rows.push_back({v, v, stream.uniform()});
    }
    auto table = tiny_table(rows, std::vector<int>(50, 0));
    const auto result = reduce_correlated(table);
    REQUIRE(result.log.size() == 1);
    CHECK(result.log[0].removed == "f1"); // later column loses
    CHECK(result.log[0].kept == "f0");
    CHECK(result.log[0].pearson == Catch::Approx(1.0));
    CHECK(result.log[0].spearman == Catch::Approx(1.0));
    CHECK(result.table.d() == 2);
}

TEST_CASE("monotone pairs trip the single-method spearman rule", "[dataset]") {
    rng::Stream stream(2, 0);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 100; ++i) {
        const double x = stream.uniform(0.01, 1.0);
        // x^15 keeps pearson clearly under 0.7 while spearman is exactly 1
        rows.push_back({x, std::pow(x, 15.0), stream.uniform(10.0, 20.0)});
    }
    auto table = tiny_table(rows, std::vector<int>(100, 0));
    {
        const auto p = std::abs(stats::pearson(table.column(0), table.column(1)));
        const auto s = std::abs(stats::spearman(table.column(0), table.column(1)));
        REQUIRE(p <= 0.7);
        REQUIRE(s == Catch::Approx(1.0));
    }
    const auto result = reduce_correlated(table);
    REQUIRE(result.log.size() == 1);
    CHECK(result.log[0].spearman > 0.9);
    CHECK(result.log[0].pearson <= 0.7);

    // the cubic pair is removed too, with spearman driving the decision
    std::vector<std::vector<double>> cubic_rows;
    for (int i = 0; i < 100; ++i) {
        const double x = stream.uniform(0.01, 1.0);
        cubic_rows.push_back({x, x * x * x, stream.uniform(10.0, 20.0)});
    }
    auto cubic = tiny_table(cubic_rows, std::vector<int>(100, 0));
    const auto cubic_result = reduce_correlated(cubic);
    REQUIRE(cubic_result.log.size() == 1);
    CHECK(cubic_result.log[0].spearman == Catch::Approx(1.0));
}

TEST_CASE("independent columns survive reduction", "[dataset]") {
    int removals = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        rng::Stream stream(seed, 4);
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 200; ++i)
            rows.push_back({stream.uniform(), stream.uniform(), stream.uniform(),
                            stream.uniform()});
        auto table = tiny_table(rows, std::vector<int>(200, 0));
        removals += static_cast<int>(reduce_correlated(table).log.size());
    }
    CHECK(removals == 0);
}

TEST_CASE("reduction output has no remaining flagged pair", "[dataset]") {
    rng::Stream stream(3, 0);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 80; ++i) {
        const double a = stream.uniform();
        const double b = a + 0.05 * stream.uniform(); // strongly correlated with a
        const double c = -a + 0.05 * stream.uniform();
        rows.push_back({a, b, c, stream.uniform()});
    }
    auto table = tiny_table(rows, std::vector<int>(80, 0));
    const auto result = reduce_correlated(table);
    CHECK(!result.log.empty());
    const CorrelationThresholds t;
    for (std::size_t a = 0; a < result.table.d(); ++a) {
        for (std::size_t b = a + 1; b < result.table.d(); ++b) {
            const double p =
                std::abs(stats::pearson(result.table.column(a), result.table.column(b)));
            const double s =
                std::abs(stats::spearman(result.table.column(a), result.table.column(b)));
            CHECK(!((p > t.both && s > t.both) || p > t.single || s > t.single));
        }
    }
}

TEST_CASE("commonly modified columns win against randomly modified ones", "[dataset]") {
    rng::Stream stream(5, 0);
    FeatureTable table;
    table.columns = {{"random_col", FeatureGroup::randomly_modified, Encoding::numeric},
                     {"common_col", FeatureGroup::commonly_modified, Encoding::numeric}};
    for (int i = 0; i < 50; ++i) {
        const double v = stream.uniform();
        table.rows.push_back({v, v});
        table.labels.push_back(0);
        table.scores.push_back(0.0);
    }
    const auto result = reduce_correlated(table);
    REQUIRE(result.log.size() == 1);
    CHECK(result.log[0].removed == "random_col");
    CHECK(result.log[0].kept == "common_col");
}

TEST_CASE("stratified_split is deterministic and balanced", "[dataset]") {
    std::vector<std::vector<double>> rows(10, std::vector<double>{0.0});
    std::vector<int> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    auto table = tiny_table(rows, labels);
    const auto split = stratified_split(table, 0.2, 7);
    CHECK(split.test.size() == 2);
    int test_pos = 0;
    for (const auto i : split.test) test_pos += labels[i];
    CHECK(test_pos == 1);

    const auto again = stratified_split(table, 0.2, 7);
    CHECK(split.train == again.train);
    CHECK(split.test == again.test);
    const auto other = stratified_split(table, 0.2, 8);
    CHECK(split.test != other.test);

    // 292 rows -> 234/58
    std::vector<std::vector<double>> big(292, std::vector<double>{0.0});
    std::vector<int> big_labels(292);
    for (std::size_t i = 0; i < big_labels.size(); ++i) big_labels[i] = i % 2 == 0 ? 1 : 0;
    auto big_table = tiny_table(big, big_labels);
    const auto big_split = stratified_split(big_table, 0.2, 1);
    CHECK(big_split.test.size() == 58);
    CHECK(big_split.train.size() == 234);

    std::vector<int> single(10, 1);
    auto bad = tiny_table(rows, single);
    CHECK_THROWS_AS(stratified_split(bad, 0.2, 7), SingleClassInput);
}

TEST_CASE("dataset CSV round-trips through from_csv", "[dataset]") {
    rng::Stream stream(6, 0);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        rows.push_back({stream.uniform(), stream.uniform(100, 200)});
        labels.push_back(i % 2);
    }
    auto table = tiny_table(rows, labels);
    for (auto& s : table.scores) s = stream.uniform();
    const auto text = to_csv(table);
    const auto back = from_csv(text);
    REQUIRE(back.n() == table.n());
    REQUIRE(back.d() == table.d());
    CHECK(back.rows == table.rows);
    CHECK(back.labels == table.labels);
    CHECK(back.scores == table.scores);
    CHECK(to_csv(back) == text);
}
