#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "prunemf/dataset.hpp"

using namespace prunemf;

namespace {

RatingDataset parse(const std::string& text, LoadOptions opts = {}, LoadSummary* summary = nullptr) {
    std::istringstream in(text);
    return parse_ratings(in, opts, summary, "mem");
}

}  // namespace

TEST(ParseRatings, TsvLine) {
    const auto ds = parse("196\t242\t3\t881250949\n");
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.num_users(), 1u);
    EXPECT_EQ(ds.num_items(), 1u);
    EXPECT_EQ(ds.triples()[0], (RatingTriple{0, 0, 3.0}));
    EXPECT_EQ(ds.external_user(0), "196");
    EXPECT_EQ(ds.external_item(0), "242");
}

TEST(ParseRatings, CsvSingleton) {
    LoadOptions opts;
    opts.format = FileFormat::csv;
    opts.field_order = {Field::user, Field::item, Field::rating};
    const auto ds = parse("u1,i9,4.5\n", opts);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.triples()[0].rating, 4.5);
    EXPECT_EQ(ds.scale().min, 4.5);
    EXPECT_EQ(ds.scale().max, 4.5);
}

TEST(ParseRatings, CommentsAndHeaderSkipped) {
    LoadSummary s;
    const auto ds = parse("# comment\nuser\titem\trating\n1\t1\t5\n# another\n2\t1\t1\n", {}, &s);
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(s.comments_skipped, 2u);
    EXPECT_TRUE(s.header_skipped);
    EXPECT_EQ(s.lines_read, 2u);
}

TEST(ParseRatings, DenseIdsInFirstSeenOrder) {
    const auto ds = parse("a\tx\t1\nb\ty\t2\na\tz\t3\n");
    EXPECT_EQ(ds.num_users(), 2u);
    EXPECT_EQ(ds.num_items(), 3u);
    EXPECT_EQ(ds.triples()[2], (RatingTriple{0, 2, 3.0}));
    EXPECT_EQ(ds.ids().user_index.at("b"), 1u);
}

TEST(ParseRatings, DuplicateKeepsLast) {
    LoadSummary s;
    const auto ds = parse("1\t1\t2\n1\t2\t4\n1\t1\t5\n", {}, &s);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(s.duplicates_replaced, 1u);
    for (const auto& t : ds.triples())
        if (t.item == 0) {
            EXPECT_EQ(t.rating, 5.0);
        }
}

TEST(ParseRatings, CustomFieldOrder) {
    LoadOptions opts;
    opts.field_order = {Field::ignore, Field::rating, Field::item, Field::user};
    const auto ds = parse("x\t2.5\titemA\tuserB\n", opts);
    EXPECT_EQ(ds.external_user(0), "userB");
    EXPECT_EQ(ds.external_item(0), "itemA");
    EXPECT_EQ(ds.triples()[0].rating, 2.5);
}

TEST(ParseRatings, MalformedLineNamesLineNumber) {
    try {
        parse("1\t1\t3\n2\t2\tfoo\n");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("mem:2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse("1\t1\n"), DataError);
}

TEST(ParseRatings, EmptyInputIsDataError) {
    EXPECT_THROW(parse(""), DataError);
    EXPECT_THROW(parse("# only a comment\n"), DataError);
}

TEST(ParseRatings, FixedScaleCountsOutliers) {
    LoadOptions opts;
    opts.scale = RatingScale{1.0, 5.0};
    LoadSummary s;
    const auto ds = parse("1\t1\t6\n1\t2\t3\n", opts, &s);
    EXPECT_EQ(s.out_of_scale, 1u);
    EXPECT_EQ(ds.scale().max, 5.0);
}

TEST(LoadRatings, MissingFile) {
    try {
        load_ratings("/nonexistent/ratings.tsv");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/ratings.tsv"), std::string::npos);
    }
}

TEST(Split, PartitionAndSharedDimensions) {
    const auto ds = generate_synthetic({50, 60, 3, 1000, 0.1, 9});
    const auto [train, test] = split(ds, 0.8, 42);
    EXPECT_EQ(train.size(), 800u);
    EXPECT_EQ(test.size(), 200u);
    EXPECT_EQ(train.num_users(), ds.num_users());
    EXPECT_EQ(test.num_items(), ds.num_items());
    EXPECT_EQ(train.shared_ids(), ds.shared_ids());
    std::set<std::pair<std::uint32_t, std::uint32_t>> cells;
    for (const auto& t : train.triples()) cells.insert({t.user, t.item});
    for (const auto& t : test.triples()) EXPECT_FALSE(cells.count({t.user, t.item}));
    for (const auto& t : test.triples()) cells.insert({t.user, t.item});
    EXPECT_EQ(cells.size(), ds.size());
}

TEST(Split, DeterministicPerSeed) {
    const auto ds = generate_synthetic({30, 30, 2, 300, 0.1, 1});
    const auto a = split(ds, 0.7, 5);
    const auto b = split(ds, 0.7, 5);
    const auto c = split(ds, 0.7, 6);
    EXPECT_EQ(a.first.triples(), b.first.triples());
    EXPECT_NE(a.first.triples(), c.first.triples());
}

TEST(Split, EdgeFractions) {
    const auto ds = generate_synthetic({10, 10, 2, 50, 0.1, 1});
    EXPECT_EQ(split(ds, 1.0, 1).second.size(), 0u);
    EXPECT_EQ(split(ds, 0.0, 1).first.size(), 0u);
    EXPECT_THROW(split(ds, 1.5, 1), ConfigError);
    EXPECT_THROW(split(ds, -0.1, 1), ConfigError);
}

TEST(Stats, Density) {
    const auto ds = generate_synthetic({10, 20, 2, 50, 0.1, 1});
    const auto s = stats(ds);
    EXPECT_EQ(s.count, 50u);
    EXPECT_DOUBLE_EQ(s.density, 50.0 / static_cast<double>(ds.num_users() * ds.num_items()));
}

TEST(Synthetic, SizesScaleAndDeterminism) {
    const SynthSpec spec{100, 200, 5, 5000, 0.5, 3};
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    EXPECT_EQ(a.size(), 5000u);
    EXPECT_EQ(a.num_users(), 100u);
    EXPECT_EQ(a.num_items(), 200u);
    EXPECT_EQ(a.triples(), b.triples());
    for (const auto& t : a.triples()) EXPECT_TRUE(t.rating >= 1.0 && t.rating <= 5.0);
    EXPECT_EQ(fingerprint(a), fingerprint(b));
}

TEST(Synthetic, DenseRequestAndLimits) {
    EXPECT_EQ(generate_synthetic({5, 4, 1, 20, 0.0, 1}).size(), 20u);
    EXPECT_THROW(generate_synthetic({5, 4, 1, 21, 0.0, 1}), ConfigError);
    EXPECT_THROW(generate_synthetic({0, 4, 1, 1, 0.0, 1}), ConfigError);
}

TEST(WriteTsv, RoundTripsExactly) {
    const auto ds = generate_synthetic({20, 30, 3, 200, 0.3, 2});
    const auto path = std::filesystem::temp_directory_path() / "prunemf_ds_roundtrip.tsv";
    write_tsv(ds, path.string());
    const auto back = load_ratings(path.string());
    EXPECT_EQ(back.triples().size(), ds.size());
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto& t = ds.triples()[j];
        const auto& r = back.triples()[j];
        EXPECT_EQ(back.external_user(r.user), ds.external_user(t.user));
        EXPECT_EQ(back.external_item(r.item), ds.external_item(t.item));
        EXPECT_EQ(r.rating, t.rating);
    }
    std::filesystem::remove(path);
}

TEST(Fingerprint, SensitiveToContent) {
    const auto a = generate_synthetic({10, 10, 2, 30, 0.1, 1});
    const auto b = generate_synthetic({10, 10, 2, 30, 0.1, 2});
    EXPECT_NE(fingerprint(a), fingerprint(b));
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}
