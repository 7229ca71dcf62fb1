#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.hpp"

using namespace quip;
using namespace quip::testutil;

TEST_CASE("loading the fixture sets missing bits and counters") {
    Database db = load_toy();
    CHECK(db.missing_count("trajectories", "room_location") == 3);
    CHECK(db.missing_count("user", "mac_address") == 2);
    CHECK(db.missing_count("space", "building") == 3);
    CHECK(db.missing_count("space", "floor") == 1);
    CHECK(db.missing_count("trajectories", "mac_address") == 0);

    const Table& t = db.require_table("trajectories");
    REQUIRE(t.rows.size() == 6);
    CHECK(t.rows[0].vals[2] == Value::of(int64_t{2206}));
    CHECK(t.rows[1].vals[2].is_null());
    CHECK(t.rows[1].miss[2] == 1);
}

TEST_CASE("header-only csv loads as an empty table") {
    auto dir = std::filesystem::temp_directory_path() / "quip_empty_csv";
    std::filesystem::create_directories(dir);
    std::ofstream((dir / "t.csv")) << "a,b\n";
    TableSchema s;
    s.name = "t";
    s.cols = {{"a", AttrType::Int}, {"b", AttrType::Text}};
    Table t = load_csv((dir / "t.csv").string(), s);
    CHECK(t.rows.empty());
}

TEST_CASE("null and missing sentinels are distinct") {
    auto dir = std::filesystem::temp_directory_path() / "quip_sentinels";
    std::filesystem::create_directories(dir);
    std::ofstream((dir / "t.csv")) << "a\n\\N\n\\M\n3\n";
    TableSchema s;
    s.name = "t";
    s.cols = {{"a", AttrType::Int}};
    Table t = load_csv((dir / "t.csv").string(), s);
    REQUIRE(t.rows.size() == 3);
    CHECK((t.rows[0].vals[0].is_null() && t.rows[0].miss[0] == 0));
    CHECK((t.rows[1].vals[0].is_null() && t.rows[1].miss[0] == 1));
    CHECK(t.rows[2].vals[0] == Value::of(int64_t{3}));
}

TEST_CASE("load errors name the offending row") {
    auto dir = std::filesystem::temp_directory_path() / "quip_bad_csv";
    std::filesystem::create_directories(dir);
    TableSchema s;
    s.name = "t";
    s.cols = {{"a", AttrType::Int}, {"b", AttrType::Int}};
    {
        std::ofstream((dir / "t.csv")) << "a,b\n1,2\n3\n";
        REQUIRE_THROWS_WITH(load_csv((dir / "t.csv").string(), s),
                            Catch::Matchers::ContainsSubstring("row 2"));
    }
    {
        std::ofstream((dir / "t.csv")) << "a,b\n1,zap\n";
        REQUIRE_THROWS_WITH(load_csv((dir / "t.csv").string(), s),
                            Catch::Matchers::ContainsSubstring("zap"));
    }
}

TEST_CASE("ground truth lookups") {
    Database db = load_toy();
    CHECK(db.gt.lookup("trajectories", 2, "room_location") == Value::of(int64_t{2082}));
    CHECK(db.gt.lookup("space", 0, "building") == Value::of(std::string("DBH")));
    CHECK(db.gt.lookup("user", 0, "mac_address") == Value::of(std::string("fff1")));
    REQUIRE_THROWS_AS(db.gt.lookup("space", 2, "building"), Error);
}

TEST_CASE("missing counter contract") {
    Database db = load_toy();
    REQUIRE_THROWS_AS(db.missing_count("user", "nope"), Error);
    CHECK(db.missing_count("user", "name") == 0);
    // replay: imputing both mac cells drives the counter to zero
    int t = db.table_index("user");
    int c = db.tables[t].schema.require_col("mac_address");
    db.missing.decrement(t, c);
    db.missing.decrement(t, c);
    CHECK(db.missing.count(t, c) == 0);
    REQUIRE_THROWS_AS(db.missing.decrement(t, c), Error);
}

TEST_CASE("counters always equal the number of set missing bits") {
    std::mt19937_64 rng(123);
    for (int iter = 0; iter < 20; ++iter) {
        Database db = fuzz_db(rng, 40);
        for (size_t t = 0; t < db.tables.size(); ++t) {
            const Table& tab = db.tables[t];
            for (size_t c = 0; c < tab.schema.cols.size(); ++c) {
                int bits = 0;
                for (const auto& r : tab.rows) bits += r.miss[c];
                CHECK(db.missing.count(static_cast<int>(t), static_cast<int>(c)) == bits);
            }
        }
        // decrement events keep the counter in sync with cleared bits
        for (auto& tab : db.tables) {
            int ti = db.table_index(tab.schema.name);
            for (auto& r : tab.rows) {
                for (size_t c = 0; c < r.miss.size(); ++c) {
                    if (r.miss[c] && rng() % 2) {
                        r.miss[c] = 0;
                        db.missing.decrement(ti, static_cast<int>(c));
                    }
                }
            }
            for (size_t c = 0; c < tab.schema.cols.size(); ++c) {
                int bits = 0;
                for (const auto& r : tab.rows) bits += r.miss[c];
                CHECK(db.missing.count(ti, static_cast<int>(c)) == bits);
            }
        }
    }
}

TEST_CASE("save/load round-trips values and missing bits bit-exactly") {
    std::mt19937_64 rng(99);
    Database db = fuzz_db(rng, 30);
    auto dir = std::filesystem::temp_directory_path() / "quip_roundtrip";
    std::filesystem::remove_all(dir);
    save_database(db, dir.string());
    Database back = load_database(dir.string());
    REQUIRE(back.tables.size() == db.tables.size());
    for (size_t t = 0; t < db.tables.size(); ++t) {
        const Table& a = db.tables[t];
        const Table& b = back.tables[t];
        REQUIRE(a.rows.size() == b.rows.size());
        for (size_t r = 0; r < a.rows.size(); ++r) {
            CHECK(a.rows[r].miss == b.rows[r].miss);
            for (size_t c = 0; c < a.rows[r].vals.size(); ++c)
                CHECK(a.rows[r].vals[c] == b.rows[r].vals[c]);
        }
    }
}
