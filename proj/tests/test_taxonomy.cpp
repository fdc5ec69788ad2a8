#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "hpt/taxonomy.hpp"
#include "test_util.hpp"

using namespace hpt;

namespace {

DatasetManifest two_class_manifest() {
    DatasetManifest m;
    m.name = "fixture";
    m.classes = {{0, "warship", "destroyer", "arleigh-burke"}, {1, "civilian", "cargo", "container-ship"}};
    m.records = {{"a.ppm", 0, 32, 32}, {"b.ppm", 0, 32, 32}, {"c.ppm", 1, 32, 32}, {"d.ppm", 1, 32, 32}};
    return m;
}

std::string manifest_json(const std::string& records_extra = "") {
    return R"({
  "name": "fixture",
  "classes": [
    {"class_id": 0, "primary": "warship", "secondary": "destroyer", "final": "arleigh-burke"},
    {"class_id": 1, "primary": "civilian", "secondary": "cargo", "final": "container-ship"}
  ],
  "records": [
    {"image_ref": "a.ppm", "class_id": 0, "height": 32, "width": 32},
    {"image_ref": "b.ppm", "class_id": 0, "height": 32, "width": 32},
    {"image_ref": "c.ppm", "class_id": 1, "height": 32, "width": 32},
    {"image_ref": "d.ppm", "class_id": 1, "height": 32, "width": 32})" +
           records_extra + R"(
  ]
})";
}

}  // namespace

TEST_CASE("load_manifest accepts a well-formed manifest") {
    auto path = write_test_file("manifest_ok.json", manifest_json());
    DatasetManifest m = load_manifest(path);
    CHECK(m.classes.size() == 2);
    CHECK(m.records.size() == 4);
    CHECK(m.name == "fixture");
    CHECK(m.find_class(1)->final == "container-ship");
}

TEST_CASE("load_manifest rejects unresolved class ids") {
    auto path = write_test_file(
        "manifest_unresolved.json",
        manifest_json(",\n    {\"image_ref\": \"e.ppm\", \"class_id\": 99, \"height\": 32, \"width\": 32}"));
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("unresolved class"), std::runtime_error);
}

TEST_CASE("load_manifest rejects a final under two primaries") {
    std::string json = R"({
  "name": "bad",
  "classes": [
    {"class_id": 0, "primary": "warship", "secondary": "carrier", "final": "nimitz"},
    {"class_id": 1, "primary": "civilian", "secondary": "carrier2", "final": "nimitz"}
  ],
  "records": []
})";
    auto path = write_test_file("manifest_hier.json", json);
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("hierarchy violation"), std::runtime_error);
}

TEST_CASE("load_manifest rejects garbage input") {
    auto path = write_test_file("manifest_garbage.json", "not json at all {{{");
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("parse error"), std::runtime_error);
}

TEST_CASE("validate_hierarchy") {
    SUBCASE("consistent three-level manifest has no violations") {
        CHECK(validate_hierarchy(two_class_manifest()).empty());
    }
    SUBCASE("final under two secondaries is one violation naming the final") {
        DatasetManifest m = two_class_manifest();
        m.classes.push_back({2, "warship", "frigate", "arleigh-burke"});
        auto v = validate_hierarchy(m);
        REQUIRE(v.size() == 1);
        CHECK(v.front().find("arleigh-burke") != std::string::npos);
    }
    SUBCASE("empty primary is reported") {
        DatasetManifest m = two_class_manifest();
        m.classes[0].primary = "";
        auto v = validate_hierarchy(m);
        REQUIRE(v.size() == 1);
        CHECK(v.front().find("empty level name") != std::string::npos);
    }
    SUBCASE("duplicate final under the same pair is reported") {
        DatasetManifest m = two_class_manifest();
        m.classes.push_back({2, "warship", "destroyer", "arleigh-burke"});
        auto v = validate_hierarchy(m);
        REQUIRE(v.size() == 1);
        CHECK(v.front().find("duplicate final") != std::string::npos);
    }
    SUBCASE("secondary under two primaries is a violation") {
        DatasetManifest m = two_class_manifest();
        m.classes.push_back({2, "civilian", "destroyer", "some-other"});
        auto v = validate_hierarchy(m);
        REQUIRE(v.size() == 1);
        CHECK(v.front().find("secondary 'destroyer'") != std::string::npos);
    }
}

namespace {

DatasetManifest many_class_manifest(int n) {
    DatasetManifest m;
    m.name = "many";
    for (int i = 0; i < n; ++i) {
        char final[32];
        std::snprintf(final, sizeof(final), "class-%03d", i);
        m.classes.push_back({i, "primary", "secondary", final});
    }
    return m;
}

}  // namespace

TEST_CASE("make_base_new_split") {
    SUBCASE("alphabetical split takes the lexicographically first finals") {
        DatasetManifest m;
        m.name = "tiny";
        m.classes = {{0, "p", "s", "delta"}, {1, "p", "s", "alpha"}, {2, "p", "s", "charlie"},
                     {3, "p", "s", "bravo"}, {4, "p", "s", "echo"}};
        SplitSpec split = make_base_new_split(m, 0.5, SplitOrdering::alphabetical_by_final);
        // ceil(5 * 0.5) = 3 base classes: alpha, bravo, charlie
        CHECK(split.base_class_ids == std::vector<int>{1, 3, 2});
        CHECK(split.new_class_ids == std::vector<int>{0, 4});
    }
    SUBCASE("42 classes at fraction 1/2 gives 21 base and 21 new") {
        SplitSpec split = make_base_new_split(many_class_manifest(42), 0.5, SplitOrdering::alphabetical_by_final);
        CHECK(split.base_class_ids.size() == 21);
        CHECK(split.new_class_ids.size() == 21);
    }
    SUBCASE("two classes split 1/1") {
        SplitSpec split = make_base_new_split(two_class_manifest(), 0.5, SplitOrdering::alphabetical_by_final);
        CHECK(split.base_class_ids.size() == 1);
        CHECK(split.new_class_ids.size() == 1);
        // "arleigh-burke" < "container-ship"
        CHECK(split.base_class_ids.front() == 0);
    }
    SUBCASE("one class is an error") {
        CHECK_THROWS_AS(make_base_new_split(many_class_manifest(1), 0.5, SplitOrdering::manifest_order),
                        std::invalid_argument);
    }
    SUBCASE("fraction that empties one side is an error") {
        CHECK_THROWS_AS(make_base_new_split(two_class_manifest(), 0.99, SplitOrdering::manifest_order),
                        std::invalid_argument);
        CHECK_THROWS_AS(make_base_new_split(two_class_manifest(), 1.0, SplitOrdering::manifest_order),
                        std::invalid_argument);
    }
    SUBCASE("manifest-order keeps declaration order") {
        SplitSpec split = make_base_new_split(many_class_manifest(5), 0.5, SplitOrdering::manifest_order);
        CHECK(split.base_class_ids == std::vector<int>{0, 1, 2});
        CHECK(split.new_class_ids == std::vector<int>{3, 4});
    }
}

TEST_CASE("split invariants: disjoint, covering, deterministic") {
    for (int n : {2, 3, 7, 12, 42}) {
        DatasetManifest m = many_class_manifest(n);
        for (double frac : {0.25, 0.5, 0.75}) {
            if (static_cast<std::size_t>(std::ceil(n * frac)) >= static_cast<std::size_t>(n)) continue;
            SplitSpec a = make_base_new_split(m, frac, SplitOrdering::alphabetical_by_final);
            SplitSpec b = make_base_new_split(m, frac, SplitOrdering::alphabetical_by_final);
            CHECK(a.base_class_ids == b.base_class_ids);
            CHECK(a.new_class_ids == b.new_class_ids);
            std::set<int> all(a.base_class_ids.begin(), a.base_class_ids.end());
            for (int id : a.new_class_ids) CHECK(all.insert(id).second);  // disjoint
            CHECK(all.size() == static_cast<std::size_t>(n));             // covering
        }
    }
}

TEST_CASE("manifest round-trips through save and load") {
    DatasetManifest m = two_class_manifest();
    auto path = test_dir() + "/roundtrip.json";
    save_manifest(m, path);
    DatasetManifest loaded = load_manifest(path);
    CHECK(loaded == m);
    // a second save/load cycle is bit-stable
    auto path2 = test_dir() + "/roundtrip2.json";
    save_manifest(loaded, path2);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
}
