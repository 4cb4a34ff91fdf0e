#include <doctest.h>

#include "coea/errors.hpp"
#include "coea/grouping.hpp"

using namespace coea;

TEST_SUITE("grouping") {

TEST_CASE("groups partition users and sort by csid") {
    std::map<UserId, GroupCSID> assign{
        {"u1", {1, 0}}, {"u2", {0, 2}}, {"u3", {1, 0}}, {"u4", {0, 2}}, {"u5", {0, 10}}};
    std::map<UserId, Vec> reps{{"u1", {1.0, 0.0}},
                               {"u2", {0.0, 1.0}},
                               {"u3", {3.0, 0.0}},
                               {"u4", {0.0, 3.0}},
                               {"u5", {5.0, 5.0}}};
    auto groups = build_groups(assign, reps);
    REQUIRE(groups.size() == 3);
    CHECK(groups[0].csid == GroupCSID{0, 2});
    CHECK(groups[1].csid == GroupCSID{0, 10});  // lexicographic on tuples, not strings
    CHECK(groups[2].csid == GroupCSID{1, 0});
    CHECK(groups[0].members == std::vector<UserId>{"u2", "u4"});
    CHECK(groups[2].members == std::vector<UserId>{"u1", "u3"});
    // Centroid is the member mean.
    CHECK(groups[2].centroid[0] == doctest::Approx(2.0));
    CHECK(groups[2].centroid[1] == doctest::Approx(0.0));

    reps.erase("u5");
    CHECK_THROWS_AS((void)build_groups(assign, reps), DataError);
}

TEST_CASE("representatives are the k members closest to the centroid") {
    SemanticGroup g;
    g.csid = {0};
    g.members = {"a", "b", "c", "d"};
    g.centroid = {0.0};
    std::map<UserId, Vec> reps{{"a", {4.0}}, {"b", {1.0}}, {"c", {-2.0}}, {"d", {3.0}}};
    auto top2 = select_representatives(g, reps, 2);
    CHECK(top2 == std::vector<UserId>{"b", "c"});

    // Ties break by user id.
    reps["d"] = {-1.0};
    reps["a"] = {1.0};
    auto tied = select_representatives(g, reps, 3);
    CHECK(tied == std::vector<UserId>{"a", "b", "d"});

    auto all = select_representatives(g, reps, 10);
    CHECK(all.size() == 4);
}

TEST_CASE("default group is the largest with csid-order ties") {
    SemanticGroup g1{{2, 1}, {"a", "b"}, {}};
    SemanticGroup g2{{0, 5}, {"c", "d"}, {}};
    SemanticGroup g3{{1, 1}, {"e"}, {}};
    CHECK(default_group({g1, g2, g3}) == GroupCSID{0, 5});
    SemanticGroup g4{{3, 0}, {"f", "g", "h"}, {}};
    CHECK(default_group({g1, g2, g3, g4}) == GroupCSID{3, 0});
    CHECK_THROWS_AS((void)default_group({}), DataError);
}

TEST_CASE("group table flattens whitespace in profile text") {
    SemanticGroup g{{1, 2}, {"u1", "u2"}, {}};
    GroupProfile p{{1, 2}, {"u1"}, "line one\nline\ttwo"};
    std::string table = format_group_table({g}, {p});
    CHECK(table == "1-2\t2\tu1\tline one line two\n");
}

}  // TEST_SUITE
