#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "milagro/errors.hpp"
#include "milagro/harness.hpp"
#include "milagro/scene.hpp"

using namespace milagro;
using scene::Band;
using scene::Pose;
using scene::Scene;

namespace {

Scene small_valid_scene() {
    Scene scn;
    scn.room_dims = {6.0, 4.0, 3.0};
    scn.walls = scene::default_walls();
    scn.psta.id = "psta";
    scn.psta.position = {5.0, 3.0, 1.0};
    scn.psta.band = Band::Sub7;
    scn.psta.carrier_freq_hz = 5.24e9;
    scene::RadioNode ap;
    ap.id = "ap";
    ap.position = {0.5, 0.5, 1.5};
    ap.band = Band::Sub7;
    ap.carrier_freq_hz = 5.24e9;
    scn.aps = {ap};
    return scn;
}

}  // namespace

TEST_CASE("validate_scene: empty valid room passes") {
    const Scene scn = small_valid_scene();
    CHECK(scene::validate_scene(scn).empty());
}

TEST_CASE("validate_scene: target outside the room is one named violation") {
    Scene scn = small_valid_scene();
    scene::Target t;
    t.id = "t";
    t.position = {-1.0, 0.0, 0.0};
    t.pose = Pose::Stand;
    scn.targets = {t};
    const auto v = scene::validate_scene(scn);
    REQUIRE(v.size() == 1);
    CHECK(v[0].field == "targets[0]");
    CHECK(v[0].rule.find("outside room") != std::string::npos);
}

TEST_CASE("validate_scene: wall reflection above 1 is a range violation") {
    Scene scn = small_valid_scene();
    scn.walls[0].reflection.sub7_db = 1.2;
    const auto v = scene::validate_scene(scn);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule.find("[0, 1]") != std::string::npos);
}

TEST_CASE("validate_scene: carrier ranges and beacon interval") {
    Scene scn = small_valid_scene();
    scn.aps[0].carrier_freq_hz = 10e9;  // outside Sub7
    CHECK(scene::validate_scene(scn).size() == 1);
    scn.aps[0].carrier_freq_hz = 5.24e9;
    scn.aps[0].beacon_interval_s = 0.0;
    CHECK(scene::validate_scene(scn).size() == 1);
}

TEST_CASE("occupancy labels: bitmask definition") {
    const auto sc = harness::make_workstation16();
    const auto& tax = sc.taxonomy;
    REQUIRE(tax.fine_count() == 16);
    CHECK(tax.fine_labels[0] == "0000");
    CHECK(tax.fine_labels[10] == "1010");

    Scene scn = sc.base_scene;
    CHECK(scene::label_of(scn, tax) == 0);  // all absent -> 0000

    // workstations 1 and 3 occupied -> mask 1010 -> index 10
    scene::Target t1, t3;
    t1.id = "a";
    t1.position = tax.anchors[0];
    t1.pose = Pose::Sit;
    t3.id = "b";
    t3.position = tax.anchors[2];
    t3.pose = Pose::Sit;
    scn.targets = {t1, t3};
    CHECK(scene::label_of(scn, tax) == 10);

    // absent poses contribute nothing
    scn.targets[0].pose = Pose::Absent;
    CHECK(scene::label_of(scn, tax) == 2);  // 0010
}

TEST_CASE("label_of ignores obstacles and radios") {
    const auto sc = harness::make_workstation16();
    Scene scn = sc.base_scene;
    scene::Target t;
    t.id = "t";
    t.position = sc.taxonomy.anchors[1];
    t.pose = Pose::Sit;
    scn.targets = {t};
    const int before = scene::label_of(scn, sc.taxonomy);
    scn.obstacles.clear();
    scn.aps[0].position = {1.0, 1.0, 1.0};
    CHECK(scene::label_of(scn, sc.taxonomy) == before);
}

TEST_CASE("corridor tile indexing is row-major over a 14x3 grid") {
    const auto sc = harness::make_corridor();
    const auto& tax = sc.taxonomy;
    REQUIRE(tax.fine_count() == 14 * 3 + 1);  // 43 including the empty label

    // exhaustive oracle: every tile center maps back to row*3+col
    for (int row = 0; row < 14; ++row)
        for (int col = 0; col < 3; ++col) {
            const int expect = row * 3 + col;
            const auto center = tax.grid.tile_center(expect);
            const auto got = tax.grid.tile_of(center);
            REQUIRE(got.has_value());
            CHECK(*got == expect);
        }

    // target on tile row 7, column 2
    Scene scn = sc.base_scene;
    scene::Target t;
    t.id = "w";
    t.position = tax.grid.tile_center(7 * 3 + 2);
    t.pose = Pose::Stand;
    scn.targets = {t};
    CHECK(scene::label_of(scn, tax) == 7 * 3 + 2);
    CHECK(7 * 3 + 2 == 23);

    scn.targets.clear();
    CHECK(scene::label_of(scn, tax) == 42);  // empty corridor

    scene::Target t2 = t;
    t2.id = "w2";
    t2.position = tax.grid.tile_center(9);
    scn.targets = {t, t2};
    CHECK_THROWS_AS(scene::label_of(scn, tax), AmbiguousLabel);
}

TEST_CASE("taxonomy cardinalities: 16, 4 and 43") {
    CHECK(harness::make_workstation16().taxonomy.fine_count() == 16);
    CHECK(harness::make_pose4(0).taxonomy.fine_count() == 4);
    CHECK(harness::make_corridor().taxonomy.fine_count() == 43);
    CHECK(harness::make_occupancy(2).taxonomy.fine_count() == 4);
    CHECK(harness::make_occupancy(3).taxonomy.fine_count() == 8);
}

TEST_CASE("taxonomy coarse maps are surjective") {
    for (const auto& name : harness::preset_names()) {
        const auto sc = harness::preset_by_name(name);
        const auto& tax = sc.taxonomy;
        std::vector<bool> hit(static_cast<std::size_t>(tax.coarse_count()), false);
        REQUIRE(static_cast<int>(tax.coarse_map.size()) == tax.fine_count());
        for (int f = 0; f < tax.fine_count(); ++f) {
            REQUIRE(tax.coarse_of(f) >= 0);
            REQUIRE(tax.coarse_of(f) < tax.coarse_count());
            hit[static_cast<std::size_t>(tax.coarse_of(f))] = true;
        }
        for (bool h : hit) CHECK(h);
        CHECK(tax.coarse_count() <= tax.fine_count());
    }
}

TEST_CASE("perturb_scene: no matching obstacles leaves the scene identical") {
    Scene scn = small_valid_scene();  // zero carton boxes
    const auto out = scene::perturb_scene(scn, scene::PerturbLevel::Minor, 7);
    CHECK(scene::scene_to_json(out) == scene::scene_to_json(scn));
}

TEST_CASE("perturb_scene is deterministic per seed") {
    const auto sc = harness::make_workstation16();
    for (auto level : {scene::PerturbLevel::Minor, scene::PerturbLevel::Mid,
                       scene::PerturbLevel::Major, scene::PerturbLevel::NewScenario}) {
        const auto a = scene::perturb_scene(sc.base_scene, level, 42);
        const auto b = scene::perturb_scene(sc.base_scene, level, 42);
        CHECK(scene::scene_to_json(a) == scene::scene_to_json(b));
        const auto c = scene::perturb_scene(sc.base_scene, level, 43);
        if (level != scene::PerturbLevel::Minor || !sc.base_scene.obstacles.empty())
            CHECK(scene::scene_to_json(a) != scene::scene_to_json(c));
    }
}

TEST_CASE("perturb_scene Major adds 2..4 furniture pieces, all levels stay valid") {
    const auto sc = harness::make_workstation16();
    const std::size_t before = sc.base_scene.obstacles.size();
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto major = scene::perturb_scene(sc.base_scene, scene::PerturbLevel::Major, seed);
        const std::size_t added = major.obstacles.size() - before;
        CHECK(added >= 2);
        CHECK(added <= 4);
        CHECK(scene::validate_scene(major).empty());
        for (auto level : {scene::PerturbLevel::Minor, scene::PerturbLevel::Mid,
                           scene::PerturbLevel::NewScenario}) {
            const auto out = scene::perturb_scene(sc.base_scene, level, seed);
            CHECK(scene::validate_scene(out).empty());
        }
    }
}

TEST_CASE("minor perturbation moves carton boxes at most 0.5 m") {
    const auto sc = harness::make_workstation16();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto out = scene::perturb_scene(sc.base_scene, scene::PerturbLevel::Minor, seed);
        for (std::size_t i = 0; i < out.obstacles.size(); ++i) {
            const auto& a = sc.base_scene.obstacles[i];
            const auto& b = out.obstacles[i];
            const double moved = distance(a.box.lo, b.box.lo);
            if (a.kind == scene::ObstacleKind::CartonBox)
                CHECK(moved <= 0.5 + 1e-9);
            else
                CHECK(moved == 0.0);
        }
    }
}

TEST_CASE("scene JSON round-trips and hashing is content-based") {
    const auto sc = harness::make_workstation16();
    const std::string j = scene::scene_to_json(sc.base_scene);
    const Scene back = scene::scene_from_json(j);
    CHECK(scene::scene_to_json(back) == j);
    CHECK(scene::scene_hash(back) == scene::scene_hash(sc.base_scene));

    Scene tweaked = back;
    tweaked.psta.position.x += 0.01;
    CHECK(scene::scene_hash(tweaked) != scene::scene_hash(back));

    CHECK_THROWS_AS(scene::scene_from_json("{ not json"), SceneInvalid);
    CHECK_THROWS_AS(scene::scene_from_json("{\"schema\": 2}"), SchemaVersionMismatch);
}

TEST_CASE("taxonomy JSON round-trips") {
    const auto sc = harness::make_corridor();
    const std::string j = scene::taxonomy_to_json(sc.taxonomy);
    const auto back = scene::taxonomy_from_json(j);
    CHECK(scene::taxonomy_to_json(back) == j);
    CHECK(back.fine_count() == 43);
    CHECK(back.grid.rows == 14);
}

TEST_CASE("pose label mapping matches the four pose classes") {
    const auto sc = harness::make_pose4(0);
    Scene scn = sc.base_scene;
    scene::Target t;
    t.id = "p";
    t.position = sc.taxonomy.anchors[0];

    t.pose = Pose::Sit;
    scn.targets = {t};
    CHECK(scene::label_of(scn, sc.taxonomy) == 0);
    scn.targets[0].pose = Pose::Stand;
    CHECK(scene::label_of(scn, sc.taxonomy) == 1);
    scn.targets[0].pose = Pose::LyingDown;
    CHECK(scene::label_of(scn, sc.taxonomy) == 2);
    scn.targets.clear();
    CHECK(scene::label_of(scn, sc.taxonomy) == 3);
}
