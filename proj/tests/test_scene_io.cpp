#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "sirenpose/scene_io.hpp"

namespace sp = sirenpose;

namespace {

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    sp::track_from_jsonl(in);
  } catch (const sp::ValidationError& e) {
    return e.what();
  }
  return "";
}

const char* kHeader = R"({"m": 2, "edges": [[0, 1]], "rest_lengths": [1.0]})";

}  // namespace

TEST(TrackIo, RoundTripIsExact) {
  sp::SceneSpec spec;
  spec.scene_template = sp::SceneTemplate::kBiped;
  spec.noise_sigma = 0.013;
  spec.occlusions = {{3, 0.2, 0.9}};
  const auto scene = sp::generate_scene(spec);
  std::istringstream in(sp::track_to_jsonl(scene.observed));
  EXPECT_EQ(sp::track_from_jsonl(in), scene.observed);
  std::istringstream tin(sp::targets_to_jsonl(scene.targets));
  EXPECT_EQ(sp::targets_from_jsonl(tin), scene.targets);
}

TEST(TrackIo, FileRoundTripAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "sirenpose_test_scene_io";
  std::filesystem::create_directories(dir);
  const auto scene = sp::generate_scene(sp::SceneSpec{});
  sp::save_track(scene.ground_truth, dir / "t.jsonl");
  sp::save_targets(scene.targets, dir / "s.jsonl");
  EXPECT_EQ(sp::load_track(dir / "t.jsonl"), scene.ground_truth);
  EXPECT_EQ(sp::load_targets(dir / "s.jsonl"), scene.targets);
  EXPECT_THROW(sp::load_track(dir / "absent.jsonl"), sp::IoError);
  std::filesystem::remove_all(dir);
}

TEST(TrackIo, ErrorsCarryLineNumbers) {
  const std::string good = std::string(kHeader) + "\n" +
                           R"({"t": 0, "pos": [[0,0,0],[1,0,0]], "vis": [true, true]})" + "\n";
  EXPECT_EQ(error_of(good), "");
  EXPECT_NE(error_of(good + "{not json\n").find("line 3: malformed JSON"), std::string::npos);
  EXPECT_NE(error_of(good + R"({"t": 1, "pos": [[0,0,0]], "vis": [true, true]})").find("line 3"),
            std::string::npos);
  EXPECT_NE(error_of(good + R"({"t": 0, "pos": [[0,0,0],[1,0,0]], "vis": [true, true]})")
                .find("line 3: frame 1 time"),
            std::string::npos);
  EXPECT_NE(error_of(good + R"({"pos": [[0,0,0],[1,0,0]], "vis": [true, true]})")
                .find("line 3: missing field 't'"),
            std::string::npos);
  EXPECT_NE(error_of(good + R"({"t": 1, "pos": [[0,0,0],[1,0,"x"]], "vis": [true, true]})")
                .find("coordinate is not a number"),
            std::string::npos);
  EXPECT_NE(error_of(good + R"({"t": 1, "pos": [[0,0,0],[1,0,0]], "vis": [1, true]})").find("boolean"),
            std::string::npos);
}

TEST(TrackIo, BlankLinesSkippedAndHeaderChecked) {
  const std::string text = std::string("\n") + kHeader + "\n\n" +
                           R"({"t": 0, "pos": [[0,0,0],[1,0,0]], "vis": [true, false]})" + "\n";
  std::istringstream in(text);
  const auto track = sp::track_from_jsonl(in);
  EXPECT_EQ(track.num_frames(), 1u);
  EXPECT_FALSE(track.frames[0].visible[1]);
  EXPECT_NE(error_of("").find("missing track header"), std::string::npos);
  EXPECT_NE(error_of(R"({"m": 2, "edges": [[0, 2]], "rest_lengths": [1.0]})").find("line 1: skeleton: edge 0"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"m": 0, "edges": [], "rest_lengths": []})").find("positive integer"),
            std::string::npos);
}

TEST(TargetsIo, SampleCountEnforced) {
  std::istringstream in(R"({"s": 2, "samples_per_bone": 2})"
                        "\n"
                        R"({"t": 0, "samples": [[0,0,0]]})");
  try {
    sp::targets_from_jsonl(in);
    FAIL();
  } catch (const sp::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(SceneSpecIo, RoundTripAndUnknownField) {
  sp::SceneSpec spec;
  spec.scene_template = sp::SceneTemplate::kMultiObject;
  spec.occlusions = {{4, 0.5, 1.0}};
  spec.noise_sigma = 0.02;
  spec.seed = 99;
  EXPECT_EQ(sp::scene_spec_from_json(sp::to_json(spec)), spec);
  auto j = sp::to_json(spec);
  j["colour"] = "red";
  try {
    sp::scene_spec_from_json(j);
    FAIL();
  } catch (const sp::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown field 'colour'"), std::string::npos);
  }
  j = sp::to_json(spec);
  j.erase("duration");
  EXPECT_THROW(sp::scene_spec_from_json(j), sp::ValidationError);
  j = sp::to_json(spec);
  j["template"] = "octopus";
  EXPECT_THROW(sp::scene_spec_from_json(j), sp::ValidationError);
  j = sp::to_json(spec);
  j["duration"] = "long";
  EXPECT_THROW(sp::scene_spec_from_json(j), sp::ValidationError);
}

TEST(SceneSpecIo, SyntaxErrorReportsPosition) {
  const auto path = std::filesystem::temp_directory_path() / "sirenpose_bad_spec.json";
  {
    std::ofstream out(path);
    out << "{\n  \"template\": \"pendulum\",\n  \"duration\": ,\n}\n";
  }
  try {
    sp::load_scene_spec(path);
    FAIL();
  } catch (const sp::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}
