#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "acort/attention.hpp"
#include "acort/tensor.hpp"

namespace acort {

inline constexpr std::array<std::string_view, 4> kShapes = {"circle", "square", "triangle", "star"};
inline constexpr std::array<std::string_view, 4> kColors = {"red", "blue", "green", "yellow"};
inline constexpr std::array<std::string_view, 2> kSizes = {"small", "big"};

inline constexpr int kMinObjects = 1;
inline constexpr int kMaxObjects = 5;
/// Slots used by attributes and box before padding.
inline constexpr int kFeatureSlots = 14;

struct SceneObject {
  int shape = 0;  // index into kShapes
  int color = 0;
  int size = 0;
  BoxGeometry box;

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::int64_t id = 0;
  std::vector<SceneObject> objects;
  std::vector<std::string> caption;

  bool operator==(const Scene&) const = default;
};

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<Scene> test;
};

/// "a {size} {color} {shape}" per object, left to right by box center,
/// joined with "and".
std::vector<std::string> caption_for(const std::vector<SceneObject>& objects);

/// Attribute tuple (shape, color, size) of every object named in a caption,
/// in caption order. Throws std::invalid_argument on text the template
/// grammar cannot produce.
std::vector<std::array<int, 3>> parse_caption(const std::vector<std::string>& words);

/// All words the template grammar can emit.
std::vector<std::string> toy_words();

Scene generate_scene(std::int64_t id, std::uint64_t seed);
/// Deterministic in `seed`; ids run 0.. across train, val, test in order.
Dataset generate_dataset(std::uint64_t seed, int n_train, int n_val, int n_test);

/// One row per object: one-hot shape (slots 0-3), color (4-7), size (8-9),
/// zero padding, plus Gaussian noise seeded by (noise_seed, scene id). Boxes
/// reach the model separately, through scene_boxes.
Tensor scene_features(const Scene& scene, int feature_dim, double noise, std::uint64_t noise_seed = 0);
std::vector<BoxGeometry> scene_boxes(const Scene& scene);

/// JSON lines with fields id, objects, caption in that order.
void write_scenes(std::ostream& out, const std::vector<Scene>& scenes);
std::vector<Scene> read_scenes(std::istream& in);
void write_scenes_file(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> read_scenes_file(const std::string& path);

std::vector<std::string> scene_captions(const std::vector<Scene>& scenes);

}  // namespace acort
