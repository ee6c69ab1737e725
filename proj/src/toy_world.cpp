#include "acort/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "acort/vocab_radix.hpp"

namespace acort {

namespace {

constexpr double kMinSeparation = 0.1;

int lookup(std::string_view word, std::span<const std::string_view> table, const char* what) {
  auto it = std::find(table.begin(), table.end(), word);
  if (it == table.end()) throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(word) + "'");
  return static_cast<int>(it - table.begin());
}

}  // namespace

std::vector<std::string> caption_for(const std::vector<SceneObject>& objects) {
  std::vector<const SceneObject*> order;
  for (const auto& o : objects) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(),
                   [](const SceneObject* a, const SceneObject* b) { return a->box.cx < b->box.cx; });
  std::vector<std::string> words;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0) words.emplace_back("and");
    words.emplace_back("a");
    words.emplace_back(kSizes.at(static_cast<std::size_t>(order[i]->size)));
    words.emplace_back(kColors.at(static_cast<std::size_t>(order[i]->color)));
    words.emplace_back(kShapes.at(static_cast<std::size_t>(order[i]->shape)));
  }
  return words;
}

std::vector<std::array<int, 3>> parse_caption(const std::vector<std::string>& words) {
  std::vector<std::array<int, 3>> out;
  std::size_t i = 0;
  while (i < words.size()) {
    if (!out.empty()) {
      if (words[i] != "and") throw std::invalid_argument("expected 'and' at word " + std::to_string(i));
      ++i;
    }
    if (i + 4 > words.size()) throw std::invalid_argument("truncated object phrase");
    if (words[i] != "a") throw std::invalid_argument("expected 'a' at word " + std::to_string(i));
    const int size = lookup(words[i + 1], kSizes, "size");
    const int color = lookup(words[i + 2], kColors, "color");
    const int shape = lookup(words[i + 3], kShapes, "shape");
    out.push_back({shape, color, size});
    i += 4;
  }
  if (out.empty()) throw std::invalid_argument("empty caption");
  return out;
}

std::vector<std::string> toy_words() {
  std::vector<std::string> words{"a", "and"};
  for (auto s : kSizes) words.emplace_back(s);
  for (auto c : kColors) words.emplace_back(c);
  for (auto s : kShapes) words.emplace_back(s);
  return words;
}

Scene generate_scene(std::int64_t id, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(static_cast<std::uint64_t>(id) >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> count_dist(kMinObjects, kMaxObjects);
  std::uniform_int_distribution<int> shape_dist(0, static_cast<int>(kShapes.size()) - 1);
  std::uniform_int_distribution<int> color_dist(0, static_cast<int>(kColors.size()) - 1);
  std::uniform_int_distribution<int> size_dist(0, static_cast<int>(kSizes.size()) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Scene scene;
  scene.id = id;
  const int n = count_dist(rng);
  // Keep centers apart so the left-to-right order is unambiguous. A crowded
  // draw can leave no room, in which case the whole layout is redrawn.
  while (static_cast<int>(scene.objects.size()) < n) {
    SceneObject o;
    o.shape = shape_dist(rng);
    o.color = color_dist(rng);
    o.size = size_dist(rng);
    const double extent = o.size == 0 ? 0.08 + 0.06 * unit(rng) : 0.16 + 0.08 * unit(rng);
    o.box.w = extent;
    o.box.h = extent * (0.8 + 0.4 * unit(rng));
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      o.box.cx = o.box.w / 2 + (1.0 - o.box.w) * unit(rng);
      placed = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& other) {
        return std::abs(other.box.cx - o.box.cx) >= kMinSeparation;
      });
    }
    if (!placed) {
      scene.objects.clear();
      continue;
    }
    o.box.cy = o.box.h / 2 + (1.0 - o.box.h) * unit(rng);
    scene.objects.push_back(o);
  }
  scene.caption = caption_for(scene.objects);
  return scene;
}

Dataset generate_dataset(std::uint64_t seed, int n_train, int n_val, int n_test) {
  if (n_train < 0 || n_val < 0 || n_test < 0) throw std::invalid_argument("split sizes must be non-negative");
  Dataset d;
  std::int64_t id = 0;
  for (int i = 0; i < n_train; ++i) d.train.push_back(generate_scene(id++, seed));
  for (int i = 0; i < n_val; ++i) d.val.push_back(generate_scene(id++, seed));
  for (int i = 0; i < n_test; ++i) d.test.push_back(generate_scene(id++, seed));
  return d;
}

Tensor scene_features(const Scene& scene, int feature_dim, double noise, std::uint64_t noise_seed) {
  if (feature_dim < 16) throw std::invalid_argument("feature_dim must be at least 16");
  if (noise < 0.0) throw std::invalid_argument("noise must be non-negative");
  const std::size_t n = scene.objects.size();
  Tensor f({n, static_cast<std::size_t>(feature_dim)});
  for (std::size_t i = 0; i < n; ++i) {
    const SceneObject& o = scene.objects[i];
    auto row = f.row(i);
    row[static_cast<std::size_t>(o.shape)] = 1.0;
    row[4 + static_cast<std::size_t>(o.color)] = 1.0;
    row[8 + static_cast<std::size_t>(o.size)] = 1.0;
  }
  if (noise > 0.0) {
    std::seed_seq seq{static_cast<std::uint32_t>(noise_seed), static_cast<std::uint32_t>(noise_seed >> 32),
                      static_cast<std::uint32_t>(scene.id),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(scene.id) >> 32), 0x6e6f6973u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> dist(0.0, noise);
    for (auto& v : f.data()) v += dist(rng);
  }
  return f;
}

std::vector<BoxGeometry> scene_boxes(const Scene& scene) {
  std::vector<BoxGeometry> boxes;
  for (const auto& o : scene.objects) boxes.push_back(o.box);
  return boxes;
}

void write_scenes(std::ostream& out, const std::vector<Scene>& scenes) {
  for (const auto& s : scenes) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["objects"] = nlohmann::ordered_json::array();
    for (const auto& o : s.objects) {
      nlohmann::ordered_json oj;
      oj["shape"] = kShapes.at(static_cast<std::size_t>(o.shape));
      oj["color"] = kColors.at(static_cast<std::size_t>(o.color));
      oj["size"] = kSizes.at(static_cast<std::size_t>(o.size));
      oj["box"] = {o.box.cx, o.box.cy, o.box.w, o.box.h};
      j["objects"].push_back(std::move(oj));
    }
    j["caption"] = join_words(s.caption);
    out << j.dump() << '\n';
  }
}

std::vector<Scene> read_scenes(std::istream& in) {
  std::vector<Scene> scenes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Scene s;
      s.id = j.at("id").get<std::int64_t>();
      for (const auto& oj : j.at("objects")) {
        SceneObject o;
        o.shape = lookup(oj.at("shape").get<std::string>(), kShapes, "shape");
        o.color = lookup(oj.at("color").get<std::string>(), kColors, "color");
        o.size = lookup(oj.at("size").get<std::string>(), kSizes, "size");
        const auto& box = oj.at("box");
        if (!box.is_array() || box.size() != 4) throw std::invalid_argument("box must hold 4 numbers");
        o.box = BoxGeometry{box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
        if (!(o.box.w > 0.0) || !(o.box.h > 0.0)) throw std::invalid_argument("box extent must be positive");
        s.objects.push_back(o);
      }
      s.caption = tokenize(j.at("caption").get<std::string>());
      scenes.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("scene file line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("scene file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return scenes;
}

void write_scenes_file(const std::string& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_scenes(out, scenes);
}

std::vector<Scene> read_scenes_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file '" + path + "'");
  return read_scenes(in);
}

std::vector<std::string> scene_captions(const std::vector<Scene>& scenes) {
  std::vector<std::string> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(join_words(s.caption));
  return out;
}

}  // namespace acort
