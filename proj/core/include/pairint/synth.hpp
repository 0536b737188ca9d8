#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pairint/data.hpp"
#include "pairint/flow.hpp"
#include "pairint/image.hpp"
#include "pairint/nn/tensor.hpp"

namespace pairint::synth {

/// Motion and posture signature of each class, plus the spacing rules.
struct ClassBands {
  double walk_speed_min = 1.0;
  double walk_speed_max = 4.0;
  double static_speed_max = 0.2;
  double walk_aspect_min = 2.0;
  double walk_aspect_max = 2.8;
  double stand_aspect_min = 2.2;
  double stand_aspect_max = 3.0;
  double sit_aspect_min = 1.0;
  double sit_aspect_max = 1.6;
  /// Interacting centers lie within proximity x mean box height.
  double proximity = 1.5;
  /// Persons of different groups stay farther apart than separation x mean box height.
  double separation = 2.5;
};

/// Person indices refer to [0, n_persons); track ids are index + 1.
struct Interaction {
  int a = 0;
  int b = 0;
  InteractionClass cls = InteractionClass::WalkingTogether;
};

struct SceneSpec {
  std::string name = "synth";
  int n_persons = 6;
  /// Must decompose into cliques whose pairs all share one class.
  std::vector<Interaction> blueprint;
  int frames = 60;
  int width = 640;
  int height = 480;
  std::uint64_t seed = 0;
  ClassBands bands;
  double min_box_width = 18.0;
  double max_box_width = 28.0;
  /// Minimum gap between any box and the image border.
  double edge_margin = 10.0;
  double fps = 15.0;
  int max_attempts = 200;
};

struct RenderSpec {
  std::uint64_t texture_seed = 0;
  double background_amplitude = 0.25;
  double texture_contrast = 0.35;
};

/// Generates trajectories and labels. Every frame carries a `render` hook so
/// pixels are produced on demand. Throws UnsatisfiableSpec.
SceneSequence gen_scene(const SceneSpec& spec, const RenderSpec& render = {});

/// Draws frames from the boxes of a sequence: frozen background noise plus one
/// translated texture per person, nearer (larger bottom) persons on top.
/// Intensities are quantized to 8 bits so PNG round trips are lossless.
class SceneRenderer {
 public:
  SceneRenderer(const SceneSequence& scene, const RenderSpec& spec, std::uint64_t scene_seed);

  GrayImage render(std::size_t frame_index) const;
  std::size_t frame_count() const noexcept { return frames_.size(); }

 private:
  struct Wave {
    double kx, ky, phase, amp;
  };
  struct Texture {
    double base;
    std::vector<Wave> waves;
  };

  const Texture& texture_of(int track_id) const;

  int width_ = 0;
  int height_ = 0;
  std::shared_ptr<const GrayImage> background_;
  std::vector<std::vector<PersonObs>> frames_;
  std::vector<std::pair<int, Texture>> textures_;
};

std::vector<GrayImage> render_frames(const SceneSequence& scene, const RenderSpec& spec, std::uint64_t scene_seed = 0);

/// Exact motion from frame t to t + 1: each covered pixel carries the
/// displacement of the topmost person there, background is static.
FlowField ground_truth_flow(const SceneSequence& scene, std::size_t t);

struct RandomSceneOptions {
  int min_persons = 4;
  int max_persons = 8;
  int frames = 60;
  int width = 640;
  int height = 480;
  /// Upper bound on groups plus loners, keeps the spacing rules satisfiable.
  int max_entities = 5;
};

SceneSpec random_scene_spec(nn::Rng& rng, const RandomSceneOptions& opts);

struct CorpusSpec {
  int scenes = 10;
  RandomSceneOptions scene;
  std::uint64_t seed = 0;
  std::string prefix = "scene";
};

Dataset generate_corpus(const CorpusSpec& spec);

/// <dir>/<scene>/annotations.jsonl, frames/NNNNNN.png and, when requested,
/// flow/NNNNNN.flo holding the exact flow from frame N to N + 1.
void write_corpus(const Dataset& corpus, const std::filesystem::path& dir, bool with_flow = true);

}  // namespace pairint::synth
