#pragma once

#include "dualmod/config.hpp"
#include "dualmod/data.hpp"

namespace dualmod_test {

// Small configuration with every component present (two backbone stages,
// f=4, both encoders, decay, gate, head) and well under 10k parameters, so
// exhaustive finite-difference checks stay cheap.
inline dualmod::ModelConfig tiny_config() {
  dualmod::ModelConfig c;
  c.backbone_channels = {4, 8};
  c.model_dim = 8;
  c.num_heads = 2;
  c.num_layers = 1;
  c.afm_reduction = 4;
  return c;
}

inline dualmod::Sample tiny_scene(int size, int people, std::uint64_t seed, double brightness = 0.8) {
  dualmod::SceneSpec spec;
  spec.width = size;
  spec.height = size;
  spec.n_people = people;
  spec.seed = seed;
  spec.rgb_brightness = brightness;
  spec.blob_radius = 2.0;
  return dualmod::generate_scene(spec);
}

}  // namespace dualmod_test
