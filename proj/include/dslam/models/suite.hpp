#pragma once

#include <stdexcept>
#include <string>

#include "dslam/core/checkpoint.hpp"
#include "dslam/models/mapping.hpp"
#include "dslam/models/observation.hpp"
#include "dslam/models/transition.hpp"

namespace dslam {

// The T/M/Z grid: each of the transition, mapping and observation models in
// learned or handcrafted form.
struct SuiteConfig {
  ModelMode transition = ModelMode::Handcrafted;
  ModelMode mapping = ModelMode::Handcrafted;
  ModelMode observation = ModelMode::Handcrafted;
  bool occupancy = true;
  int n_latent = 0;
  MapGeometry geom;
  ObservationConfig obs;
  MotionNoiseModel noise;  // ground truth for the handcrafted transition
  MotionConfig motion;
  uint64_t init_seed = 1;

  std::string tmz() const {
    return std::string(mode_letter(transition)) + mode_letter(mapping) +
           mode_letter(observation);
  }
};

struct ModelSuite {
  SuiteConfig cfg;
  ParamStore store;
  TransitionModel transition;
  MappingModel mapping;
  ObservationModel observation;

  int map_channels() const { return mapping.n_channels(); }
};

inline ModelSuite make_suite(const SuiteConfig& cfg) {
  if (cfg.observation == ModelMode::Handcrafted && !cfg.occupancy)
    throw std::invalid_argument("handcrafted observation model needs an occupancy channel");
  if (cfg.mapping == ModelMode::Handcrafted && (!cfg.occupancy || cfg.n_latent != 0))
    throw std::invalid_argument("handcrafted mapping model is occupancy+visibility only");
  ModelSuite s;
  s.cfg = cfg;
  Rng rng = Rng(cfg.init_seed).split("suite-init");

  s.transition = cfg.transition == ModelMode::Learned
                     ? TransitionModel::learned(s.store, rng, cfg.motion)
                     : TransitionModel::handcrafted(cfg.noise, cfg.motion);

  MappingConfig mc;
  mc.geom = cfg.geom;
  mc.occupancy = cfg.occupancy;
  mc.n_latent = cfg.n_latent;
  s.mapping = cfg.mapping == ModelMode::Learned ? MappingModel::learned(s.store, rng, mc)
                                                : MappingModel::handcrafted(cfg.geom);

  ObservationConfig oc = cfg.obs;
  s.observation = cfg.observation == ModelMode::Learned
                      ? ObservationModel::learned(s.store, rng, s.mapping.n_channels(), oc)
                      : ObservationModel::handcrafted(oc);
  return s;
}

inline void save_suite(const ModelSuite& suite, const std::string& path) {
  save_checkpoint(path, suite.store);
}

inline void load_suite(ModelSuite& suite, const std::string& path) {
  load_checkpoint_into(path, suite.store);
}

}  // namespace dslam
