#pragma once

// Seeded synthetic models standing in for real case-study data.
//
//   leukemia-like: gaussian, intercept + 2 covariates, besag field on a
//                  width x height grid plus an iid effect per region, two
//                  observations per region; theta = (noise, spatial, iid).
//   grid2d:        poisson, intercept + besag field on a side x side grid.
//   conjugate:     y_i = x_i + e_i, e_i ~ N(0, 1), x ~ N(0, exp(-theta) I).
//
// theta_true is drawn uniformly within 0.5 of (log 4, 0, log 4),
// (log 4) and (0) respectively.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pinla/model.hpp"

namespace pinla {

enum class SynthKind { LeukemiaLike, Grid2d, Conjugate };
SynthKind parse_synth_kind(const std::string& name);
std::string to_string(SynthKind kind);

struct SynthOptions {
  SynthKind kind = SynthKind::LeukemiaLike;
  Index width = 80;   // leukemia-like
  Index height = 50;  // leukemia-like
  Index size = 0;     // grid2d side (default 30), conjugate n (default 1)
  std::uint64_t seed = 1;
};

struct SynthResult {
  ModelSpec spec;
  ModelData data;
  Vector theta_true;
  Vector x_true;
  nlohmann::json model_doc;
  nlohmann::json truth_doc;
  std::string data_csv;
  std::vector<std::pair<std::string, std::string>> extra_files;  // (file name, contents)

  std::shared_ptr<const Model> model() const { return Model::build(spec, data); }
};

SynthResult synthesize(const SynthOptions& options);

// Writes model.json, data.csv, truth.json and any graph files into `dir`.
void write_synth(const SynthResult& result, const std::string& dir);

AdjacencyGraph grid_graph(Index width, Index height);

}  // namespace pinla
