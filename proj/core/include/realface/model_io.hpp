#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "realface/subspace.hpp"
#include "realface/synthesis.hpp"

namespace realface {

/// Everything `fit` produces: the semantic basis, the attacker's fixed
/// residual and reference face, and the eyeglass overlay when the corpus had
/// an eyeglasses mode.
struct FittedModel {
  SemanticBasis basis;
  std::string subject_id;
  Eigen::VectorXd attacker_residual;
  Eigen::VectorXd attacker_face;
  std::optional<OverlayAsset> glasses;
};

/// Fits whitening + discriminant basis. An "eyeglasses" mode is held out of
/// the basis: the "none" half trains it and the overlay is extracted from the
/// difference of the two halves. The attacker reference is the face with
/// every remaining mode at its first label.
FittedModel fit_model(const TrainingCorpus& corpus);

/// "mmda-v1" JSON; arrays are base64 little-endian float64. Identical models
/// serialize to identical bytes.
std::string serialize_model(const FittedModel& model);
FittedModel parse_model(std::string_view text);

void save_model(const std::filesystem::path& path, const FittedModel& model);
FittedModel load_model(const std::filesystem::path& path);

}  // namespace realface
