#pragma once

#include <cmath>
#include <utility>

#include "mmsc/dictionary_learning.hpp"
#include "mmsc/sparse_solvers.hpp"
#include "mmsc/types.hpp"

namespace mmsc {

/// Jointly learned audio-video dictionary. Rows are the audio block scaled by
/// 1/sqrt(N_A) followed by the video block scaled by 1/sqrt(N_V).
struct JointDictionary {
  Dictionary inner;
  /// Regularization weight the dictionary was trained with.
  double lambda_joint = 0.0;

  ModalityDims dims() const { return *inner.modality_dims(); }
};

/// [x_a / sqrt(N_A) ; x_v / sqrt(N_V)]
inline Vector fuse_input(const Vector& x_a, const Vector& x_v) {
  detail::require(x_a.size() >= 1 && x_v.size() >= 1, "both modalities need at least one dimension");
  detail::require(x_a.allFinite() && x_v.allFinite(), "fuse_input: non-finite input");
  Vector out(x_a.size() + x_v.size());
  out.head(x_a.size()) = x_a / std::sqrt(static_cast<double>(x_a.size()));
  out.tail(x_v.size()) = x_v / std::sqrt(static_cast<double>(x_v.size()));
  return out;
}

/// Row-wise fuse_input over paired example tables.
inline FeatureMatrix fuse_rows(const FeatureMatrix& audio, const FeatureMatrix& video) {
  detail::require(audio.rows() == video.rows(), "audio and video need the same number of examples");
  detail::require(audio.cols() >= 1 && video.cols() >= 1, "both modalities need at least one dimension");
  FeatureMatrix out(audio.rows(), audio.cols() + video.cols());
  out.leftCols(audio.cols()) = audio / std::sqrt(static_cast<double>(audio.cols()));
  out.rightCols(video.cols()) = video / std::sqrt(static_cast<double>(video.cols()));
  return out;
}

/// lambda' = (1/N_A + 1/N_V) lambda''
inline double lambda_joint_of(double lambda_cross, ModalityDims dims) {
  detail::require(lambda_cross >= 0.0, "lambda'' must be >= 0");
  detail::require(dims.audio >= 1 && dims.video >= 1, "modality dims must be positive");
  return (1.0 / static_cast<double>(dims.audio) + 1.0 / static_cast<double>(dims.video)) * lambda_cross;
}

/// Inverse of lambda_joint_of; the default cross-modal weight for a joint
/// dictionary trained with `lambda_joint`.
inline double lambda_cross_of(double lambda_joint, ModalityDims dims) {
  return lambda_joint / lambda_joint_of(1.0, dims);
}

struct JointLearnResult {
  JointDictionary dictionary;
  TrainStats stats;
};

/// Dictionary learning on fused inputs. `cfg.lambda` is lambda'.
inline JointLearnResult learn_joint(const FeatureMatrix& audio, const FeatureMatrix& video, const LearnConfig& cfg) {
  detail::require(audio.rows() >= 1, "learn_joint needs at least one pair");
  const ModalityDims dims{audio.cols(), video.cols()};
  auto res = learn_dictionary(fuse_rows(audio, video), cfg, dims);
  return {JointDictionary{std::move(res.dictionary), cfg.lambda}, std::move(res.stats)};
}

/// Audio and video blocks of a joint dictionary, rescaled by sqrt(N_A) and
/// sqrt(N_V). The blocks are not unit norm and are flagged accordingly.
inline std::pair<Dictionary, Dictionary> split_joint(const Dictionary& joint) {
  if (!joint.modality_dims()) throw InputError("split_joint: dictionary carries no modality dims");
  const ModalityDims dims = *joint.modality_dims();
  Matrix audio = joint.atoms().topRows(dims.audio) * std::sqrt(static_cast<double>(dims.audio));
  Matrix video = joint.atoms().bottomRows(dims.video) * std::sqrt(static_cast<double>(dims.video));
  return {Dictionary(std::move(audio), false), Dictionary(std::move(video), false)};
}

inline std::pair<Dictionary, Dictionary> split_joint(const JointDictionary& jd) { return split_joint(jd.inner); }

/// Column-wise fuse scaling of two split blocks; inverse of split_joint.
inline Matrix refuse_blocks(const Dictionary& audio, const Dictionary& video) {
  detail::require(audio.atom_count() == video.atom_count(), "blocks must have the same atom count");
  Matrix out(audio.input_dim() + video.input_dim(), audio.atom_count());
  out.topRows(audio.input_dim()) = audio.atoms() / std::sqrt(static_cast<double>(audio.input_dim()));
  out.bottomRows(video.input_dim()) = video.atoms() / std::sqrt(static_cast<double>(video.input_dim()));
  return out;
}

/// LASSO coding of one modality against its block of a joint dictionary.
inline SparseCode encode_cross_modal(const Vector& x, const Dictionary& split_block, double lambda_cross,
                                     double tol = 1e-8, int max_iter = 1000) {
  return lasso_encode(x, split_block, SolverConfig{lambda_cross, tol, max_iter});
}

/// [y_a ; y_v]
inline Vector union_features(const Vector& y_a, const Vector& y_v) {
  detail::require(y_a.allFinite() && y_v.allFinite(), "union_features: non-finite input");
  Vector out(y_a.size() + y_v.size());
  out << y_a, y_v;
  return out;
}

}  // namespace mmsc
