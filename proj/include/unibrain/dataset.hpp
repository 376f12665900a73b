// Synthetic multi-subject dataset: stimuli are (class, geometry) parameter
// vectors, recordings are smooth mixtures of a shared nonlinear latent code,
// and a frozen deterministic teacher provides alignment targets in place of a
// pretrained vision-language encoder.
//
// On-disk layout under one dataset directory:
//   manifest.json          bookkeeping + integrity checksums
//   stimuli.json           all stimulus parameter records
//   teacher.bin            per stimulus: image tokens then text tokens (LE f32)
//   subj_<id>/voxels.bin   recordings concatenated in stimulus-id order (LE f32)
#pragma once

#include "unibrain/common.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace unibrain {

struct StimulusSpec {
  int stimulus_id = 0;
  int class_id = 0;
  std::vector<float> geometry_params;  // each in [-1, 1]
};

struct SubjectProfile {
  int subject_id = 0;
  int voxel_count = 0;          // D_i
  Matf mixing_matrix;           // (D_i x d_f)
  float noise_sigma = 0.0f;
};

struct TeacherFeatures {
  Matf image_tokens;  // (T_g x D_b)
  Matf text_tokens;   // (T_s x D_b)
};

struct TeacherConfig {
  uint64_t seed = 1;
  int n_classes = 20;   // C
  int geometry_dim = 8; // P
  int t_g = 17;
  int t_s = 9;
  int d_b = 64;
};

// Frozen affine teacher. Image tokens see class and geometry; text tokens see
// class only. Identical spec + config always yields identical tokens.
class TeacherEncoder {
 public:
  explicit TeacherEncoder(const TeacherConfig& cfg);

  TeacherFeatures encode(const StimulusSpec& spec) const;
  const TeacherConfig& config() const { return cfg_; }

 private:
  TeacherConfig cfg_;
  Matf img_map_;     // ((C+P) x T_g*D_b)
  Matf img_offset_;  // (T_g x D_b)
  Matf txt_map_;     // (C x T_s*D_b)
  Matf txt_offset_;  // (T_s x D_b)
};

TeacherFeatures teacher_encode(const StimulusSpec& spec, const TeacherConfig& cfg);

struct DataGenConfig {
  std::string out_dir;
  uint64_t seed = 7;
  int n_subjects = 4;
  int samples_per_subject = 2000;  // M_i
  int n_classes = 20;              // C
  int geometry_dim = 8;            // P
  int latent_dim = 32;             // d_f
  int d_min = 500;                 // D_i sampling range
  int d_max = 1024;
  std::vector<int> voxel_counts;   // optional explicit D_i per subject
  float sigma_subject = 0.1f;      // cross-subject mixing variability
  float noise_sigma = 0.05f;       // per-recording measurement noise
  float split_fraction = 0.1f;     // test fraction of unique stimuli
  float stimulus_overlap = 1.0f;   // fraction of each subject's stimuli drawn from the shared pool
  TeacherConfig teacher;           // seed is derived from the master seed
};

struct ManifestSubject {
  int id = 0;
  int voxel_count = 0;
  int n_samples = 0;
  std::vector<int> stimulus_ids;  // sorted ascending; voxels.bin row order
  std::string checksum;
};

struct DatasetManifest {
  int format_version = 1;
  uint64_t seed = 0;
  int n_subjects = 0;
  int n_classes = 0;
  int geometry_dim = 0;
  int latent_dim = 0;
  float sigma_subject = 0.0f;
  float noise_sigma = 0.0f;
  float split_fraction = 0.0f;
  float stimulus_overlap = 1.0f;
  int n_stimuli = 0;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  TeacherConfig teacher;
  std::string teacher_checksum;
  std::string stimuli_checksum;
  std::vector<ManifestSubject> subjects;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

// Deterministic latent code shared by every subject: tanh of a fixed seeded
// affine map of concat(one_hot(class), geometry).
std::vector<float> stimulus_latent(const StimulusSpec& spec, int n_classes, int latent_dim,
                                   uint64_t seed);

SubjectProfile make_subject_profile(const DataGenConfig& cfg, int subject_id, int voxel_count);

Matf synthesize_recording(const SubjectProfile& profile, const StimulusSpec& spec,
                          const DataGenConfig& cfg, Rng& rng);

DatasetManifest generate_dataset(const DataGenConfig& cfg);

// Fully materialized dataset (desk scale fits in memory).
class Dataset {
 public:
  static Dataset load(const std::string& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<StimulusSpec>& stimuli() const { return stimuli_; }
  const TeacherFeatures& teacher(int stimulus_id) const;
  const StimulusSpec& stimulus(int stimulus_id) const;

  // Recording row for (subject, stimulus); throws if the pair is absent.
  Eigen::Ref<const Matf> recording(int subject_id, int stimulus_id) const;
  const std::vector<int>& subject_stimuli(int subject_id) const;
  bool has_recording(int subject_id, int stimulus_id) const;

  bool is_test_stimulus(int stimulus_id) const;

  struct Sample {
    int subject_id;
    int stimulus_id;
  };
  // All (subject, stimulus) pairs restricted to a subject set and split.
  std::vector<Sample> samples(const std::vector<int>& subject_filter, bool test_split) const;

  // Streams (voxels, teacher features, subject id) in deterministic order.
  void for_each(const std::vector<int>& subject_filter, bool test_split,
                const std::function<void(Eigen::Ref<const Matf>, const TeacherFeatures&, int)>& fn) const;

 private:
  DatasetManifest manifest_;
  std::vector<StimulusSpec> stimuli_;
  std::vector<TeacherFeatures> teacher_;
  struct SubjectData {
    std::vector<int> stimulus_ids;
    std::vector<int> row_of_stimulus;  // stimulus_id -> row or -1
    Matf recordings;                   // (M_i x D_i)
  };
  std::vector<SubjectData> subjects_;
  std::vector<char> is_test_;
};

}  // namespace unibrain
