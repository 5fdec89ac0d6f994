#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hdmi/design.hpp"
#include "hdmi/tabular.hpp"

namespace hdmi::features {

inline constexpr Eigen::Index kEmbeddingDim = 128;

// Canonical cohort block names the comparator models draw from.
inline const std::string kClaimsBlock = "claims";
inline const std::string kUnigramBlock = "unigram";
inline const std::string kSentenceBlock = "sentence";

enum class SourceKind { structured_codes, note_text, precomputed_embeddings };

// One raw data dimension to operationalize into a covariate block.
struct DimensionConfig {
  std::string name;
  SourceKind source = SourceKind::structured_codes;
  int lookback_days = 365;
  std::vector<std::string> stop_words;  // note_text only
  double prevalence_threshold = 0.01;

  void validate() const;  // threshold must lie in [0, 1)
};

struct CodeEvent {
  Eigen::Index patient = 0;
  std::string code;
  long days_before_index = 0;
};

struct NoteRecord {
  Eigen::Index patient = 0;
  std::string text;
};

struct EmbeddingRecord {
  Eigen::Index patient = 0;
  Eigen::VectorXd values;
};

// Binary presence block: cell (i, c) = 1 iff patient i has at least one
// record of code c within [0, lookback_days]. Columns sorted by code.
tabular::CovariateBlock binarize_codes(const std::vector<CodeEvent>& events,
                                       const DimensionConfig& cfg, Eigen::Index n);

// Binary presence block over unigrams: text is lowercased and split on
// non-alphanumeric boundaries; tokens of length 1, pure numbers, and stop
// words are dropped. Frequency and order are ignored. Columns sorted.
tabular::CovariateBlock extract_unigrams(const std::vector<NoteRecord>& notes,
                                         const DimensionConfig& cfg, Eigen::Index n);

// Per-patient mean of the patient's embedding vectors. Patients without any
// vectors receive the cohort-wide mean of the pooled vectors; a warning is
// appended for them when `warnings` is given.
tabular::CovariateBlock pool_embeddings(const std::vector<EmbeddingRecord>& records,
                                        const DimensionConfig& cfg, Eigen::Index n,
                                        std::vector<std::string>* warnings = nullptr);

// Drops binary columns whose prevalence is strictly below the threshold,
// preserving column order. Continuous blocks pass through unchanged with a
// note appended to `warnings`.
tabular::CovariateBlock prevalence_filter(const tabular::CovariateBlock& block, double threshold,
                                          std::vector<std::string>* warnings = nullptr);

enum class ModelKind {
  unadjusted,
  complete_case,
  baseline,
  hdmi_claims,
  hdmi_unigram,
  hdmi_sentence,
  hdmi_claims_unigram,
  hdmi_claims_sentence,
};

const std::vector<ModelKind>& all_model_kinds();
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& label);

// Candidate covariate matrix for one comparator model: the investigator
// covariates plus the auxiliary blocks the model may select from. Block
// columns are prefixed "<block>." so names stay unique; the unmeasured
// confounder is structurally absent. unadjusted gets an empty matrix,
// complete_case and baseline the investigator covariates alone.
DesignMatrix assemble_candidates(const tabular::Cohort& cohort, ModelKind kind);

// Loaders for the raw-dimension file formats. The notes file has exactly two
// columns and splits at the first comma, so note text may contain commas.
std::vector<CodeEvent> load_code_events(const std::string& path);
std::vector<NoteRecord> load_notes(const std::string& path);
std::vector<EmbeddingRecord> load_embeddings(const std::string& path);
std::vector<std::string> load_stop_words(const std::string& path);

}  // namespace hdmi::features
