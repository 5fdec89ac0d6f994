#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

namespace hdmi::tabular {

enum class BlockKind { binary_sparse, continuous_dense };

// One named dimension of candidate auxiliary covariates.
struct CovariateBlock {
  std::string name;
  BlockKind kind = BlockKind::continuous_dense;
  std::vector<std::string> columns;
  Eigen::SparseMatrix<double> sparse;  // binary_sparse storage
  Eigen::MatrixXd dense;               // continuous_dense storage

  Eigen::Index rows() const {
    return kind == BlockKind::binary_sparse ? sparse.rows() : dense.rows();
  }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(columns.size()); }
  void validate() const;

  static CovariateBlock binary(std::string name, Eigen::SparseMatrix<double> values,
                               std::vector<std::string> columns);
  static CovariateBlock continuous(std::string name, Eigen::MatrixXd values,
                                   std::vector<std::string> columns);
};

struct Z1Column {
  std::string name;
  bool binary = false;
};

// The unit of analysis. Immutable by convention: pipeline stages take const
// cohorts and build new ones.
struct Cohort {
  Eigen::VectorXi exposure;  // 0/1
  Eigen::VectorXd time;      // follow-up, > 0
  Eigen::VectorXi event;     // 0/1
  Eigen::MatrixXd z1;        // n × k investigator covariates
  std::vector<Z1Column> z1_cols;
  Eigen::VectorXd z2;        // partially observed confounder; NaN when unknown
  Eigen::VectorXi mz2;       // 1 = z2 missing
  Eigen::VectorXi u;         // unmeasured confounder, excluded from candidates
  std::vector<CovariateBlock> blocks;

  Eigen::Index n() const { return time.size(); }
  void validate() const;

  const CovariateBlock& block(const std::string& name) const;
  bool has_block(const std::string& name) const;

  // Observed-only access; downstream consumers must not touch masked z2.
  std::vector<Eigen::Index> complete_rows() const;
  Eigen::VectorXd z2_observed() const;

  // Row gather; indices may repeat (resampling).
  Cohort select_rows(const std::vector<Eigen::Index>& rows) const;
};

// Reads `<path>` (csv) + `<stem>.schema.json` + `<stem>.<block>.sparse`
// sidecars. Empty z2 cells become mz2 = 1 with z2 = NaN.
Cohort load_cohort(const std::string& path);
Cohort load_cohort(const std::string& path, const std::string& schema_path);

// Writes the cohort in the same layout. Masked z2 cells are written empty:
// on disk, emptiness is the missingness encoding, so values hidden behind
// mz2 = 1 do not survive a round trip.
void save_cohort(const Cohort& cohort, const std::string& path);

// Mean of each column of a binary block; throws on continuous blocks.
Eigen::VectorXd column_prevalence(const CovariateBlock& block);

}  // namespace hdmi::tabular
