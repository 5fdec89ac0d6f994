#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

namespace hdmi {

// Column-oriented design matrix mixing dense and sparse column groups behind
// a single logical column index. Solvers access columns through the dot/axpy
// primitives so sparse blocks never get densified.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  static DesignMatrix from_dense(Eigen::MatrixXd values, std::vector<std::string> names);
  static DesignMatrix from_sparse(Eigen::SparseMatrix<double> values,
                                  std::vector<std::string> names);

  void append_dense(const Eigen::MatrixXd& values, const std::vector<std::string>& names);
  void append_sparse(const Eigen::SparseMatrix<double>& values,
                     const std::vector<std::string>& names);
  // Appends all columns of another matrix, keeping its logical column order.
  void append(const DesignMatrix& other);

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(refs_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  bool has_sparse_cols() const { return sparse_.cols() > 0; }
  bool is_sparse_col(Eigen::Index j) const { return refs_[static_cast<std::size_t>(j)].sparse; }

  // <x_j, v>
  double dot(Eigen::Index j, const Eigen::Ref<const Eigen::VectorXd>& v) const;
  // <x_j, w ⊙ v>
  double weighted_dot(Eigen::Index j, const Eigen::Ref<const Eigen::VectorXd>& w,
                      const Eigen::Ref<const Eigen::VectorXd>& v) const;
  // v += a * x_j
  void axpy(Eigen::Index j, double a, Eigen::VectorXd& v) const;
  double col_sum(Eigen::Index j) const;
  // <x_j, w>
  double weighted_sum(Eigen::Index j, const Eigen::Ref<const Eigen::VectorXd>& w) const;
  // <x_j², w>
  double weighted_sumsq(Eigen::Index j, const Eigen::Ref<const Eigen::VectorXd>& w) const;

  Eigen::VectorXd col_dense(Eigen::Index j) const;
  Eigen::MatrixXd to_dense() const;
  DesignMatrix select_rows(const std::vector<Eigen::Index>& rows) const;
  int name_index(const std::string& name) const;  // -1 if absent

 private:
  struct ColRef {
    bool sparse;
    Eigen::Index idx;  // column within its storage block
  };

  void check_names(const std::vector<std::string>& names) const;
  void set_rows(Eigen::Index n);

  Eigen::Index rows_ = 0;
  Eigen::MatrixXd dense_;                  // rows_ × (dense col count)
  Eigen::SparseMatrix<double> sparse_;     // rows_ × (sparse col count), CSC
  std::vector<ColRef> refs_;               // logical order
  std::vector<std::string> names_;
};

}  // namespace hdmi
