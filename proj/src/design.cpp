#include "hdmi/design.hpp"

#include <unordered_set>

#include "hdmi/error.hpp"

namespace hdmi {

void DesignMatrix::check_names(const std::vector<std::string>& names) const {
  std::unordered_set<std::string> seen(names_.begin(), names_.end());
  for (const auto& nm : names) {
    if (!seen.insert(nm).second) {
      throw ConfigError("duplicate design column name: " + nm);
    }
  }
}

void DesignMatrix::set_rows(Eigen::Index n) {
  if (rows_ == 0 && refs_.empty()) {
    rows_ = n;
  } else if (rows_ != n) {
    throw ConfigError("design blocks disagree on row count");
  }
}

DesignMatrix DesignMatrix::from_dense(Eigen::MatrixXd values, std::vector<std::string> names) {
  DesignMatrix d;
  d.append_dense(values, names);
  return d;
}

DesignMatrix DesignMatrix::from_sparse(Eigen::SparseMatrix<double> values,
                                       std::vector<std::string> names) {
  DesignMatrix d;
  d.append_sparse(values, names);
  return d;
}

void DesignMatrix::append_dense(const Eigen::MatrixXd& values,
                                const std::vector<std::string>& names) {
  if (static_cast<std::size_t>(values.cols()) != names.size()) {
    throw ConfigError("dense block: name count does not match column count");
  }
  set_rows(values.rows());
  check_names(names);
  const Eigen::Index old = dense_.cols();
  dense_.conservativeResize(rows_, old + values.cols());
  dense_.rightCols(values.cols()) = values;
  for (Eigen::Index k = 0; k < values.cols(); ++k) {
    refs_.push_back({false, old + k});
    names_.push_back(names[static_cast<std::size_t>(k)]);
  }
}

void DesignMatrix::append_sparse(const Eigen::SparseMatrix<double>& values,
                                 const std::vector<std::string>& names) {
  if (static_cast<std::size_t>(values.cols()) != names.size()) {
    throw ConfigError("sparse block: name count does not match column count");
  }
  set_rows(values.rows());
  check_names(names);
  const Eigen::Index old = sparse_.cols();
  if (old == 0) {
    sparse_ = values;
    sparse_.makeCompressed();
  } else {
    Eigen::SparseMatrix<double> merged(rows_, old + values.cols());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(sparse_.nonZeros() + values.nonZeros()));
    for (Eigen::Index c = 0; c < old; ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, c); it; ++it) {
        trips.emplace_back(it.row(), c, it.value());
      }
    }
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(values, c); it; ++it) {
        trips.emplace_back(it.row(), old + c, it.value());
      }
    }
    merged.setFromTriplets(trips.begin(), trips.end());
    sparse_ = std::move(merged);
  }
  for (Eigen::Index k = 0; k < values.cols(); ++k) {
    refs_.push_back({true, old + k});
    names_.push_back(names[static_cast<std::size_t>(k)]);
  }
}

void DesignMatrix::append(const DesignMatrix& other) {
  if (other.cols() == 0) return;
  set_rows(other.rows_);
  check_names(other.names_);
  const Eigen::Index dense0 = dense_.cols();
  const Eigen::Index sparse0 = sparse_.cols();
  if (other.dense_.cols() > 0) {
    dense_.conservativeResize(rows_, dense0 + other.dense_.cols());
    dense_.rightCols(other.dense_.cols()) = other.dense_;
  }
  if (other.sparse_.cols() > 0) {
    Eigen::SparseMatrix<double> merged(rows_, sparse0 + other.sparse_.cols());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(sparse_.nonZeros() + other.sparse_.nonZeros()));
    for (Eigen::Index c = 0; c < sparse0; ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, c); it; ++it) {
        trips.emplace_back(it.row(), c, it.value());
      }
    }
    for (Eigen::Index c = 0; c < other.sparse_.cols(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(other.sparse_, c); it; ++it) {
        trips.emplace_back(it.row(), sparse0 + c, it.value());
      }
    }
    merged.setFromTriplets(trips.begin(), trips.end());
    sparse_ = std::move(merged);
  }
  for (std::size_t j = 0; j < other.refs_.size(); ++j) {
    const ColRef r = other.refs_[j];
    refs_.push_back({r.sparse, r.idx + (r.sparse ? sparse0 : dense0)});
    names_.push_back(other.names_[j]);
  }
}

double DesignMatrix::dot(Eigen::Index j, const Eigen::Ref<const Eigen::VectorXd>& v) const {
  const ColRef r = refs_[static_cast<std::size_t>(j)];
  if (!r.sparse) return dense_.col(r.idx).dot(v);
  double s = 0.0;
  for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, r.idx); it; ++it) {
    s += it.value() * v[it.row()];
  }
  return s;
}

double DesignMatrix::weighted_dot(Eigen::Index j, const Eigen::Ref<const Eigen::VectorXd>& w,
                                  const Eigen::Ref<const Eigen::VectorXd>& v) const {
  const ColRef r = refs_[static_cast<std::size_t>(j)];
  if (!r.sparse) return (dense_.col(r.idx).array() * w.array() * v.array()).sum();
  double s = 0.0;
  for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, r.idx); it; ++it) {
    s += it.value() * w[it.row()] * v[it.row()];
  }
  return s;
}

void DesignMatrix::axpy(Eigen::Index j, double a, Eigen::VectorXd& v) const {
  const ColRef r = refs_[static_cast<std::size_t>(j)];
  if (!r.sparse) {
    v += a * dense_.col(r.idx);
    return;
  }
  for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, r.idx); it; ++it) {
    v[it.row()] += a * it.value();
  }
}

double DesignMatrix::col_sum(Eigen::Index j) const {
  const ColRef r = refs_[static_cast<std::size_t>(j)];
  if (!r.sparse) return dense_.col(r.idx).sum();
  double s = 0.0;
  for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, r.idx); it; ++it) {
    s += it.value();
  }
  return s;
}

double DesignMatrix::weighted_sum(Eigen::Index j,
                                  const Eigen::Ref<const Eigen::VectorXd>& w) const {
  const ColRef r = refs_[static_cast<std::size_t>(j)];
  if (!r.sparse) return dense_.col(r.idx).dot(w);
  double s = 0.0;
  for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, r.idx); it; ++it) {
    s += it.value() * w[it.row()];
  }
  return s;
}

double DesignMatrix::weighted_sumsq(Eigen::Index j,
                                    const Eigen::Ref<const Eigen::VectorXd>& w) const {
  const ColRef r = refs_[static_cast<std::size_t>(j)];
  if (!r.sparse) return (dense_.col(r.idx).array().square() * w.array()).sum();
  double s = 0.0;
  for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, r.idx); it; ++it) {
    s += it.value() * it.value() * w[it.row()];
  }
  return s;
}

Eigen::VectorXd DesignMatrix::col_dense(Eigen::Index j) const {
  const ColRef r = refs_[static_cast<std::size_t>(j)];
  if (!r.sparse) return dense_.col(r.idx);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(rows_);
  for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, r.idx); it; ++it) {
    v[it.row()] = it.value();
  }
  return v;
}

Eigen::MatrixXd DesignMatrix::to_dense() const {
  Eigen::MatrixXd m(rows_, cols());
  for (Eigen::Index j = 0; j < cols(); ++j) m.col(j) = col_dense(j);
  return m;
}

DesignMatrix DesignMatrix::select_rows(const std::vector<Eigen::Index>& rows) const {
  DesignMatrix out;
  out.rows_ = static_cast<Eigen::Index>(rows.size());
  out.refs_ = refs_;
  out.names_ = names_;
  if (dense_.cols() > 0) {
    out.dense_.resize(out.rows_, dense_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.dense_.row(static_cast<Eigen::Index>(i)) = dense_.row(rows[i]);
    }
  }
  if (sparse_.cols() > 0) {
    // Inverse row multimap; selections may repeat rows (resampling).
    std::vector<std::vector<Eigen::Index>> where(static_cast<std::size_t>(rows_));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      where[static_cast<std::size_t>(rows[i])].push_back(static_cast<Eigen::Index>(i));
    }
    std::vector<Eigen::Triplet<double>> trips;
    for (Eigen::Index c = 0; c < sparse_.cols(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(sparse_, c); it; ++it) {
        for (Eigen::Index to : where[static_cast<std::size_t>(it.row())]) {
          trips.emplace_back(to, c, it.value());
        }
      }
    }
    out.sparse_.resize(out.rows_, sparse_.cols());
    out.sparse_.setFromTriplets(trips.begin(), trips.end());
  }
  return out;
}

int DesignMatrix::name_index(const std::string& name) const {
  for (std::size_t j = 0; j < names_.size(); ++j) {
    if (names_[j] == name) return static_cast<int>(j);
  }
  return -1;
}

}  // namespace hdmi
