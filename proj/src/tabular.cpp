#include "hdmi/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "hdmi/csv.hpp"
#include "hdmi/error.hpp"

namespace hdmi::tabular {

using nlohmann::json;

namespace {

std::string schema_path_for(const std::string& path) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string() + ".schema.json";
}

std::string sparse_path_for(const std::string& path, const std::string& block) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string() + "." + block + ".sparse";
}

void check_unique(const std::vector<std::string>& names, const std::string& what) {
  std::unordered_set<std::string> seen;
  for (const auto& nm : names) {
    if (!seen.insert(nm).second) throw ConfigError(what + ": duplicate column name " + nm);
  }
}

}  // namespace

CovariateBlock CovariateBlock::binary(std::string name, Eigen::SparseMatrix<double> values,
                                      std::vector<std::string> columns) {
  CovariateBlock b;
  b.name = std::move(name);
  b.kind = BlockKind::binary_sparse;
  b.sparse = std::move(values);
  b.sparse.makeCompressed();
  b.columns = std::move(columns);
  b.validate();
  return b;
}

CovariateBlock CovariateBlock::continuous(std::string name, Eigen::MatrixXd values,
                                          std::vector<std::string> columns) {
  CovariateBlock b;
  b.name = std::move(name);
  b.kind = BlockKind::continuous_dense;
  b.dense = std::move(values);
  b.columns = std::move(columns);
  b.validate();
  return b;
}

void CovariateBlock::validate() const {
  check_unique(columns, "block " + name);
  if (kind == BlockKind::binary_sparse) {
    if (sparse.cols() != cols()) throw ConfigError("block " + name + ": column name count mismatch");
    for (Eigen::Index c = 0; c < sparse.outerSize(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(sparse, c); it; ++it) {
        if (it.value() != 0.0 && it.value() != 1.0) {
          throw ConfigError("block " + name + ": non-binary value in sparse block");
        }
      }
    }
  } else {
    if (dense.cols() != cols()) throw ConfigError("block " + name + ": column name count mismatch");
  }
}

void Cohort::validate() const {
  const Eigen::Index m = n();
  if (exposure.size() != m || event.size() != m || z2.size() != m || mz2.size() != m ||
      u.size() != m || z1.rows() != m) {
    throw ConfigError("cohort vectors disagree on patient count");
  }
  if (static_cast<Eigen::Index>(z1_cols.size()) != z1.cols()) {
    throw ConfigError("z1 column tags do not match z1 width");
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(time[i] > 0.0)) {
      throw ConfigError("non-positive time at row " + std::to_string(i));
    }
    if (exposure[i] != 0 && exposure[i] != 1) throw ConfigError("non-binary exposure at row " + std::to_string(i));
    if (event[i] != 0 && event[i] != 1) throw ConfigError("non-binary event at row " + std::to_string(i));
    if (mz2[i] != 0 && mz2[i] != 1) throw ConfigError("non-binary mz2 at row " + std::to_string(i));
    if (u[i] != 0 && u[i] != 1) throw ConfigError("non-binary u at row " + std::to_string(i));
  }
  for (const auto& b : blocks) {
    if (b.rows() != m) throw ConfigError("block " + b.name + " row count mismatch");
    b.validate();
  }
}

const CovariateBlock& Cohort::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw ConfigError("cohort has no block named " + name);
}

bool Cohort::has_block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return true;
  }
  return false;
}

std::vector<Eigen::Index> Cohort::complete_rows() const {
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(n()));
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (mz2[i] == 0) rows.push_back(i);
  }
  return rows;
}

Eigen::VectorXd Cohort::z2_observed() const {
  const auto rows = complete_rows();
  Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) v[static_cast<Eigen::Index>(i)] = z2[rows[i]];
  return v;
}

Cohort Cohort::select_rows(const std::vector<Eigen::Index>& rows) const {
  Cohort out;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  out.exposure.resize(m);
  out.time.resize(m);
  out.event.resize(m);
  out.z1.resize(m, z1.cols());
  out.z1_cols = z1_cols;
  out.z2.resize(m);
  out.mz2.resize(m);
  out.u.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    out.exposure[i] = exposure[r];
    out.time[i] = time[r];
    out.event[i] = event[r];
    out.z1.row(i) = z1.row(r);
    out.z2[i] = z2[r];
    out.mz2[i] = mz2[r];
    out.u[i] = u[r];
  }
  out.blocks.reserve(blocks.size());
  for (const auto& b : blocks) {
    CovariateBlock nb;
    nb.name = b.name;
    nb.kind = b.kind;
    nb.columns = b.columns;
    if (b.kind == BlockKind::binary_sparse) {
      std::vector<std::vector<Eigen::Index>> where(static_cast<std::size_t>(b.sparse.rows()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        where[static_cast<std::size_t>(rows[i])].push_back(static_cast<Eigen::Index>(i));
      }
      std::vector<Eigen::Triplet<double>> trips;
      for (Eigen::Index c = 0; c < b.sparse.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(b.sparse, c); it; ++it) {
          for (Eigen::Index to : where[static_cast<std::size_t>(it.row())]) {
            trips.emplace_back(to, c, it.value());
          }
        }
      }
      nb.sparse.resize(m, b.sparse.cols());
      nb.sparse.setFromTriplets(trips.begin(), trips.end());
    } else {
      nb.dense.resize(m, b.dense.cols());
      for (Eigen::Index i = 0; i < m; ++i) {
        nb.dense.row(i) = b.dense.row(rows[static_cast<std::size_t>(i)]);
      }
    }
    out.blocks.push_back(std::move(nb));
  }
  return out;
}

Cohort load_cohort(const std::string& path) { return load_cohort(path, schema_path_for(path)); }

Cohort load_cohort(const std::string& path, const std::string& schema_path) {
  std::ifstream sin(schema_path);
  if (!sin) throw IoError("cannot open schema: " + schema_path);
  json schema;
  try {
    sin >> schema;
  } catch (const json::exception& e) {
    throw ParseError("schema " + schema_path + ": " + e.what());
  }

  const auto table = csv::read_table(path);
  const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());

  auto required_col = [&](const std::string& role) {
    const std::string name = schema.at(role).get<std::string>();
    const int j = table.column(name);
    if (j < 0) throw ParseError(path + ": schema column '" + name + "' (" + role + ") not found");
    return j;
  };

  const int jx = required_col("exposure");
  const int jt = required_col("time");
  const int je = required_col("event");
  const int jz2 = required_col("z2");
  const int ju = required_col("u");

  Cohort c;
  c.exposure.resize(n);
  c.time.resize(n);
  c.event.resize(n);
  c.z2.resize(n);
  c.mz2.resize(n);
  c.u.resize(n);

  auto where = [&](Eigen::Index row, const std::string& col) {
    return path + " row " + std::to_string(row + 2) + " column " + col;
  };

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = table.rows[static_cast<std::size_t>(i)];
    const long x = csv::parse_long(r[static_cast<std::size_t>(jx)], where(i, "exposure"));
    if (x != 0 && x != 1) throw ParseError("non-binary exposure at " + where(i, "exposure"));
    c.exposure[i] = static_cast<int>(x);

    const double t = csv::parse_double(r[static_cast<std::size_t>(jt)], where(i, "time"));
    if (!(t > 0.0)) throw ParseError("non-positive time at " + where(i, "time"));
    c.time[i] = t;

    const long e = csv::parse_long(r[static_cast<std::size_t>(je)], where(i, "event"));
    if (e != 0 && e != 1) throw ParseError("non-binary event at " + where(i, "event"));
    c.event[i] = static_cast<int>(e);

    const std::string& z2cell = r[static_cast<std::size_t>(jz2)];
    if (z2cell.empty()) {
      c.z2[i] = std::numeric_limits<double>::quiet_NaN();
      c.mz2[i] = 1;
    } else {
      c.z2[i] = csv::parse_double(z2cell, where(i, "z2"));
      c.mz2[i] = 0;
    }

    const long uu = csv::parse_long(r[static_cast<std::size_t>(ju)], where(i, "u"));
    if (uu != 0 && uu != 1) throw ParseError("non-binary u at " + where(i, "u"));
    c.u[i] = static_cast<int>(uu);
  }

  for (const auto& zc : schema.at("z1")) {
    Z1Column col;
    col.name = zc.at("name").get<std::string>();
    col.binary = zc.at("kind").get<std::string>() == "binary";
    c.z1_cols.push_back(col);
  }
  c.z1.resize(n, static_cast<Eigen::Index>(c.z1_cols.size()));
  for (Eigen::Index k = 0; k < c.z1.cols(); ++k) {
    const auto& name = c.z1_cols[static_cast<std::size_t>(k)].name;
    const int j = table.column(name);
    if (j < 0) throw ParseError(path + ": z1 column '" + name + "' not found");
    for (Eigen::Index i = 0; i < n; ++i) {
      c.z1(i, k) = csv::parse_double(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                                     where(i, name));
    }
  }

  if (schema.contains("blocks")) {
    for (const auto& bj : schema.at("blocks")) {
      CovariateBlock b;
      b.name = bj.at("name").get<std::string>();
      b.columns = bj.at("columns").get<std::vector<std::string>>();
      const std::string kind = bj.at("kind").get<std::string>();
      if (kind == "binary_sparse") {
        b.kind = BlockKind::binary_sparse;
        std::unordered_map<std::string, Eigen::Index> colidx;
        for (std::size_t k = 0; k < b.columns.size(); ++k) {
          colidx[b.columns[k]] = static_cast<Eigen::Index>(k);
        }
        const std::string spath = sparse_path_for(path, b.name);
        const auto stable = csv::read_table(spath);
        if (stable.header != std::vector<std::string>{"row", "column"}) {
          throw ParseError(spath + ": expected header row,column");
        }
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(stable.rows.size());
        for (std::size_t k = 0; k < stable.rows.size(); ++k) {
          const long row = csv::parse_long(stable.rows[k][0], spath + " line " + std::to_string(k + 2));
          if (row < 0 || row >= n) throw ParseError(spath + ": row index out of range: " + std::to_string(row));
          const auto it = colidx.find(stable.rows[k][1]);
          if (it == colidx.end()) {
            throw ParseError(spath + ": unknown column name " + stable.rows[k][1]);
          }
          trips.emplace_back(static_cast<Eigen::Index>(row), it->second, 1.0);
        }
        b.sparse.resize(n, static_cast<Eigen::Index>(b.columns.size()));
        b.sparse.setFromTriplets(trips.begin(), trips.end(),
                                 [](const double&, const double&) { return 1.0; });
        b.sparse.makeCompressed();
      } else if (kind == "continuous_dense") {
        b.kind = BlockKind::continuous_dense;
        b.dense.resize(n, static_cast<Eigen::Index>(b.columns.size()));
        for (std::size_t k = 0; k < b.columns.size(); ++k) {
          const std::string full = b.name + "." + b.columns[k];
          const int j = table.column(full);
          if (j < 0) throw ParseError(path + ": block column '" + full + "' not found");
          for (Eigen::Index i = 0; i < n; ++i) {
            b.dense(i, static_cast<Eigen::Index>(k)) = csv::parse_double(
                table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], where(i, full));
          }
        }
      } else {
        throw ParseError(schema_path + ": unknown block kind " + kind);
      }
      c.blocks.push_back(std::move(b));
    }
  }

  c.validate();
  return c;
}

void save_cohort(const Cohort& cohort, const std::string& path) {
  cohort.validate();

  json schema;
  schema["exposure"] = "exposure";
  schema["time"] = "time";
  schema["event"] = "event";
  schema["z2"] = "z2";
  schema["u"] = "u";
  schema["z1"] = json::array();
  for (const auto& zc : cohort.z1_cols) {
    schema["z1"].push_back({{"name", zc.name}, {"kind", zc.binary ? "binary" : "continuous"}});
  }
  schema["blocks"] = json::array();
  for (const auto& b : cohort.blocks) {
    schema["blocks"].push_back(
        {{"name", b.name},
         {"kind", b.kind == BlockKind::binary_sparse ? "binary_sparse" : "continuous_dense"},
         {"columns", b.columns}});
  }

  std::ofstream sout(schema_path_for(path), std::ios::binary);
  if (!sout) throw IoError("cannot write schema for " + path);
  sout << schema.dump(2) << "\n";
  sout.close();
  if (!sout) throw IoError("schema write failed for " + path);

  csv::Writer w(path);
  std::vector<std::string> header = {"exposure", "time", "event", "z2", "u"};
  for (const auto& zc : cohort.z1_cols) header.push_back(zc.name);
  for (const auto& b : cohort.blocks) {
    if (b.kind == BlockKind::continuous_dense) {
      for (const auto& col : b.columns) header.push_back(b.name + "." + col);
    }
  }
  w.row(header);

  for (Eigen::Index i = 0; i < cohort.n(); ++i) {
    std::vector<std::string> row;
    row.reserve(header.size());
    row.push_back(std::to_string(cohort.exposure[i]));
    row.push_back(csv::format_double(cohort.time[i]));
    row.push_back(std::to_string(cohort.event[i]));
    row.push_back(cohort.mz2[i] ? std::string() : csv::format_double(cohort.z2[i]));
    row.push_back(std::to_string(cohort.u[i]));
    for (Eigen::Index k = 0; k < cohort.z1.cols(); ++k) {
      row.push_back(csv::format_double(cohort.z1(i, k)));
    }
    for (const auto& b : cohort.blocks) {
      if (b.kind == BlockKind::continuous_dense) {
        for (Eigen::Index k = 0; k < b.dense.cols(); ++k) {
          row.push_back(csv::format_double(b.dense(i, k)));
        }
      }
    }
    w.row(row);
  }
  w.close();

  for (const auto& b : cohort.blocks) {
    if (b.kind != BlockKind::binary_sparse) continue;
    csv::Writer sw(sparse_path_for(path, b.name));
    sw.row({"row", "column"});
    // Row-major order keeps the file stable under column reordering of the
    // in-memory CSC storage.
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
    cells.reserve(static_cast<std::size_t>(b.sparse.nonZeros()));
    for (Eigen::Index c = 0; c < b.sparse.outerSize(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(b.sparse, c); it; ++it) {
        if (it.value() != 0.0) cells.emplace_back(it.row(), c);
      }
    }
    std::sort(cells.begin(), cells.end());
    for (const auto& [r, c] : cells) {
      sw.row({std::to_string(r), b.columns[static_cast<std::size_t>(c)]});
    }
    sw.close();
  }
}

Eigen::VectorXd column_prevalence(const CovariateBlock& block) {
  if (block.kind != BlockKind::binary_sparse) {
    throw ConfigError("column_prevalence requires a binary block, got continuous block " +
                      block.name);
  }
  const double n = static_cast<double>(block.rows());
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(block.cols());
  for (Eigen::Index c = 0; c < block.sparse.outerSize(); ++c) {
    double s = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(block.sparse, c); it; ++it) {
      s += it.value();
    }
    prev[c] = s / n;
  }
  return prev;
}

}  // namespace hdmi::tabular
