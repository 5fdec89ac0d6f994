#include "hdmi/features.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

#include "hdmi/csv.hpp"
#include "hdmi/error.hpp"

namespace hdmi::features {

namespace {

void check_patient(Eigen::Index patient, Eigen::Index n, const char* what) {
  if (patient < 0 || patient >= n) {
    throw ConfigError(std::string(what) + " references patient " + std::to_string(patient) +
                      " outside cohort of " + std::to_string(n));
  }
}

tabular::CovariateBlock presence_block(const std::string& name,
                                       const std::map<std::string, std::set<Eigen::Index>>& hits,
                                       Eigen::Index n) {
  std::vector<std::string> columns;
  columns.reserve(hits.size());
  std::vector<Eigen::Triplet<double>> cells;
  Eigen::Index j = 0;
  for (const auto& [column, patients] : hits) {
    columns.push_back(column);
    for (Eigen::Index i : patients) cells.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
    ++j;
  }
  Eigen::SparseMatrix<double> values(n, j);
  values.setFromTriplets(cells.begin(), cells.end());
  return tabular::CovariateBlock::binary(name, std::move(values), std::move(columns));
}

bool pure_number(const std::string& token) {
  return std::all_of(token.begin(), token.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

void DimensionConfig::validate() const {
  if (name.empty()) throw ConfigError("dimension needs a name");
  if (!(prevalence_threshold >= 0.0 && prevalence_threshold < 1.0)) {
    throw ConfigError("prevalence threshold must lie in [0, 1), got " +
                      std::to_string(prevalence_threshold));
  }
  if (lookback_days < 0) throw ConfigError("lookback window must be nonnegative");
}

tabular::CovariateBlock binarize_codes(const std::vector<CodeEvent>& events,
                                       const DimensionConfig& cfg, Eigen::Index n) {
  cfg.validate();
  std::map<std::string, std::set<Eigen::Index>> hits;
  for (const auto& ev : events) {
    check_patient(ev.patient, n, "code event");
    if (ev.days_before_index < 0 || ev.days_before_index > cfg.lookback_days) continue;
    hits[ev.code].insert(ev.patient);
  }
  return presence_block(cfg.name, hits, n);
}

tabular::CovariateBlock extract_unigrams(const std::vector<NoteRecord>& notes,
                                         const DimensionConfig& cfg, Eigen::Index n) {
  cfg.validate();
  std::unordered_set<std::string> stop;
  for (const auto& w : cfg.stop_words) stop.insert(lowercase(w));

  std::map<std::string, std::set<Eigen::Index>> hits;
  for (const auto& note : notes) {
    check_patient(note.patient, n, "note");
    std::string token;
    auto flush = [&]() {
      if (token.size() >= 2 && !pure_number(token) && stop.count(token) == 0) {
        hits[token].insert(note.patient);
      }
      token.clear();
    };
    for (unsigned char c : note.text) {
      if (std::isalnum(c)) {
        token.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();
  }
  return presence_block(cfg.name, hits, n);
}

tabular::CovariateBlock pool_embeddings(const std::vector<EmbeddingRecord>& records,
                                        const DimensionConfig& cfg, Eigen::Index n,
                                        std::vector<std::string>* warnings) {
  cfg.validate();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n, kEmbeddingDim);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(n);
  for (const auto& rec : records) {
    check_patient(rec.patient, n, "embedding");
    if (rec.values.size() != kEmbeddingDim) {
      throw ConfigError("embedding for patient " + std::to_string(rec.patient) + " has " +
                        std::to_string(rec.values.size()) + " entries, expected " +
                        std::to_string(kEmbeddingDim));
    }
    sums.row(rec.patient) += rec.values.transpose();
    counts[rec.patient] += 1;
  }

  Eigen::MatrixXd pooled(n, kEmbeddingDim);
  Eigen::RowVectorXd cohort_mean = Eigen::RowVectorXd::Zero(kEmbeddingDim);
  Eigen::Index covered = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (counts[i] > 0) {
      pooled.row(i) = sums.row(i) / counts[i];
      cohort_mean += pooled.row(i);
      ++covered;
    }
  }
  if (covered == 0) throw ConfigError("embedding pooling needs at least one record");
  cohort_mean /= static_cast<double>(covered);

  Eigen::Index fallbacks = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (counts[i] == 0) {
      pooled.row(i) = cohort_mean;
      ++fallbacks;
    }
  }
  if (fallbacks > 0 && warnings != nullptr) {
    warnings->push_back(std::to_string(fallbacks) + " of " + std::to_string(n) +
                        " patients have no embeddings; cohort mean vector substituted");
  }

  std::vector<std::string> columns;
  columns.reserve(kEmbeddingDim);
  for (Eigen::Index j = 0; j < kEmbeddingDim; ++j) columns.push_back("e" + std::to_string(j + 1));
  return tabular::CovariateBlock::continuous(cfg.name, std::move(pooled), std::move(columns));
}

tabular::CovariateBlock prevalence_filter(const tabular::CovariateBlock& block, double threshold,
                                          std::vector<std::string>* warnings) {
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw ConfigError("prevalence threshold must lie in [0, 1), got " + std::to_string(threshold));
  }
  if (block.kind == tabular::BlockKind::continuous_dense) {
    if (warnings != nullptr) {
      warnings->push_back("prevalence filter passes continuous block '" + block.name +
                          "' through unchanged");
    }
    return block;
  }

  const Eigen::VectorXd prevalence = tabular::column_prevalence(block);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    if (prevalence[j] >= threshold) keep.push_back(j);
  }

  std::vector<std::string> columns;
  columns.reserve(keep.size());
  std::vector<Eigen::Triplet<double>> cells;
  for (std::size_t out_j = 0; out_j < keep.size(); ++out_j) {
    columns.push_back(block.columns[static_cast<std::size_t>(keep[out_j])]);
    for (Eigen::SparseMatrix<double>::InnerIterator it(block.sparse, keep[out_j]); it; ++it) {
      cells.emplace_back(static_cast<int>(it.row()), static_cast<int>(out_j), it.value());
    }
  }
  Eigen::SparseMatrix<double> values(block.rows(), static_cast<Eigen::Index>(keep.size()));
  values.setFromTriplets(cells.begin(), cells.end());
  return tabular::CovariateBlock::binary(block.name, std::move(values), std::move(columns));
}

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = {
      ModelKind::unadjusted,        ModelKind::complete_case,
      ModelKind::baseline,          ModelKind::hdmi_claims,
      ModelKind::hdmi_unigram,      ModelKind::hdmi_sentence,
      ModelKind::hdmi_claims_unigram, ModelKind::hdmi_claims_sentence,
  };
  return kinds;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::unadjusted: return "unadjusted";
    case ModelKind::complete_case: return "complete_case";
    case ModelKind::baseline: return "baseline";
    case ModelKind::hdmi_claims: return "hdmi_claims";
    case ModelKind::hdmi_unigram: return "hdmi_unigram";
    case ModelKind::hdmi_sentence: return "hdmi_sentence";
    case ModelKind::hdmi_claims_unigram: return "hdmi_claims_unigram";
    case ModelKind::hdmi_claims_sentence: return "hdmi_claims_sentence";
  }
  throw ConfigError("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& label) {
  for (ModelKind kind : all_model_kinds()) {
    if (to_string(kind) == label) return kind;
  }
  throw ConfigError("unknown model '" + label + "'");
}

DesignMatrix assemble_candidates(const tabular::Cohort& cohort, ModelKind kind) {
  DesignMatrix candidates =
      DesignMatrix::from_dense(Eigen::MatrixXd(cohort.n(), 0), {});
  if (kind == ModelKind::unadjusted) return candidates;

  std::vector<std::string> z1_names;
  z1_names.reserve(cohort.z1_cols.size());
  for (const auto& col : cohort.z1_cols) z1_names.push_back(col.name);
  candidates.append_dense(cohort.z1, z1_names);

  auto append_block = [&](const std::string& name) {
    const tabular::CovariateBlock& block = cohort.block(name);
    std::vector<std::string> prefixed;
    prefixed.reserve(block.columns.size());
    for (const auto& col : block.columns) prefixed.push_back(name + "." + col);
    if (block.kind == tabular::BlockKind::binary_sparse) {
      candidates.append_sparse(block.sparse, prefixed);
    } else {
      candidates.append_dense(block.dense, prefixed);
    }
  };

  switch (kind) {
    case ModelKind::unadjusted:
    case ModelKind::complete_case:
    case ModelKind::baseline:
      break;
    case ModelKind::hdmi_claims:
      append_block(kClaimsBlock);
      break;
    case ModelKind::hdmi_unigram:
      append_block(kUnigramBlock);
      break;
    case ModelKind::hdmi_sentence:
      append_block(kSentenceBlock);
      break;
    case ModelKind::hdmi_claims_unigram:
      append_block(kClaimsBlock);
      append_block(kUnigramBlock);
      break;
    case ModelKind::hdmi_claims_sentence:
      append_block(kClaimsBlock);
      append_block(kSentenceBlock);
      break;
  }
  return candidates;
}

std::vector<CodeEvent> load_code_events(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  const int pid = t.column("patient_id");
  const int code = t.column("code");
  const int days = t.column("days_before_index");
  if (pid < 0 || code < 0 || days < 0) {
    throw ParseError(path + ": needs columns patient_id, code, days_before_index");
  }
  std::vector<CodeEvent> events;
  events.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path + " row " + std::to_string(r + 2);
    CodeEvent ev;
    ev.patient = csv::parse_long(t.rows[r][static_cast<std::size_t>(pid)], where);
    ev.code = t.rows[r][static_cast<std::size_t>(code)];
    ev.days_before_index = csv::parse_long(t.rows[r][static_cast<std::size_t>(days)], where);
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<NoteRecord> load_notes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "patient_id,text") {
    throw ParseError(path + ": notes header must be 'patient_id,text'");
  }

  std::vector<NoteRecord> notes;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError(path + ": row " + std::to_string(row_no) + " has no text cell");
    }
    NoteRecord note;
    note.patient = csv::parse_long(line.substr(0, comma), path + " row " + std::to_string(row_no));
    note.text = line.substr(comma + 1);
    notes.push_back(std::move(note));
  }
  return notes;
}

std::vector<EmbeddingRecord> load_embeddings(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  if (t.header.empty() || t.header[0] != "patient_id" || t.header.size() < 2) {
    throw ParseError(path + ": embeddings header must be patient_id,e1,...");
  }
  const std::size_t dim = t.header.size() - 1;
  std::vector<EmbeddingRecord> records;
  records.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path + " row " + std::to_string(r + 2);
    EmbeddingRecord rec;
    rec.patient = csv::parse_long(t.rows[r][0], where);
    rec.values.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      rec.values[static_cast<Eigen::Index>(j)] = csv::parse_double(t.rows[r][j + 1], where);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<std::string> load_stop_words(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    std::size_t b = line.find_last_not_of(" \t");
    words.push_back(lowercase(line.substr(a, b - a + 1)));
  }
  return words;
}

}  // namespace hdmi::features
