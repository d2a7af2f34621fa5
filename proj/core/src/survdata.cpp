#include "coxhoa/survdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

#include "coxhoa/error.hpp"

namespace coxhoa {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_number(std::string_view field, long line, std::string_view column) {
  if (field.empty()) {
    throw ValidationError("line " + std::to_string(line) + ": missing value in column '" +
                          std::string(column) + "'");
  }
  if (field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError("line " + std::to_string(line) + ": non-numeric value '" +
                          std::string(field) + "' in column '" + std::string(column) + "'");
  }
  return value;
}

}  // namespace

void SurvivalSample::validate() const {
  const auto n = size();
  if (n == 0) throw ValidationError("sample has no subjects");
  if (static_cast<Index>(status.size()) != n || covariates.rows() != n) {
    throw ValidationError("sample columns have inconsistent lengths");
  }
  if (covariates.cols() == 0) throw ValidationError("sample has no covariates");
  if (!covariate_names.empty() &&
      static_cast<Index>(covariate_names.size()) != covariates.cols()) {
    throw ValidationError("covariate names do not match covariate columns");
  }
  if (!stratum.empty() && static_cast<Index>(stratum.size()) != n) {
    throw ValidationError("stratum column has the wrong length");
  }
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(time[i]) || time[i] <= 0.0) {
      throw ValidationError("subject " + std::to_string(i + 1) +
                            ": time must be positive and finite");
    }
    if (status[i] != 0 && status[i] != 1) {
      throw ValidationError("subject " + std::to_string(i + 1) + ": status must be 0 or 1");
    }
    if (!covariates.row(i).allFinite()) {
      throw ValidationError("subject " + std::to_string(i + 1) + ": non-finite covariate");
    }
  }
}

std::vector<Index> StratumRanks::failure_order() const {
  std::vector<Index> order;
  order.reserve(failure_pos.size());
  for (const auto pos : failure_pos) order.push_back(sequence[pos]);
  return order;
}

std::vector<Index> StratumRanks::riskset_members(Index i) const {
  return {sequence.begin() + riskset_start.at(i), sequence.end()};
}

RankData::RankData(std::shared_ptr<const Matrix> covariates_by_subject,
                   std::vector<StratumRanks> strata)
    : covariates_(std::move(covariates_by_subject)), strata_(std::move(strata)) {}

Index RankData::failures() const {
  Index m = 0;
  for (const auto& s : strata_) m += s.failures();
  return m;
}

bool RankData::operator==(const RankData& other) const {
  if (strata_ != other.strata_) return false;
  if (!covariates_ || !other.covariates_) return covariates_ == other.covariates_;
  return covariates_->rows() == other.covariates_->rows() &&
         covariates_->cols() == other.covariates_->cols() &&
         *covariates_ == *other.covariates_;
}

SurvivalSample load_dataset(std::istream& in) {
  SurvivalSample sample;
  std::string line;
  long line_no = 0;
  std::vector<std::string> header;
  int stratum_col = -1;
  std::vector<std::vector<double>> rows;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (line_no == 1 && view.substr(0, 3) == "\xEF\xBB\xBF") view.remove_prefix(3);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split_fields(view);

    if (header.empty()) {
      for (const auto f : fields) header.emplace_back(f);
      if (header.size() < 3 || header[0] != "time" || header[1] != "status") {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": header must start with 'time,status' followed by covariates");
      }
      for (std::size_t k = 2; k < header.size(); ++k) {
        if (header[k] == "stratum") {
          if (k + 1 != header.size()) {
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": 'stratum' must be the last column");
          }
          stratum_col = static_cast<int>(k);
        } else if (header[k].empty()) {
          throw ValidationError("line " + std::to_string(line_no) + ": empty column name");
        } else {
          sample.covariate_names.push_back(header[k]);
        }
      }
      if (sample.covariate_names.empty()) {
        throw ValidationError("line " + std::to_string(line_no) + ": no covariate columns");
      }
      continue;
    }

    if (fields.size() != header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    }
    const double t = parse_number(fields[0], line_no, header[0]);
    if (!std::isfinite(t) || t <= 0.0) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": time must be positive and finite");
    }
    const double st = parse_number(fields[1], line_no, header[1]);
    if (st != 0.0 && st != 1.0) {
      throw ValidationError("line " + std::to_string(line_no) + ": status must be 0 or 1");
    }
    sample.time.push_back(t);
    sample.status.push_back(static_cast<int>(st));
    std::vector<double> z;
    for (std::size_t k = 2; k < fields.size(); ++k) {
      const double v = parse_number(fields[k], line_no, header[k]);
      if (!std::isfinite(v)) {
        throw ValidationError("line " + std::to_string(line_no) + ": non-finite value in column '" +
                              header[k] + "'");
      }
      if (static_cast<int>(k) == stratum_col) {
        if (v != std::floor(v)) {
          throw ValidationError("line " + std::to_string(line_no) +
                                ": stratum must be an integer");
        }
        sample.stratum.push_back(static_cast<int>(v));
      } else {
        z.push_back(v);
      }
    }
    rows.push_back(std::move(z));
  }
  if (header.empty()) throw ValidationError("missing header row");
  if (rows.empty()) throw ValidationError("no data rows");

  const auto n = static_cast<Index>(rows.size());
  const auto p = static_cast<Index>(sample.covariate_names.size());
  sample.covariates.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < p; ++k) sample.covariates(i, k) = rows[i][k];
  }
  sample.validate();
  return sample;
}

SurvivalSample load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file '" + path + "'");
  return load_dataset(in);
}

void write_dataset(std::ostream& out, const SurvivalSample& sample) {
  out << "time,status";
  for (Index k = 0; k < sample.dimension(); ++k) {
    out << ',';
    if (static_cast<Index>(sample.covariate_names.size()) == sample.dimension()) {
      out << sample.covariate_names[k];
    } else {
      out << "z" << (k + 1);
    }
  }
  if (sample.stratified()) out << ",stratum";
  out << '\n';
  std::ostringstream row;
  row << std::setprecision(17);
  for (Index i = 0; i < sample.size(); ++i) {
    row.str({});
    row << sample.time[i] << ',' << sample.status[i];
    for (Index k = 0; k < sample.dimension(); ++k) row << ',' << sample.covariates(i, k);
    if (sample.stratified()) row << ',' << sample.stratum[i];
    out << row.str() << '\n';
  }
}

RankData rank_reduce(const SurvivalSample& sample) {
  sample.validate();
  const auto n = sample.size();

  std::map<int, std::vector<Index>> groups;
  for (Index i = 0; i < n; ++i) {
    groups[sample.stratified() ? sample.stratum[i] : 0].push_back(i);
  }

  std::vector<StratumRanks> strata;
  strata.reserve(groups.size());
  for (auto& [label, members] : groups) {
    std::stable_sort(members.begin(), members.end(), [&](Index a, Index b) {
      if (sample.time[a] != sample.time[b]) return sample.time[a] < sample.time[b];
      return sample.status[a] > sample.status[b];
    });

    StratumRanks s;
    s.label = label;
    s.sequence = members;
    s.censoring.push_back(0);
    Index tie_start = 0;
    for (Index pos = 0; pos < static_cast<Index>(members.size()); ++pos) {
      const Index subject = members[pos];
      if (sample.status[subject] == 1) {
        const bool tied = s.failures() > 0 &&
                          sample.time[s.sequence[s.failure_pos.back()]] == sample.time[subject];
        if (!tied) tie_start = pos;
        s.failure_pos.push_back(pos);
        s.riskset_start.push_back(tie_start);
        s.censoring.push_back(0);
      } else {
        ++s.censoring.back();
      }
    }
    if (s.failures() == 0) {
      throw ValidationError("stratum " + std::to_string(label) + " has no failures");
    }
    strata.push_back(std::move(s));
  }

  auto zt = std::make_shared<Matrix>(sample.covariates.transpose());
  return RankData(std::move(zt), std::move(strata));
}

}  // namespace coxhoa
