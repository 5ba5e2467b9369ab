#include "transmod/survdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "transmod/errors.hpp"

namespace transmod {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string lower(std::string_view s) {
  std::string r(s);
  std::transform(r.begin(), r.end(), r.begin(), [](unsigned char c) { return std::tolower(c); });
  return r;
}

}  // namespace

Dataset Dataset::from_subjects(std::vector<Subject> subjects) {
  if (subjects.empty()) throw InputError("dataset is empty");
  const auto d = static_cast<std::size_t>(subjects.front().z.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    if (!std::isfinite(s.time) || s.time < 0.0)
      throw InputError("subject " + std::to_string(i) + ": time must be finite and >= 0");
    if (s.status != 0 && s.status != 1)
      throw InputError("subject " + std::to_string(i) + ": status must be 0 or 1");
    if (static_cast<std::size_t>(s.z.size()) != d)
      throw InputError("subject " + std::to_string(i) + ": inconsistent covariate dimension");
    if (!s.z.allFinite())
      throw InputError("subject " + std::to_string(i) + ": covariates must be finite");
  }

  // Stable sort keeps input order among tied times, so ingestion is deterministic.
  std::stable_sort(subjects.begin(), subjects.end(),
                   [](const Subject& a, const Subject& b) { return a.time < b.time; });

  Dataset ds;
  const std::size_t n = subjects.size();
  ds.times_.resize(n);
  ds.status_.resize(n);
  ds.covariates_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    ds.times_[i] = subjects[i].time;
    ds.status_[i] = subjects[i].status;
    if (d > 0) ds.covariates_.row(static_cast<Eigen::Index>(i)) = subjects[i].z.transpose();
    if (d > 0) ds.c_bound_ = std::max(ds.c_bound_, subjects[i].z.cwiseAbs().maxCoeff());
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t k = i;
    std::size_t events = 0;
    while (k < n && ds.times_[k] == ds.times_[i]) {
      events += static_cast<std::size_t>(ds.status_[k]);
      ++k;
    }
    if (events > 0) {
      ds.grid_.push_back(ds.times_[i]);
      ds.event_count_.push_back(events);
      ds.event_mass_.push_back(static_cast<double>(events) * inv_n);
      ds.at_risk_.push_back(static_cast<double>(n - i) * inv_n);
      ds.first_at_risk_.push_back(i);
      ds.n_events_ += events;
    }
    i = k;
  }
  return ds;
}

Subject Dataset::subject(std::size_t i) const {
  return Subject{times_[i], status_[i], covariates_.row(static_cast<Eigen::Index>(i)).transpose()};
}

std::size_t Dataset::count_at_risk(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  return static_cast<std::size_t>(times_.end() - it);
}

Dataset ingest_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw InputError("CSV input is empty");
  for (auto f : split_commas(line)) header.emplace_back(f);
  if (header.size() < 2 || lower(header[0]) != "time" || lower(header[1]) != "status")
    throw InputError("CSV header must start with `time,status`");
  const std::size_t cols = header.size();
  const std::size_t d = cols - 2;

  std::vector<Subject> subjects;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_commas(line);
    if (fields.size() != cols) {
      throw InputError("row " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                       " columns, found " + std::to_string(fields.size()));
    }
    double values[2];
    Subject s;
    s.z.resize(static_cast<Eigen::Index>(d));
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v) || !std::isfinite(v)) {
        throw InputError("row " + std::to_string(line_no) + ", column '" + header[c] +
                         "': cannot parse '" + std::string(fields[c]) + "' as a finite number");
      }
      if (c < 2)
        values[c] = v;
      else
        s.z[static_cast<Eigen::Index>(c - 2)] = v;
    }
    if (values[0] < 0.0)
      throw InputError("row " + std::to_string(line_no) + ", column 'time': negative time");
    if (values[1] != 0.0 && values[1] != 1.0)
      throw InputError("row " + std::to_string(line_no) + ", column 'status': must be 0 or 1");
    s.time = values[0];
    s.status = static_cast<int>(values[1]);
    subjects.push_back(std::move(s));
  }
  if (subjects.empty()) throw InputError("CSV input has a header but no data rows");
  return Dataset::from_subjects(std::move(subjects));
}

Dataset ingest_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file '" + path + "'");
  return ingest_csv(in);
}

namespace {
void put_double(std::ostream& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}
}  // namespace

void write_csv(std::ostream& out, const Dataset& data) {
  out << "time,status";
  for (std::size_t k = 0; k < data.d(); ++k) out << ",z" << (k + 1);
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    put_double(out, data.times()[i]);
    out << ',' << data.status()[i];
    for (std::size_t k = 0; k < data.d(); ++k) {
      out << ',';
      put_double(out, data.z(i)[k]);
    }
    out << '\n';
  }
}

std::string TauRule::describe() const {
  std::ostringstream os;
  switch (kind) {
    case TauRuleKind::quantile: os << "quantile(" << value << ")"; break;
    case TauRuleKind::fixed: os << "fixed(" << value << ")"; break;
    case TauRuleKind::last_event: os << "last_event"; break;
  }
  return os.str();
}

Horizon choose_tau(const Dataset& data, const TauRule& rule) {
  if (data.grid_size() == 0) throw InputError("horizon: dataset has no events");
  const auto grid = data.grid();
  const double n = static_cast<double>(data.n());
  Horizon h;
  h.rule = rule;

  switch (rule.kind) {
    case TauRuleKind::quantile: {
      const double q = rule.value;
      if (!(q > 0.0 && q <= 1.0)) throw InputError("horizon: quantile must lie in (0, 1]");
      const double floor_count = (1.0 - q) * n;
      bool found = false;
      for (std::size_t j = grid.size(); j-- > 0;) {
        const double count = data.at_risk()[j] * n;
        if (count + 1e-9 * n >= floor_count && count >= 1.0) {
          h.grid_index = j;
          found = true;
          break;
        }
      }
      if (!found) throw InputError("horizon: no event time satisfies the quantile rule");
      h.tau = grid[h.grid_index];
      break;
    }
    case TauRuleKind::fixed: {
      const double t = rule.value;
      if (!std::isfinite(t) || t > data.max_time())
        throw InputError("horizon: fixed tau lies beyond the last observed time (at-risk set would be empty)");
      if (t < grid.front()) throw InputError("horizon: no event time at or before the fixed tau");
      auto it = std::upper_bound(grid.begin(), grid.end(), t);
      h.grid_index = static_cast<std::size_t>(it - grid.begin()) - 1;
      h.tau = t;
      break;
    }
    case TauRuleKind::last_event: {
      const std::size_t need = data.d() + 1;
      bool found = false;
      for (std::size_t j = grid.size(); j-- > 0;) {
        if (data.n() - data.first_at_risk()[j] >= need) {
          h.grid_index = j;
          found = true;
          break;
        }
      }
      if (!found) throw InputError("horizon: no event time has d+1 subjects at risk");
      h.tau = grid[h.grid_index];
      break;
    }
  }
  return h;
}

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

StepFunction aalen_nelson(const Dataset& data, const Horizon& horizon) {
  StepFunction f;
  double acc = 0.0;
  for (std::size_t j = 0; j <= horizon.grid_index && j < data.grid_size(); ++j) {
    acc += data.event_mass()[j] / data.at_risk()[j];
    f.times.push_back(data.grid()[j]);
    f.values.push_back(acc);
  }
  return f;
}

nlohmann::json dataset_summary(const Dataset& data) {
  nlohmann::json j;
  j["n"] = data.n();
  j["d"] = data.d();
  j["n_events"] = data.n_events();
  j["grid"] = std::vector<double>(data.grid().begin(), data.grid().end());
  j["at_risk"] = std::vector<double>(data.at_risk().begin(), data.at_risk().end());
  return j;
}

}  // namespace transmod
