#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

double loglik(const coxhoa::SurvivalSample& s, const Vector& theta) {
  const Index n = s.size();
  auto stratum = [&](Index i) { return s.stratified() ? s.stratum[i] : 0; };
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (s.status[i] != 1) continue;
    double denom = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (stratum(j) == stratum(i) && s.time[j] >= s.time[i]) {
        denom += std::exp(s.covariates.row(j).dot(theta));
      }
    }
    total += s.covariates.row(i).dot(theta) - std::log(denom);
  }
  return total;
}

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    Vector up = x;
    Vector down = x;
    up(k) += h;
    down(k) -= h;
    g(k) = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& g, const Vector& x, double h) {
  const Vector g0 = g(x);
  Matrix jac(g0.size(), x.size());
  for (Index k = 0; k < x.size(); ++k) {
    Vector up = x;
    Vector down = x;
    up(k) += h;
    down(k) -= h;
    jac.col(k) = (g(up) - g(down)) / (2.0 * h);
  }
  return jac;
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1.0);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

double grid_argmax(const std::function<double(double)>& f, double lo, double hi, double step) {
  auto scan = [&](double a, double b, double h) {
    double best_x = a;
    double best = f(a);
    const auto count = static_cast<long>(std::floor((b - a) / h));
    for (long k = 1; k <= count; ++k) {
      const double x = a + static_cast<double>(k) * h;
      const double v = f(x);
      if (v > best) {
        best = v;
        best_x = x;
      }
    }
    return best_x;
  };
  const double coarse = scan(lo, hi, step);
  return scan(coarse - step, coarse + step, step / 100.0);
}

namespace {

void subsets(const std::vector<Index>& pool, std::size_t k, std::size_t start,
             std::vector<Index>& current, std::vector<std::vector<Index>>& out) {
  if (current.size() == k) {
    out.push_back(current);
    return;
  }
  for (std::size_t i = start; i < pool.size(); ++i) {
    current.push_back(pool[i]);
    subsets(pool, k, i + 1, current, out);
    current.pop_back();
  }
}

void enumerate(std::vector<Index> remaining, std::size_t stage, const std::vector<Index>& c,
               const Matrix& z, const Vector& theta, Outcome prefix, double prob,
               std::map<Outcome, double>& out) {
  std::sort(remaining.begin(), remaining.end());
  const std::size_t censor = static_cast<std::size_t>(c[stage]);
  if (censor > remaining.size()) return;
  std::vector<std::vector<Index>> groups;
  std::vector<Index> current;
  subsets(remaining, censor, 0, current, groups);
  const double group_prob = 1.0 / static_cast<double>(groups.size());
  for (const auto& group : groups) {
    Outcome seq = prefix;
    seq.insert(seq.end(), group.begin(), group.end());
    std::vector<Index> left;
    for (const Index s : remaining) {
      if (std::find(group.begin(), group.end(), s) == group.end()) left.push_back(s);
    }
    if (stage + 1 == c.size()) {
      if (left.empty()) out[seq] += prob * group_prob;
      continue;
    }
    double total = 0.0;
    for (const Index s : left) total += std::exp(z.row(s).dot(theta));
    for (const Index f : left) {
      Outcome next = seq;
      next.push_back(f);
      std::vector<Index> rest;
      for (const Index s : left) {
        if (s != f) rest.push_back(s);
      }
      enumerate(rest, stage + 1, c, z, theta, next,
                prob * group_prob * std::exp(z.row(f).dot(theta)) / total, out);
    }
  }
}

}  // namespace

std::map<Outcome, double> enumerate_outcomes(const std::vector<Index>& subjects,
                                             const std::vector<Index>& c,
                                             const Matrix& z_by_row, const Vector& theta) {
  std::map<Outcome, double> out;
  enumerate(subjects, 0, c, z_by_row, theta, {}, 1.0, out);
  return out;
}

Vector outcome_score(const Outcome& outcome, const std::vector<Index>& c,
                     const Matrix& z_by_row, const Vector& theta) {
  Vector u = Vector::Zero(z_by_row.cols());
  std::size_t pos = static_cast<std::size_t>(c[0]);
  for (std::size_t i = 1; i < c.size(); ++i) {
    double s0 = 0.0;
    Vector s1 = Vector::Zero(u.size());
    for (std::size_t j = pos; j < outcome.size(); ++j) {
      const double w = std::exp(z_by_row.row(outcome[j]).dot(theta));
      s0 += w;
      s1 += w * z_by_row.row(outcome[j]).transpose();
    }
    u += z_by_row.row(outcome[pos]).transpose() - s1 / s0;
    pos += 1 + static_cast<std::size_t>(c[i]);
  }
  return u;
}

Matrix exact_score_variance(const std::vector<Index>& subjects, const std::vector<Index>& c,
                            const Matrix& z_by_row, const Vector& theta) {
  const auto outcomes = enumerate_outcomes(subjects, c, z_by_row, theta);
  const Index p = z_by_row.cols();
  Vector mean = Vector::Zero(p);
  Matrix second = Matrix::Zero(p, p);
  for (const auto& [o, prob] : outcomes) {
    const Vector u = outcome_score(o, c, z_by_row, theta);
    mean += prob * u;
    second += prob * u * u.transpose();
  }
  return second - mean * mean.transpose();
}

double ks_distance(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = std::clamp(x[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_pvalue(double d, std::size_t n) {
  const double rn = std::sqrt(static_cast<double>(n));
  const double lambda = (rn + 0.12 + 0.11 / rn) * d;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

coxhoa::SurvivalSample random_sample(std::mt19937_64& gen, Index n, Index p, bool ties,
                                     double censor_fraction, int strata) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> small(1, 4);
  coxhoa::SurvivalSample s;
  s.time.resize(n);
  s.status.resize(n);
  s.covariates.resize(n, p);
  for (Index k = 0; k < p; ++k) s.covariate_names.push_back("x" + std::to_string(k + 1));
  if (strata > 1) s.stratum.resize(n);
  for (Index i = 0; i < n; ++i) {
    s.time[i] = ties ? static_cast<double>(small(gen)) : 0.05 + 3.0 * unif(gen);
    s.status[i] = unif(gen) < censor_fraction ? 0 : 1;
    for (Index k = 0; k < p; ++k) s.covariates(i, k) = normal(gen);
    if (strata > 1) s.stratum[i] = static_cast<int>(i % strata) + 1;
  }
  // One guaranteed failure per stratum.
  for (int g = 0; g < std::max(strata, 1); ++g) s.status[g] = 1;
  return s;
}

}  // namespace oracle
