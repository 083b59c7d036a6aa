#include "tram/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "tram/io.hpp"

namespace tram {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

bool single_class(const std::vector<int>& y, int& seen) {
  seen = y.front();
  return std::all_of(y.begin(), y.end(), [&](int v) { return v == seen; });
}

void check_training_data(const std::vector<FeatureRow>& x, const std::vector<int>& y) {
  if (x.empty()) throw std::invalid_argument("fit: empty training set");
  if (x.size() != y.size()) throw std::invalid_argument("fit: one label per row");
  const std::size_t width = x.front().size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != width) throw std::invalid_argument("fit: ragged feature rows");
    for (double v : x[i]) {
      if (!std::isfinite(v)) throw std::invalid_argument("fit: non-finite feature in row " + std::to_string(i));
    }
    if (y[i] != 0 && y[i] != 1) throw std::invalid_argument("fit: labels must be 0 or 1");
  }
}

// ---------------------------------------------------------------------------
// Trees

struct TreeBuilder {
  const std::vector<FeatureRow>& x;
  std::size_t max_features;
  std::size_t max_depth;
  std::mt19937_64* rng;
  Tree tree;

  TreeBuilder(const std::vector<FeatureRow>& xs, std::size_t mf, std::size_t md, std::mt19937_64* r)
      : x(xs), max_features(mf), max_depth(md), rng(r) {}
  virtual ~TreeBuilder() = default;
  virtual double leaf_value(const std::vector<std::size_t>& rows) const = 0;
  virtual bool pure(const std::vector<std::size_t>& rows) const = 0;
  // Best split over `feature`: lowest child cost, threshold. Returns false if
  // the feature is constant over `rows`.
  virtual bool best_split(std::vector<std::size_t>& rows, std::size_t feature, double& cost,
                          double& threshold) const = 0;

  int add_leaf(double value) {
    tree.feature.push_back(-1);
    tree.threshold.push_back(0.0);
    tree.left.push_back(-1);
    tree.right.push_back(-1);
    tree.value.push_back(value);
    return static_cast<int>(tree.feature.size() - 1);
  }

  std::vector<std::size_t> candidate_features() const {
    const std::size_t nf = x.front().size();
    std::vector<std::size_t> all(nf);
    std::iota(all.begin(), all.end(), 0);
    if (max_features == 0 || max_features >= nf) return all;
    // Partial Fisher-Yates draw, then restore index order so ties between
    // features resolve the same way as in a full scan.
    for (std::size_t i = 0; i < max_features; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, nf - 1);
      std::swap(all[i], all[pick(*rng)]);
    }
    all.resize(max_features);
    std::sort(all.begin(), all.end());
    return all;
  }

  int build(std::vector<std::size_t> rows, std::size_t depth) {
    const int node = add_leaf(leaf_value(rows));
    if (rows.size() < 2 || pure(rows) || (max_depth > 0 && depth >= max_depth)) return node;
    bool found = false;
    double best_cost = 0.0, best_threshold = 0.0;
    std::size_t best_feature = 0;
    for (std::size_t f : candidate_features()) {
      double cost = 0.0, threshold = 0.0;
      if (!best_split(rows, f, cost, threshold)) continue;
      if (!found || cost < best_cost) {
        found = true;
        best_cost = cost;
        best_threshold = threshold;
        best_feature = f;
      }
    }
    if (!found) return node;
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x[r][best_feature] <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    tree.feature[static_cast<std::size_t>(node)] = static_cast<int>(best_feature);
    tree.threshold[static_cast<std::size_t>(node)] = best_threshold;
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    tree.left[static_cast<std::size_t>(node)] = l;
    tree.right[static_cast<std::size_t>(node)] = r;
    return node;
  }

  static double midpoint(double a, double b) {
    const double m = a + (b - a) / 2.0;
    return m < b ? m : a;
  }

  void sort_by(std::vector<std::size_t>& rows, std::size_t f) const {
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });
  }
};

struct GiniBuilder final : TreeBuilder {
  const std::vector<int>& y;

  GiniBuilder(const std::vector<FeatureRow>& xs, const std::vector<int>& ys, std::size_t mf,
              std::size_t md, std::mt19937_64* r)
      : TreeBuilder(xs, mf, md, r), y(ys) {}

  double leaf_value(const std::vector<std::size_t>& rows) const override {
    std::size_t ones = 0;
    for (auto r : rows) ones += static_cast<std::size_t>(y[r]);
    return rows.empty() ? 0.0 : static_cast<double>(ones) / static_cast<double>(rows.size());
  }
  bool pure(const std::vector<std::size_t>& rows) const override {
    return std::all_of(rows.begin(), rows.end(), [&](auto r) { return y[r] == y[rows.front()]; });
  }
  // n * gini = n - (n0^2 + n1^2) / n
  static double weighted_gini(double n0, double n1) {
    const double n = n0 + n1;
    return n == 0 ? 0.0 : n - (n0 * n0 + n1 * n1) / n;
  }
  bool best_split(std::vector<std::size_t>& rows, std::size_t f, double& cost,
                  double& threshold) const override {
    sort_by(rows, f);
    double total1 = 0;
    for (auto r : rows) total1 += y[r];
    const double total0 = static_cast<double>(rows.size()) - total1;
    double l0 = 0, l1 = 0;
    bool found = false;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      (y[rows[i]] ? l1 : l0) += 1;
      const double a = x[rows[i]][f], b = x[rows[i + 1]][f];
      if (a == b) continue;
      const double c = weighted_gini(l0, l1) + weighted_gini(total0 - l0, total1 - l1);
      if (!found || c < cost) {
        found = true;
        cost = c;
        threshold = midpoint(a, b);
      }
    }
    return found;
  }
};

// Regression tree on residuals with Newton leaf values for logistic loss.
struct BoostingBuilder final : TreeBuilder {
  const std::vector<double>& residual;
  const std::vector<double>& hessian;

  BoostingBuilder(const std::vector<FeatureRow>& xs, const std::vector<double>& r,
                  const std::vector<double>& h, std::size_t md)
      : TreeBuilder(xs, 0, md, nullptr), residual(r), hessian(h) {}

  double leaf_value(const std::vector<std::size_t>& rows) const override {
    double num = 0, den = 0;
    for (auto r : rows) {
      num += residual[r];
      den += hessian[r];
    }
    return den < 1e-150 ? 0.0 : num / den;
  }
  bool pure(const std::vector<std::size_t>& rows) const override {
    return std::all_of(rows.begin(), rows.end(),
                       [&](auto r) { return residual[r] == residual[rows.front()]; });
  }
  // Sum of squared errors around each child mean.
  bool best_split(std::vector<std::size_t>& rows, std::size_t f, double& cost,
                  double& threshold) const override {
    sort_by(rows, f);
    double total = 0, total_sq = 0;
    for (auto r : rows) {
      total += residual[r];
      total_sq += residual[r] * residual[r];
    }
    double ls = 0, lsq = 0;
    bool found = false;
    const double n = static_cast<double>(rows.size());
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      ls += residual[rows[i]];
      lsq += residual[rows[i]] * residual[rows[i]];
      const double a = x[rows[i]][f], b = x[rows[i + 1]][f];
      if (a == b) continue;
      const double nl = static_cast<double>(i + 1), nr = n - nl;
      const double rs = total - ls, rsq = total_sq - lsq;
      const double c = (lsq - ls * ls / nl) + (rsq - rs * rs / nr);
      if (!found || c < cost) {
        found = true;
        cost = c;
        threshold = midpoint(a, b);
      }
    }
    return found;
  }
};

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// ---------------------------------------------------------------------------
// Families

RandomForestModel fit_forest(const std::vector<FeatureRow>& x, const std::vector<int>& y,
                             const EnsembleParams& params) {
  if (params.forest_trees == 0) throw std::invalid_argument("forest_trees must be positive");
  const std::size_t nf = x.front().size();
  const std::size_t mf = params.forest_max_features == 0
                             ? std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(nf))))
                             : params.forest_max_features;
  RandomForestModel model;
  for (std::size_t t = 0; t < params.forest_trees; ++t) {
    std::seed_seq seq{params.seed, static_cast<std::uint64_t>(t)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> rows;
    if (params.forest_bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, x.size() - 1);
      for (std::size_t i = 0; i < x.size(); ++i) rows.push_back(draw(rng));
    } else {
      rows = all_rows(x.size());
    }
    model.trees.push_back(fit_classification_tree(x, y, rows, mf, &rng));
  }
  return model;
}

double boosting_score(const GradientBoostingModel& m, const FeatureRow& x) {
  double f = m.init;
  for (const auto& t : m.stages) f += m.learning_rate * t.predict(x);
  return f;
}

GradientBoostingModel fit_boosting(const std::vector<FeatureRow>& x, const std::vector<int>& y,
                                   const EnsembleParams& params) {
  const std::size_t n = x.size();
  const double pos = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  GradientBoostingModel m;
  m.init = std::log(pos / (1.0 - pos));
  m.learning_rate = params.boosting_learning_rate;
  std::vector<double> f(n, m.init), residual(n), hessian(n), prob(n);
  for (std::size_t s = 0; s < params.boosting_stages; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(f[i]);
      residual[i] = y[i] - p;
      hessian[i] = p * (1.0 - p);
    }
    BoostingBuilder b(x, residual, hessian, params.boosting_depth);
    b.build(all_rows(n), 0);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] += m.learning_rate * b.tree.predict(x[i]);
      prob[i] = sigmoid(f[i]);
    }
    m.stages.push_back(std::move(b.tree));
    m.train_loss.push_back(log_loss(y, prob));
  }
  return m;
}

LogisticModel fit_logistic(const std::vector<FeatureRow>& x, const std::vector<int>& y,
                           const EnsembleParams& params) {
  const std::size_t n = x.size(), nf = x.front().size();
  const double nd = static_cast<double>(n);
  LogisticModel m;
  m.mean.assign(nf, 0.0);
  m.scale.assign(nf, 1.0);
  for (const auto& row : x)
    for (std::size_t f = 0; f < nf; ++f) m.mean[f] += row[f] / nd;
  for (std::size_t f = 0; f < nf; ++f) {
    double ss = 0;
    for (const auto& row : x) ss += (row[f] - m.mean[f]) * (row[f] - m.mean[f]);
    const double sd = std::sqrt(ss / nd);
    m.scale[f] = sd > 1e-12 ? sd : 1.0;
  }
  std::vector<FeatureRow> z(n, FeatureRow(nf));
  double frob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < nf; ++f) {
      z[i][f] = (x[i][f] - m.mean[f]) / m.scale[f];
      frob += z[i][f] * z[i][f];
    }
  }
  // Objective: mean log loss + lambda / (2n) * |w|^2. Step 1/L with L an upper
  // bound on the Hessian norm.
  const double lipschitz = 0.25 * (frob + nd) / nd + params.logistic_lambda / nd;
  const double step = 1.0 / lipschitz;
  m.weights.assign(nf, 0.0);
  std::vector<double> grad(nf);
  for (m.iterations = 0; m.iterations < params.logistic_max_iter; ++m.iterations) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = m.bias;
      for (std::size_t f = 0; f < nf; ++f) s += m.weights[f] * z[i][f];
      const double err = sigmoid(s) - y[i];
      for (std::size_t f = 0; f < nf; ++f) grad[f] += err * z[i][f] / nd;
      grad_b += err / nd;
    }
    double worst = std::abs(grad_b);
    for (std::size_t f = 0; f < nf; ++f) {
      grad[f] += params.logistic_lambda / nd * m.weights[f];
      worst = std::max(worst, std::abs(grad[f]));
    }
    if (worst < params.logistic_tolerance) break;
    for (std::size_t f = 0; f < nf; ++f) m.weights[f] -= step * grad[f];
    m.bias -= step * grad_b;
  }
  return m;
}

double rbf(const FeatureRow& a, const FeatureRow& b, double gamma) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * d);
}

// Platt scaling with the Newton method of Lin, Lin and Weng; p1 = 1 / (1 + exp(A f + B)).
void fit_platt(const std::vector<double>& dec, const std::vector<int>& y, double& a_out, double& b_out) {
  double prior1 = 0, prior0 = 0;
  for (int v : y) (v ? prior1 : prior0) += 1;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0), lo = 1.0 / (prior0 + 2.0);
  const std::size_t n = dec.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = y[i] ? hi : lo;
  double A = 0.0, B = std::log((prior0 + 1.0) / (prior1 + 1.0));
  const auto objective = [&](double a, double b) {
    double fval = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fa = dec[i] * a + b;
      fval += fa >= 0 ? t[i] * fa + std::log1p(std::exp(-fa)) : (t[i] - 1) * fa + std::log1p(std::exp(fa));
    }
    return fval;
  };
  double fval = objective(A, B);
  const double sigma = 1e-12, min_step = 1e-10, eps = 1e-5;
  for (int it = 0; it < 100; ++it) {
    double h11 = sigma, h22 = sigma, h21 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fa = dec[i] * A + B;
      double p, q;
      if (fa >= 0) {
        p = std::exp(-fa) / (1.0 + std::exp(-fa));
        q = 1.0 / (1.0 + std::exp(-fa));
      } else {
        p = 1.0 / (1.0 + std::exp(fa));
        q = std::exp(fa) / (1.0 + std::exp(fa));
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = t[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < eps && std::abs(g2) < eps) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double stepsize = 1;
    while (stepsize >= min_step) {
      const double na = A + stepsize * dA, nb = B + stepsize * dB;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * stepsize * gd) {
        A = na;
        B = nb;
        fval = nf;
        break;
      }
      stepsize /= 2.0;
    }
    if (stepsize < min_step) break;
  }
  a_out = A;
  b_out = B;
}

// SMO with maximal-violating-pair working set selection.
SvmModel fit_svm(const std::vector<FeatureRow>& x, const std::vector<int>& labels,
                 const EnsembleParams& params) {
  const std::size_t n = x.size(), nf = x.front().size();
  SvmModel m;
  if (params.svm_gamma) {
    m.gamma = *params.svm_gamma;
  } else {
    double mean = 0, total = static_cast<double>(n * nf);
    for (const auto& row : x)
      for (double v : row) mean += v / total;
    double var = 0;
    for (const auto& row : x)
      for (double v : row) var += (v - mean) * (v - mean) / total;
    m.gamma = var > 0 ? 1.0 / (static_cast<double>(nf) * var) : 1.0;
  }
  const double C = params.svm_c;
  std::vector<double> y(n), alpha(n, 0.0), grad(n, -1.0);
  for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] ? 1.0 : -1.0;
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) K[i * n + j] = K[j * n + i] = rbf(x[i], x[j], m.gamma);
  const auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K[i * n + j]; };
  const auto in_up = [&](std::size_t t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
  const auto in_low = [&](std::size_t t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };

  for (m.iterations = 0; m.iterations < params.svm_max_iter; ++m.iterations) {
    double gmax = -INFINITY, gmin = INFINITY;
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i == n || j == n || gmax - gmin < params.svm_tolerance) break;

    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = Q(i, i) + Q(j, j) + 2 * Q(i, j);
      if (quad <= 0) quad = 1e-12;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Q(i, i) + Q(j, j) - 2 * Q(i, j);
      if (quad <= 0) quad = 1e-12;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += Q(t, i) * dai + Q(t, j) * daj;
  }

  // rho from free variables, else the midpoint of the feasible interval.
  double ub = INFINITY, lb = -INFINITY, sum_free = 0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  m.bias = -rho;

  std::vector<double> dec(n);
  for (std::size_t t = 0; t < n; ++t) {
    double f = m.bias;
    for (std::size_t s = 0; s < n; ++s) f += alpha[s] * y[s] * K[s * n + t];
    dec[t] = f;
    const double margin = y[t] * f;
    double violation = 0;
    if (alpha[t] <= 0) violation = std::max(0.0, 1.0 - margin);
    else if (alpha[t] >= C) violation = std::max(0.0, margin - 1.0);
    else violation = std::abs(margin - 1.0);
    m.max_kkt_violation = std::max(m.max_kkt_violation, violation);
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0) {
      m.support.push_back(x[t]);
      m.coef.push_back(alpha[t] * y[t]);
    }
  }
  fit_platt(dec, labels, m.platt_a, m.platt_b);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<int> TabularDataset::label_column(std::size_t s) const {
  std::vector<int> out;
  out.reserve(y.size());
  for (const auto& row : y) out.push_back(row.at(s));
  return out;
}

std::vector<FeatureRow> impute_zeros(std::vector<FeatureRow> x) {
  for (auto& row : x)
    for (auto& v : row)
      if (std::isnan(v)) v = 0.0;
  return x;
}

FeatureRow feature_row(const DailyStats& stats) { return FeatureRow(stats.values.begin(), stats.values.end()); }

TabularDataset make_dataset(const std::vector<DailyStats>& stats, const std::vector<LabelVector>& labels) {
  std::map<UserDay, const LabelVector*> by_key;
  for (const auto& l : labels) by_key[l.user_day] = &l;
  TabularDataset data;
  for (const auto& s : stats) {
    const auto it = by_key.find(s.user_day);
    if (it == by_key.end()) continue;
    data.x.push_back(feature_row(s));
    std::array<int, kNumSLabels> y{};
    for (std::size_t k = 0; k < kNumSLabels; ++k) y[k] = it->second->values[3 + k];
    data.y.push_back(y);
    data.keys.push_back(s.user_day);
  }
  data.x = impute_zeros(std::move(data.x));
  return data;
}

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::RandomForest: return "random_forest";
    case ClassifierKind::GradientBoosting: return "gradient_boosting";
    case ClassifierKind::LogisticRegression: return "logistic_regression";
    case ClassifierKind::SupportVectorMachine: return "svm";
    case ClassifierKind::DecisionTree: return "decision_tree";
    case ClassifierKind::KNearestNeighbors: return "knn";
  }
  throw std::invalid_argument("unknown classifier kind");
}

ClassifierKind classifier_kind_from_string(const std::string& name) {
  for (auto k : kAllClassifierKinds)
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown classifier kind '" + name + "'");
}

EnsembleParams EnsembleParams::from_json(const nlohmann::json& j, EnsembleParams p) {
  if (!j.is_object()) throw std::invalid_argument("ensemble params: expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "forest_trees") p.forest_trees = v.get<std::size_t>();
    else if (key == "forest_bootstrap") p.forest_bootstrap = v.get<bool>();
    else if (key == "forest_max_features") p.forest_max_features = v.get<std::size_t>();
    else if (key == "boosting_stages") p.boosting_stages = v.get<std::size_t>();
    else if (key == "boosting_depth") p.boosting_depth = v.get<std::size_t>();
    else if (key == "boosting_learning_rate") p.boosting_learning_rate = v.get<double>();
    else if (key == "logistic_lambda") p.logistic_lambda = v.get<double>();
    else if (key == "logistic_tolerance") p.logistic_tolerance = v.get<double>();
    else if (key == "logistic_max_iter") p.logistic_max_iter = v.get<std::size_t>();
    else if (key == "svm_c") p.svm_c = v.get<double>();
    else if (key == "svm_gamma") p.svm_gamma = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    else if (key == "svm_tolerance") p.svm_tolerance = v.get<double>();
    else if (key == "svm_max_iter") p.svm_max_iter = v.get<std::size_t>();
    else if (key == "knn_k") p.knn_k = v.get<std::size_t>();
    else if (key == "seed") p.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("ensemble params: unknown key '" + key + "'");
  }
  if (p.knn_k == 0) throw std::invalid_argument("ensemble params: knn_k must be positive");
  if (p.svm_c <= 0) throw std::invalid_argument("ensemble params: svm_c must be positive");
  return p;
}

nlohmann::json EnsembleParams::to_json() const {
  return {{"forest_trees", forest_trees},
          {"forest_bootstrap", forest_bootstrap},
          {"forest_max_features", forest_max_features},
          {"boosting_stages", boosting_stages},
          {"boosting_depth", boosting_depth},
          {"boosting_learning_rate", boosting_learning_rate},
          {"logistic_lambda", logistic_lambda},
          {"logistic_tolerance", logistic_tolerance},
          {"logistic_max_iter", logistic_max_iter},
          {"svm_c", svm_c},
          {"svm_gamma", svm_gamma ? nlohmann::json(*svm_gamma) : nlohmann::json(nullptr)},
          {"svm_tolerance", svm_tolerance},
          {"svm_max_iter", svm_max_iter},
          {"knn_k", knn_k},
          {"seed", seed}};
}

double Tree::predict(const FeatureRow& x) const {
  std::size_t node = 0;
  while (feature[node] >= 0) {
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(feature[node])] <= threshold[node] ? left[node]
                                                                                                   : right[node]);
  }
  return value[node];
}

double SvmModel::decision(const FeatureRow& x) const {
  double f = bias;
  for (std::size_t i = 0; i < support.size(); ++i) f += coef[i] * rbf(support[i], x, gamma);
  return f;
}

Tree fit_classification_tree(const std::vector<FeatureRow>& x, const std::vector<int>& y,
                             const std::vector<std::size_t>& rows, std::size_t max_features,
                             std::mt19937_64* rng, std::size_t max_depth) {
  if (rows.empty()) throw std::invalid_argument("tree: no rows");
  if (max_features > 0 && max_features < x.front().size() && rng == nullptr) {
    throw std::invalid_argument("tree: feature sampling needs an rng");
  }
  GiniBuilder b(x, y, max_features, max_depth, rng);
  b.build(rows, 0);
  return std::move(b.tree);
}

std::pair<double, double> TrainedClassifier::predict_proba(const FeatureRow& x) const {
  if (x.size() != n_features) {
    throw std::invalid_argument("predict_proba: expected " + std::to_string(n_features) + " features, got " +
                                std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("predict_proba: non-finite input");
  }
  const double p1 = std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantModel>) {
          return m.label;
        } else if constexpr (std::is_same_v<T, DecisionTreeModel>) {
          return m.tree.predict(x);
        } else if constexpr (std::is_same_v<T, RandomForestModel>) {
          std::size_t votes = 0;
          for (const auto& t : m.trees) votes += t.predict(x) > 0.5 ? 1 : 0;
          return static_cast<double>(votes) / static_cast<double>(m.trees.size());
        } else if constexpr (std::is_same_v<T, GradientBoostingModel>) {
          return sigmoid(boosting_score(m, x));
        } else if constexpr (std::is_same_v<T, LogisticModel>) {
          double s = m.bias;
          for (std::size_t f = 0; f < x.size(); ++f) s += m.weights[f] * (x[f] - m.mean[f]) / m.scale[f];
          return sigmoid(s);
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          return sigmoid(-(m.platt_a * m.decision(x) + m.platt_b));
        } else {
          std::vector<std::pair<double, std::size_t>> d;
          d.reserve(m.x.size());
          for (std::size_t i = 0; i < m.x.size(); ++i) {
            double s = 0;
            for (std::size_t f = 0; f < x.size(); ++f) s += (m.x[i][f] - x[f]) * (m.x[i][f] - x[f]);
            d.emplace_back(s, i);
          }
          const std::size_t k = std::min(m.k, d.size());
          std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
          std::size_t ones = 0;
          for (std::size_t i = 0; i < k; ++i) ones += static_cast<std::size_t>(m.y[d[i].second]);
          return static_cast<double>(ones) / static_cast<double>(k);
        }
      },
      state);
  return {1.0 - p1, p1};
}

TrainedClassifier fit(ClassifierKind kind, const std::vector<FeatureRow>& x, const std::vector<int>& y,
                      const EnsembleParams& params) {
  check_training_data(x, y);
  TrainedClassifier c;
  c.kind = kind;
  c.n_features = x.front().size();
  int seen = 0;
  if (single_class(y, seen)) {
    c.state = ConstantModel{seen};
    c.warning = to_string(kind) + ": training labels are all " + std::to_string(seen) +
                "; using a constant classifier";
    return c;
  }
  switch (kind) {
    case ClassifierKind::RandomForest: c.state = fit_forest(x, y, params); break;
    case ClassifierKind::GradientBoosting: c.state = fit_boosting(x, y, params); break;
    case ClassifierKind::LogisticRegression: c.state = fit_logistic(x, y, params); break;
    case ClassifierKind::SupportVectorMachine: c.state = fit_svm(x, y, params); break;
    case ClassifierKind::DecisionTree: c.state = DecisionTreeModel{fit_classification_tree(x, y, all_rows(x.size()), 0, nullptr)}; break;
    case ClassifierKind::KNearestNeighbors: c.state = KnnModel{x, y, params.knn_k}; break;
  }
  return c;
}

VoteResult soft_vote(const std::vector<double>& member_p1) {
  if (member_p1.empty()) throw std::invalid_argument("soft_vote: no members");
  double total = 0;
  for (double p : member_p1) total += p;
  const double mean = total / static_cast<double>(member_p1.size());
  return {mean, mean > 0.5 ? 1 : 0};
}

VoteResult soft_vote(const std::vector<TrainedClassifier>& members, const FeatureRow& x) {
  std::vector<double> p;
  p.reserve(members.size());
  for (const auto& m : members) p.push_back(m.predict_proba(x).second);
  return soft_vote(p);
}

int hard_vote(const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("hard_vote: empty list");
  const auto ones = std::count(labels.begin(), labels.end(), 1);
  return 2 * static_cast<std::size_t>(ones) > labels.size() ? 1 : 0;
}

std::array<VoteResult, kNumSLabels> MultiOutputModel::predict(const FeatureRow& x) const {
  std::array<VoteResult, kNumSLabels> out;
  for (std::size_t s = 0; s < kNumSLabels; ++s) out[s] = labels[s].predict(x);
  return out;
}

std::vector<std::string> MultiOutputModel::warnings() const {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < kNumSLabels; ++s)
    for (const auto& m : labels[s].members)
      if (m.warning) out.push_back(std::string(kLabelNames[3 + s]) + " " + *m.warning);
  return out;
}

MultiOutputModel fit_multi_output(const TabularDataset& data, const EnsembleParams& params) {
  if (data.size() == 0) throw std::invalid_argument("fit_multi_output: empty dataset");
  MultiOutputModel model;
  model.params = params;
  const auto x = impute_zeros(data.x);
  if (x.front().size() == kDailyFeatures) {
    const auto& names = daily_feature_names();
    model.feature_names.assign(names.begin(), names.end());
  }
  for (std::size_t s = 0; s < kNumSLabels; ++s) {
    const auto y = data.label_column(s);
    for (auto kind : kAllClassifierKinds) {
      try {
        model.labels[s].members.push_back(fit(kind, x, y, params));
      } catch (const std::exception& e) {
        throw std::runtime_error(std::string(kLabelNames[3 + s]) + " / " + to_string(kind) + ": " + e.what());
      }
    }
  }
  return model;
}

double log_loss(const std::vector<int>& y, const std::vector<double>& p) {
  double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double q = std::clamp(p[i], 1e-15, 1.0 - 1e-15);
    total -= y[i] ? std::log(q) : std::log(1.0 - q);
  }
  return total / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json tree_json(const Tree& t) {
  return {{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left}, {"right", t.right}, {"value", t.value}};
}

Tree tree_from(const nlohmann::json& j) {
  Tree t{j.at("feature").get<std::vector<int>>(), j.at("threshold").get<std::vector<double>>(),
         j.at("left").get<std::vector<int>>(), j.at("right").get<std::vector<int>>(),
         j.at("value").get<std::vector<double>>()};
  const std::size_t n = t.feature.size();
  if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.value.size() != n) {
    throw std::runtime_error("ensemble bundle: malformed tree");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.feature[i] < 0) continue;
    const auto ok = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(n); };
    if (!ok(t.left[i]) || !ok(t.right[i])) throw std::runtime_error("ensemble bundle: malformed tree");
  }
  return t;
}

nlohmann::json trees_json(const std::vector<Tree>& trees) {
  auto arr = nlohmann::json::array();
  for (const auto& t : trees) arr.push_back(tree_json(t));
  return arr;
}

std::vector<Tree> trees_from(const nlohmann::json& j) {
  std::vector<Tree> out;
  for (const auto& t : j) out.push_back(tree_from(t));
  return out;
}

nlohmann::json classifier_json(const TrainedClassifier& c) {
  nlohmann::json j{{"kind", to_string(c.kind)}, {"n_features", c.n_features}};
  if (c.warning) j["warning"] = *c.warning;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantModel>) {
          j["model"] = "constant";
          j["label"] = m.label;
        } else if constexpr (std::is_same_v<T, DecisionTreeModel>) {
          j["model"] = "tree";
          j["tree"] = tree_json(m.tree);
        } else if constexpr (std::is_same_v<T, RandomForestModel>) {
          j["model"] = "forest";
          j["trees"] = trees_json(m.trees);
        } else if constexpr (std::is_same_v<T, GradientBoostingModel>) {
          j["model"] = "boosting";
          j["init"] = m.init;
          j["learning_rate"] = m.learning_rate;
          j["stages"] = trees_json(m.stages);
          j["train_loss"] = m.train_loss;
        } else if constexpr (std::is_same_v<T, LogisticModel>) {
          j["model"] = "logistic";
          j["mean"] = m.mean;
          j["scale"] = m.scale;
          j["weights"] = m.weights;
          j["bias"] = m.bias;
          j["iterations"] = m.iterations;
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          j["model"] = "svm";
          j["support"] = m.support;
          j["coef"] = m.coef;
          j["bias"] = m.bias;
          j["gamma"] = m.gamma;
          j["platt_a"] = m.platt_a;
          j["platt_b"] = m.platt_b;
          j["iterations"] = m.iterations;
          j["max_kkt_violation"] = m.max_kkt_violation;
        } else {
          j["model"] = "knn";
          j["x"] = m.x;
          j["y"] = m.y;
          j["k"] = m.k;
        }
      },
      c.state);
  return j;
}

TrainedClassifier classifier_from(const nlohmann::json& j) {
  TrainedClassifier c;
  c.kind = classifier_kind_from_string(j.at("kind").get<std::string>());
  c.n_features = j.at("n_features").get<std::size_t>();
  if (j.contains("warning")) c.warning = j.at("warning").get<std::string>();
  const auto model = j.at("model").get<std::string>();
  if (model == "constant") {
    c.state = ConstantModel{j.at("label").get<int>()};
  } else if (model == "tree") {
    c.state = DecisionTreeModel{tree_from(j.at("tree"))};
  } else if (model == "forest") {
    c.state = RandomForestModel{trees_from(j.at("trees"))};
  } else if (model == "boosting") {
    c.state = GradientBoostingModel{j.at("init").get<double>(), j.at("learning_rate").get<double>(),
                                    trees_from(j.at("stages")), j.at("train_loss").get<std::vector<double>>()};
  } else if (model == "logistic") {
    c.state = LogisticModel{j.at("mean").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>(),
                            j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>(),
                            j.at("iterations").get<std::size_t>()};
  } else if (model == "svm") {
    c.state = SvmModel{j.at("support").get<std::vector<FeatureRow>>(),
                       j.at("coef").get<std::vector<double>>(),
                       j.at("bias").get<double>(),
                       j.at("gamma").get<double>(),
                       j.at("platt_a").get<double>(),
                       j.at("platt_b").get<double>(),
                       j.at("iterations").get<std::size_t>(),
                       j.at("max_kkt_violation").get<double>()};
  } else if (model == "knn") {
    c.state = KnnModel{j.at("x").get<std::vector<FeatureRow>>(), j.at("y").get<std::vector<int>>(),
                       j.at("k").get<std::size_t>()};
  } else {
    throw std::runtime_error("ensemble bundle: unknown model '" + model + "'");
  }
  return c;
}

}  // namespace

nlohmann::json to_json(const MultiOutputModel& model) {
  nlohmann::json j{{"format", "tram-ensemble"},
                   {"version", kEnsembleFormatVersion},
                   {"feature_names", model.feature_names},
                   {"params", model.params.to_json()}};
  auto labels = nlohmann::json::array();
  for (std::size_t s = 0; s < kNumSLabels; ++s) {
    auto members = nlohmann::json::array();
    for (const auto& m : model.labels[s].members) members.push_back(classifier_json(m));
    labels.push_back({{"label", kLabelNames[3 + s]}, {"members", members}});
  }
  j["labels"] = labels;
  return j;
}

MultiOutputModel multi_output_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "tram-ensemble") throw std::runtime_error("not an ensemble bundle");
    const int version = j.at("version").get<int>();
    if (version != kEnsembleFormatVersion) {
      throw std::runtime_error("unsupported version " + std::to_string(version));
    }
    MultiOutputModel m;
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.params = EnsembleParams::from_json(j.at("params"), {});
    const auto& labels = j.at("labels");
    if (labels.size() != kNumSLabels) throw std::runtime_error("expected 4 labels");
    for (std::size_t s = 0; s < kNumSLabels; ++s) {
      for (const auto& member : labels[s].at("members")) m.labels[s].members.push_back(classifier_from(member));
      if (m.labels[s].members.empty()) throw std::runtime_error("label without members");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("ensemble bundle: ") + e.what());
  }
}

void save_ensemble(const MultiOutputModel& model, const std::filesystem::path& path) {
  const std::string text = to_json(model).dump();
  io::write_atomically(path, [&](std::ostream& out) { out << text << '\n'; });
}

MultiOutputModel load_ensemble(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return multi_output_from_json(j);
}

}  // namespace tram
