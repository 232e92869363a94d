#include "pitta/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace pitta {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("diagnostics: cannot open " + path);
  return os;
}

}  // namespace

const char* to_string(ScheduleDecision d) {
  switch (d) {
    case ScheduleDecision::kSafe: return "safe";
    case ScheduleDecision::kDelayed: return "delayed";
    case ScheduleDecision::kDropped: return "dropped";
    case ScheduleDecision::kNoUpdate: return "no-update";
  }
  return "?";
}

void RunTrace::validate() const {
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].step != static_cast<int64_t>(i))
      throw Error("RunTrace: steps must be contiguous from 0");
    const bool expect = !(rows[i].g_hat_norm >= 0.9 && rows[i].g_hat_norm <= 1.1);
    if (rows[i].violation != expect)
      throw Error("RunTrace: violation flag inconsistent with g_hat_norm");
  }
}

double violation_rate(const RunTrace& trace) {
  if (trace.rows.empty()) throw Error("violation_rate: empty trace");
  size_t v = 0;
  for (const auto& r : trace.rows) v += r.violation ? 1 : 0;
  return static_cast<double>(v) / static_cast<double>(trace.rows.size());
}

double silhouette(const std::vector<std::vector<double>>& embeddings,
                  const std::vector<int>& labels) {
  const size_t n = embeddings.size();
  if (labels.size() != n) throw Error("silhouette: size mismatch");
  std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw Error("silhouette: need at least two classes");

  std::map<int, size_t> count;
  for (int l : labels) ++count[l];

  auto dist = [&](size_t i, size_t j) {
    double s = 0.0;
    for (size_t d = 0; d < embeddings[i].size(); ++d) {
      const double dd = embeddings[i][d] - embeddings[j][d];
      s += dd * dd;
    }
    return std::sqrt(s);
  };

  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (count[labels[i]] == 1) continue;  // singleton cluster scores 0
    std::map<int, double> sum;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum[labels[j]] += dist(i, j);
    }
    const double a = sum[labels[i]] / static_cast<double>(count[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int cls : classes) {
      if (cls == labels[i]) continue;
      b = std::min(b, sum[cls] / static_cast<double>(count[cls]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

double rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("rank_correlation: bad input");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  const double denom = std::sqrt(da * db);
  return denom > 0.0 ? num / denom : 0.0;
}

HeldoutEvaluator::HeldoutEvaluator(std::vector<Window> heldout, int64_t every_n, StatsMode mode)
    : heldout_(std::move(heldout)), every_n_(every_n), mode_(mode) {
  if (heldout_.empty()) throw Error("HeldoutEvaluator: empty hold-out set");
  if (every_n_ < 1) throw Error("HeldoutEvaluator: every_n must be >= 1");
}

void HeldoutEvaluator::check_disjoint(const StreamSchedule& stream) const {
  std::set<uint64_t> tags;
  for (const auto& w : heldout_)
    if (w.origin_id != 0) tags.insert(w.origin_id);
  if (tags.empty()) return;
  for (const auto& b : stream.batches)
    for (const auto& w : b.windows)
      if (w.origin_id != 0 && tags.count(w.origin_id))
        throw Error("HeldoutEvaluator: hold-out window appears in the adaptation stream");
}

void HeldoutEvaluator::eval(Backbone& model, int64_t step) {
  curve_.push_back({step, accuracy(model, heldout_, mode_)});
}

std::vector<std::vector<double>> embed(Backbone& model, const std::vector<Window>& windows,
                                       StatsMode mode, int eval_batch) {
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (size_t start = 0; start < windows.size(); start += eval_batch) {
    Batch b;
    const size_t end = std::min(windows.size(), start + static_cast<size_t>(eval_batch));
    b.windows.assign(windows.begin() + start, windows.begin() + end);
    ForwardPass fp = forward(model, b, mode, GradScope::kNone);
    const Tensor& z = fp.tape->val(fp.z);
    const int D = z.shape[1];
    for (int i = 0; i < b.size(); ++i)
      out.emplace_back(z.data.begin() + static_cast<size_t>(i) * D,
                       z.data.begin() + static_cast<size_t>(i + 1) * D);
  }
  return out;
}

void write_trace_csv(const RunTrace& trace, const std::string& path) {
  auto os = open_out(path);
  os << "step,phase,online_correct,online_acc,entropy,g_hat_norm,violation,"
        "spectral_entropy,w_t_mean,lambda_grav_t,lambda_spec_t,schedule_decision,"
        "l_stat,l_grav,l_temp,l_spec,total\n";
  for (const auto& r : trace.rows) {
    os << r.step << ',' << r.phase << ',' << (r.online_correct ? 1 : 0) << ','
       << fmt(r.online_acc) << ',' << fmt(r.entropy) << ',' << fmt(r.g_hat_norm) << ','
       << (r.violation ? 1 : 0) << ',' << fmt(r.spectral_entropy) << ',' << fmt(r.w_t_mean)
       << ',' << fmt(r.lambda_grav_t) << ',' << fmt(r.lambda_spec_t) << ','
       << to_string(r.decision) << ',' << fmt(r.l_stat) << ',' << fmt(r.l_grav) << ','
       << fmt(r.l_temp) << ',' << fmt(r.l_spec) << ',' << fmt(r.total) << '\n';
  }
}

void write_ribbon_csv(const RunTrace& trace, const std::string& path) {
  auto os = open_out(path);
  os << "step,g_hat_norm,band_lo,band_hi\n";
  for (const auto& r : trace.rows)
    os << r.step << ',' << fmt(r.g_hat_norm) << ",0.9,1.1\n";
}

void write_heldout_csv(const std::vector<RetentionPoint>& curve, const std::string& path) {
  auto os = open_out(path);
  os << "step,heldout_accuracy\n";
  for (const auto& p : curve) os << p.step << ',' << fmt(p.accuracy) << '\n';
}

void write_entropy_violation_csv(const RunTrace& trace, const std::string& path) {
  auto os = open_out(path);
  os << "step,entropy,violation\n";
  for (const auto& r : trace.rows)
    os << r.step << ',' << fmt(r.entropy) << ',' << (r.violation ? 1 : 0) << '\n';
}

}  // namespace pitta
