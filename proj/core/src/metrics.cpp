#include "tgseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

namespace tgseg {

namespace {

void check_shapes(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::shape_mismatch, "mask shapes differ: " + std::to_string(a.height()) + "x" +
                                               std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                                               "x" + std::to_string(b.width()));
  }
}

// One-dimensional squared-distance transform of a sampled function (lower envelope of parabolas).
void distance_transform_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                           std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        if (--k < 0) break;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -inf : s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  check_shapes(pred, gt);
  const auto a = pred.bits();
  const auto b = gt.bits();
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    uni += a[i] | b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask boundary_band(const BinaryMask& mask, double d) {
  if (!(d >= 1.0)) throw Error(ErrorCode::invalid_input, "boundary distance must be at least 1");
  const int h = mask.height(), w = mask.width();
  BinaryMask band(h, w);
  if (mask.count() == 0) return band;

  // Squared distance to the nearest background pixel on a grid padded by one
  // background pixel on every side.
  const int ph = h + 2, pw = w + 2;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(ph) * pw, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask(y, x)) dist[static_cast<std::size_t>(y + 1) * pw + x + 1] = inf;

  const int n = std::max(ph, pw);
  std::vector<double> f, out;
  std::vector<double> z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < pw; ++x) {
    f.resize(ph);
    out.resize(ph);
    for (int y = 0; y < ph; ++y) f[y] = dist[static_cast<std::size_t>(y) * pw + x];
    distance_transform_1d(f, out, v, z);
    for (int y = 0; y < ph; ++y) dist[static_cast<std::size_t>(y) * pw + x] = out[y];
  }
  for (int y = 0; y < ph; ++y) {
    f.assign(dist.begin() + static_cast<std::ptrdiff_t>(y) * pw, dist.begin() + static_cast<std::ptrdiff_t>(y + 1) * pw);
    out.resize(pw);
    distance_transform_1d(f, out, v, z);
    std::copy(out.begin(), out.end(), dist.begin() + static_cast<std::ptrdiff_t>(y) * pw);
  }
  const double d2 = d * d;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask(y, x) && dist[static_cast<std::size_t>(y + 1) * pw + x + 1] <= d2) band.set(y, x, true);
    }
  }
  return band;
}

double boundary_iou(const BinaryMask& pred, const BinaryMask& gt, double d) {
  check_shapes(pred, gt);
  return iou(boundary_band(pred, d), boundary_band(gt, d));
}

double default_boundary_distance(int height, int width) {
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  return std::max(1.0, std::round(0.02 * diag));
}

Aggregate aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::empty_dataset, "no evaluation records to aggregate");
  Aggregate a;
  for (const EvalRecord& r : records) {
    a.miou += r.iou;
    a.mbiou += r.biou;
    a.mean_time_ms += r.time_ms;
  }
  a.count = records.size();
  const double n = static_cast<double>(records.size());
  a.miou /= n;
  a.mbiou /= n;
  a.mean_time_ms /= n;
  return a;
}

std::string to_jsonl(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["image_id"] = r.image_id;
  j["prompt"] = r.prompt;
  j["iou"] = r.iou;
  j["biou"] = r.biou;
  j["time_ms"] = r.time_ms;
  return j.dump();
}

EvalRecord eval_record_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  EvalRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  r.prompt = j.value("prompt", "");
  r.iou = j.at("iou").get<double>();
  r.biou = j.at("biou").get<double>();
  r.time_ms = j.value("time_ms", 0.0);
  return r;
}

std::string format_report(const std::string& title, const std::vector<ReportRow>& rows) {
  std::size_t width = std::string("Method").size();
  for (const ReportRow& r : rows) width = std::max(width, r.method.size());
  std::ostringstream out;
  if (!title.empty()) out << title << '\n';
  out << std::left << std::setw(static_cast<int>(width)) << "Method" << "  " << std::right << std::setw(6) << "mIoU"
      << "  " << std::setw(6) << "mBIoU" << "  " << std::setw(9) << "Time (ms)" << '\n';
  out << std::string(width + 2 + 6 + 2 + 6 + 2 + 9, '-') << '\n';
  out << std::fixed;
  for (const ReportRow& r : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << r.method << "  " << std::right << std::setprecision(3)
        << std::setw(6) << r.result.miou << "  " << std::setw(6) << r.result.mbiou << "  " << std::setprecision(1)
        << std::setw(9) << r.result.mean_time_ms << '\n';
  }
  return out.str();
}

}  // namespace tgseg
