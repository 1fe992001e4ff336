#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tgseg/mask.hpp"

namespace tgseg {

/// |P and G| / |P or G|; 1.0 when both masks are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);

/// Mask pixels within Euclidean distance d of the background, everything
/// outside the image counting as background. With d = 1 this is exactly the
/// set of mask pixels with a 4-neighbour outside the mask or the image.
BinaryMask boundary_band(const BinaryMask& mask, double d);

/// iou(boundary_band(pred, d), boundary_band(gt, d)).
double boundary_iou(const BinaryMask& pred, const BinaryMask& gt, double d);

/// max(1, round(0.02 * image diagonal)).
double default_boundary_distance(int height, int width);

struct EvalRecord {
  std::string image_id;
  double iou = 0.0;
  double biou = 0.0;
  std::string prompt;
  double time_ms = 0.0;
};

struct Aggregate {
  double miou = 0.0;
  double mbiou = 0.0;
  double mean_time_ms = 0.0;
  std::size_t count = 0;
};

/// Arithmetic means; throws empty_dataset on an empty list.
Aggregate aggregate(const std::vector<EvalRecord>& records);

std::string to_jsonl(const EvalRecord& record);
EvalRecord eval_record_from_json(const std::string& line);

struct ReportRow {
  std::string method;
  Aggregate result;
};

/// Plain-text results table with columns Method, mIoU, mBIoU, Time (ms).
std::string format_report(const std::string& title, const std::vector<ReportRow>& rows);

}  // namespace tgseg
