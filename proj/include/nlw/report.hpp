#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace nlw {

struct RunReport;

/// Fixed-point with `decimals` digits; NaN prints as "nan".
std::string format_fixed(double value, int decimals = 6);

/// Writes to `<path>.tmp` then renames over `path`. Parent directories are created.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// epoch,train_loss,test_acc,sel_precision,sel_recall,clean_frac
std::string report_csv(const RunReport& report);
void write_report_csv(const RunReport& report, const std::filesystem::path& path);

}  // namespace nlw
