#include "nlw/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "nlw/engine.hpp"

namespace nlw {

std::string format_fixed(double value, int decimals) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s(buf);
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string report_csv(const RunReport& report) {
  std::string out = "epoch,train_loss,test_acc,sel_precision,sel_recall,clean_frac\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.epoch);
    for (double v : {r.train_loss, r.test_acc, r.sel_precision, r.sel_recall, r.clean_frac}) {
      out += ',';
      out += format_fixed(v);
    }
    out += '\n';
  }
  return out;
}

void write_report_csv(const RunReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, report_csv(report));
}

}  // namespace nlw
