#include "varscale/metrics_log.hpp"

#include <charconv>
#include <filesystem>

#include "varscale/error.hpp"

namespace varscale {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_append(const std::string& path, const char* header) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot open log file '" + path + "'");
  if (fresh) out << header << '\n';
  return out;
}

}  // namespace

MetricsLog::MetricsLog(const std::string& metrics_path, const std::string& mu_path,
                       bool log_wallclock)
    : metrics_(open_append(metrics_path, kMetricsHeader)),
      mu_(open_append(mu_path, kMuHeader)),
      log_wallclock_(log_wallclock) {}

void MetricsLog::write(const MetricsRow& r) {
  metrics_ << r.step << ',' << format_double(r.loss) << ',' << format_double(r.train_acc)
           << ',' << (r.val_acc ? format_double(*r.val_acc) : std::string()) << ','
           << format_double(r.lambda) << ',' << format_double(r.mu_mean) << ','
           << format_double(r.mu_min) << ',' << format_double(r.mu_max) << ','
           << (log_wallclock_ ? format_double(r.wallclock_ms) : std::string()) << '\n';
}

void MetricsLog::write(const MuSnapshot& s) {
  for (Eigen::Index m = 0; m < s.mu.size(); ++m)
    mu_ << s.step << ',' << m << ',' << format_double(s.mu(m)) << '\n';
}

void MetricsLog::flush() {
  metrics_.flush();
  mu_.flush();
}

}  // namespace varscale
