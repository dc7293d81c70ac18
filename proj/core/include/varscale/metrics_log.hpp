#pragma once

#include <fstream>
#include <string>

#include "varscale/trainer.hpp"

namespace varscale {

inline constexpr const char* kMetricsHeader =
    "step,loss,train_acc,val_acc,lambda,mu_mean,mu_min,mu_max,wallclock_ms";
inline constexpr const char* kMuHeader = "step,dim,value";

// Shortest round-trip decimal form.
std::string format_double(double v);

// Append-only CSV writers for per-step metrics and mu histograms. Opening an
// existing file appends without repeating the header.
class MetricsLog {
 public:
  MetricsLog(const std::string& metrics_path, const std::string& mu_path,
             bool log_wallclock);

  void write(const MetricsRow& row);
  void write(const MuSnapshot& snapshot);
  void flush();

 private:
  std::ofstream metrics_;
  std::ofstream mu_;
  bool log_wallclock_;
};

}  // namespace varscale
