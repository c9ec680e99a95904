#pragma once

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

namespace abflux {

using cplx = std::complex<double>;

/// Timestamped complex observable values. Times strictly increase.
struct TimeSeries {
  std::string probe;   // probe id, e.g. "chi"
  std::string params;  // free-form "key=value ..." metadata
  std::vector<double> times;
  std::vector<cplx> values;

  void push(double t, cplx v);
  std::size_t size() const { return times.size(); }
  /// Sub-series with t0 <= t <= t1.
  TimeSeries window(double t0, double t1) const;
};

/// "# probe=<id> params=<...>" header, then "t re im" rows.
std::string format_series(const TimeSeries& series);
TimeSeries parse_series(const std::string& text);
void write_series(const std::filesystem::path& path, const TimeSeries& series);

}  // namespace abflux
