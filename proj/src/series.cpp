#include "abflux/series.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "abflux/io.hpp"

namespace abflux {

void TimeSeries::push(double t, cplx v) {
  if (!times.empty() && !(t > times.back()))
    throw std::invalid_argument("TimeSeries: times must be strictly increasing");
  times.push_back(t);
  values.push_back(v);
}

TimeSeries TimeSeries::window(double t0, double t1) const {
  TimeSeries out{probe, params, {}, {}};
  for (std::size_t k = 0; k < times.size(); ++k)
    if (times[k] >= t0 && times[k] <= t1) out.push(times[k], values[k]);
  return out;
}

std::string format_series(const TimeSeries& series) {
  std::string out = "# probe=" + series.probe + " params=" + series.params + "\n";
  char line[96];
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", series.times[k],
                  series.values[k].real(), series.values[k].imag());
    out += line;
  }
  return out;
}

TimeSeries parse_series(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  const auto p = header.find("# probe=");
  const auto q = header.find(" params=");
  if (p != 0 || q == std::string::npos) throw std::runtime_error("parse_series: bad header");
  TimeSeries s{header.substr(8, q - 8), header.substr(q + 8), {}, {}};
  double t = 0, re = 0, im = 0;
  while (in >> t >> re >> im) s.push(t, {re, im});
  return s;
}

void write_series(const std::filesystem::path& path, const TimeSeries& series) {
  write_file_atomic(path, format_series(series));
}

}  // namespace abflux
