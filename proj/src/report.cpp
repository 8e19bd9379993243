#include "imse/report.hpp"

#include <algorithm>
#include <numeric>

namespace imse {

namespace {
std::size_t round_window(std::size_t len, std::size_t n, std::size_t period) {
  if (period == 0) period = 1;
  len = (len / period) * period;
  if (len < period) len = period;
  return std::min(len, n);
}

double tail_mean(const std::vector<double>& s, std::size_t len) {
  if (len == 0) return 0.0;
  return std::accumulate(s.end() - static_cast<std::ptrdiff_t>(len), s.end(), 0.0) /
         static_cast<double>(len);
}
}  // namespace

CesaroSummary cesaro(const std::vector<double>& seq, int period) {
  CesaroSummary out;
  const std::size_t n = seq.size();
  if (n == 0) return out;
  const std::size_t p = period > 0 ? static_cast<std::size_t>(period) : 1;
  out.trailing = tail_mean(seq, round_window(n / 2, n, p));
  out.full = tail_mean(seq, n);
  out.limsup = std::max({tail_mean(seq, round_window(n / 4, n, p)), out.trailing,
                         tail_mean(seq, round_window(n, n, p))});
  return out;
}

void RateReport::fill_bounds(int period) {
  CesaroSummary lo = cesaro(per_step_cmmse, period);
  CesaroSummary hi = cesaro(per_step_pmmse, period);
  rate_lower = 0.5 * lo.trailing;
  rate_upper = 0.5 * hi.trailing;
  rate_lower_limsup = 0.5 * lo.limsup;
  rate_upper_limsup = 0.5 * hi.limsup;
  rate_lower_full = 0.5 * lo.full;
  rate_upper_full = 0.5 * hi.full;
}

}  // namespace imse
