#include "ctscore/summary.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <stdexcept>

#include "ctscore/csv.hpp"

namespace ctscore {

SlopeFit fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_slope: x and y differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("fit_slope: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_slope: x values are all equal");
  SlopeFit fit;
  fit.points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  fit.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  return fit;
}

SlopeFit cost_mse_slope(std::span<const double> mse, std::span<const double> cost) {
  std::vector<double> lx, ly;
  for (double v : mse) lx.push_back(std::log(v));
  for (double v : cost) ly.push_back(std::log(v));
  return fit_slope(lx, ly);
}

MeanSe mean_se(const std::vector<Eigen::VectorXd>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("mean_se: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  MeanSe out;
  out.mean = Eigen::VectorXd::Zero(samples.front().size());
  for (const auto& s : samples) out.mean += s;
  out.mean /= n;
  out.var = Eigen::VectorXd::Zero(out.mean.size());
  for (const auto& s : samples) out.var += (s - out.mean).cwiseAbs2();
  out.var /= n - 1.0;
  out.se = (out.var / n).cwiseSqrt();
  return out;
}

std::vector<MethodFit> summarize(const std::vector<std::filesystem::path>& files,
                                 std::ostream* table) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> points;
  for (const auto& f : files) {
    const CsvTable t = read_csv(f);
    const std::size_t method = t.column("method");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto& p = points[t.rows[r].at(method)];
      p.first.push_back(t.number(r, "mse"));
      p.second.push_back(t.number(r, "cost"));
    }
  }
  std::vector<MethodFit> fits;
  for (const auto& [method, p] : points) {
    if (p.first.size() < 3) {
      throw std::invalid_argument("summarize: method " + method + " has fewer than 3 points");
    }
    fits.push_back({method, cost_mse_slope(p.first, p.second)});
  }
  if (table) {
    *table << std::left << std::setw(12) << "method" << std::setw(8) << "points" << std::setw(14)
           << "slope" << "s.e.\n";
    for (const auto& m : fits) {
      *table << std::left << std::setw(12) << m.method << std::setw(8) << m.fit.points
             << std::setw(14) << m.fit.slope << m.fit.slope_se << "\n";
    }
  }
  return fits;
}

}  // namespace ctscore
