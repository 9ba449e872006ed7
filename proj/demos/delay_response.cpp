// Response of h' = -h(t - tau) + cos(t) for several delays, as CSV (and an
// SVG chart with --svg). tau = 0 is the ordinary differential equation.
//
//   delay_response [--svg out.svg] > response.csv

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "taurnn/dde.hpp"
#include "taurnn/svg.hpp"

using namespace taurnn;

int main(int argc, char** argv) {
  const std::vector<double> taus{0.0, 0.5, 1.0};
  const double t_end = 40.0, dt = 0.01;
  std::vector<dde::DenseSolution> sols;
  for (double tau : taus) sols.push_back(dde::integrate(dde::lagged_cosine_problem(tau, t_end, dt), dde::Scheme::RK4));

  std::printf("t,input");
  for (double tau : taus) std::printf(",h_tau%g", tau);
  std::printf("\n");
  std::vector<svg::Series> series{{"cos(t)", {}, {}}};
  for (double tau : taus) series.push_back({"tau = " + dde::format_double(tau), {}, {}});
  for (std::size_t k = 0; k < sols[0].size(); k += 10) {
    const double t = sols[0].time(k);
    std::printf("%.2f,%.10g", t, std::cos(t));
    series[0].xs.push_back(t);
    series[0].ys.push_back(std::cos(t));
    for (std::size_t j = 0; j < taus.size(); ++j) {
      std::printf(",%.10g", sols[j].value(k)[0]);
      series[j + 1].xs.push_back(t);
      series[j + 1].ys.push_back(sols[j].value(k)[0]);
    }
    std::printf("\n");
  }
  if (argc == 3 && std::string(argv[1]) == "--svg") {
    std::ofstream(argv[2]) << svg::line_chart(series, {"delayed response to cos(t)", "t", "h", false});
  }
}
