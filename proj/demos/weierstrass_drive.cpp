// h' = -h + tanh(-h(t - tau) + s(t)) driven by a truncated Weierstrass
// signal, with and without delay. Prints CSV; --svg writes a chart.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "taurnn/dde.hpp"
#include "taurnn/svg.hpp"

using namespace taurnn;

int main(int argc, char** argv) {
  const std::vector<double> taus{0.0, 0.5, 2.0};
  const double t_end = 20.0, dt = 0.005;
  std::vector<dde::DenseSolution> sols;
  for (double tau : taus) {
    sols.push_back(dde::integrate(dde::weierstrass_tanh_problem(tau, t_end, dt), dde::Scheme::RK4));
  }
  std::vector<svg::Series> series{{"s(t)", {}, {}}};
  for (double tau : taus) series.push_back({"tau = " + dde::format_double(tau), {}, {}});
  std::printf("t,input");
  for (double tau : taus) std::printf(",h_tau%g", tau);
  std::printf("\n");
  for (std::size_t k = 0; k < sols[0].size(); k += 10) {
    const double t = sols[0].time(k);
    const double s = dde::weierstrass_input(t);
    std::printf("%.3f,%.10g", t, s);
    series[0].xs.push_back(t);
    series[0].ys.push_back(s);
    for (std::size_t j = 0; j < taus.size(); ++j) {
      std::printf(",%.10g", sols[j].value(k)[0]);
      series[j + 1].xs.push_back(t);
      series[j + 1].ys.push_back(sols[j].value(k)[0]);
    }
    std::printf("\n");
  }
  if (argc == 3 && std::string(argv[1]) == "--svg") {
    std::ofstream(argv[2]) << svg::line_chart(series, {"Weierstrass-driven response", "t", "h", false});
  }
}
