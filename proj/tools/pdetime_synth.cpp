// Writes the phase-shifted sinusoid dataset as an ETT-style CSV.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "pdetime/data.hpp"
#include "pdetime/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pdetime-synth: generate a synthetic hourly dataset"};
  pdetime::SinusoidSpec spec;
  std::string out;
  app.add_option("output", out, "CSV path")->required();
  app.add_option("--length", spec.length, "number of rows")->capture_default_str();
  app.add_option("--channels", spec.channels, "number of channels")->capture_default_str();
  app.add_option("--noise", spec.noise_std, "noise standard deviation")->capture_default_str();
  app.add_option("--seed", spec.seed, "noise seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::ofstream f(out);
  if (!f) {
    std::cerr << "cannot write '" << out << "'\n";
    return 1;
  }
  pdetime::write_csv(pdetime::make_sinusoid_dataset(spec), f);
  return 0;
}
