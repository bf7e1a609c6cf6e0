#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ssgp/cli.hpp"

namespace {

std::vector<Eigen::Index> parse_sizes(const std::string& csv) {
  std::vector<Eigen::Index> sizes;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    sizes.push_back(static_cast<Eigen::Index>(std::stod(tok)));
  return sizes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear-time Gaussian-process inference for 1D time series"};
  app.require_subcommand(1);

  std::string config_path, test_path, out_path, input_path, sizes_csv, range_csv;
  int bins = 0;

  auto* fit = app.add_subcommand("fit", "Run inference / hyperparameter learning");
  fit->add_option("config", config_path, "config file")->required();

  auto* predict = app.add_subcommand("predict", "Predictive marginals and NLPD");
  predict->add_option("config", config_path, "config file")->required();
  predict->add_option("--test", test_path, "test points CSV (t[,y])")->required();
  predict->add_option("--output", out_path, "output CSV")->default_val("predictions.csv");

  auto* bench = app.add_subcommand("bench", "Per-iteration timing across sizes");
  bench->add_option("config", config_path, "config file")->required();
  bench->add_option("--sizes", sizes_csv, "comma-separated n values")->required();
  bench->add_option("--output", out_path, "output CSV")->default_val("bench.csv");

  auto* bin = app.add_subcommand("bin", "Bin event times into counts");
  bin->add_option("--input", input_path, "events CSV")->required();
  bin->add_option("--bins", bins, "number of bins")->required();
  bin->add_option("--range", range_csv, "a,b range")->required();
  bin->add_option("--output", out_path, "output CSV")->default_val("binned.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return ssgp::cmd_fit(config_path);
    if (predict->parsed()) return ssgp::cmd_predict(config_path, test_path, out_path);
    if (bench->parsed())
      return ssgp::cmd_bench(config_path, parse_sizes(sizes_csv), out_path);
    if (bin->parsed()) {
      const size_t comma = range_csv.find(',');
      if (comma == std::string::npos)
        throw std::runtime_error("--range expects 'a,b'");
      return ssgp::cmd_bin(input_path, bins, std::stod(range_csv.substr(0, comma)),
                           std::stod(range_csv.substr(comma + 1)), out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
