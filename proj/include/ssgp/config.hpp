#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssgp/dataset.hpp"
#include "ssgp/inference.hpp"
#include "ssgp/kernels.hpp"
#include "ssgp/likelihoods.hpp"
#include "ssgp/objectives.hpp"

namespace ssgp {

// ---------------------------------------------------------------------------
// Kernel expression grammar, e.g.
//   sum(matern52(var=1.0,len=10.0), prod(cosine(period=7.0), matern52(var=1.0,len=30.0)))
// `period` is converted to frequency omega = 2 pi / period at parse time.
// ---------------------------------------------------------------------------
namespace detail {

class KernelParser {
 public:
  explicit KernelParser(const std::string& text) : s_(text) {}

  Kernel parse() {
    Kernel k = expr();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return k;
  }

 private:
  Kernel expr() {
    const std::string name = ident();
    expect('(');
    if (name == "sum" || name == "prod") {
      std::vector<Kernel> kids;
      kids.push_back(expr());
      while (peek() == ',') {
        expect(',');
        kids.push_back(expr());
      }
      expect(')');
      return name == "sum" ? Kernel::sum(std::move(kids))
                           : Kernel::product(std::move(kids));
    }
    auto args = kwargs();
    expect(')');
    if (name == "matern12" || name == "matern32" || name == "matern52") {
      const double var = take(args, "var");
      const double len = take(args, "len");
      reject_leftover(args, name);
      if (name == "matern12") return Kernel::matern12(var, len);
      if (name == "matern32") return Kernel::matern32(var, len);
      return Kernel::matern52(var, len);
    }
    if (name == "cosine") {
      double var = args.count("var") ? take(args, "var") : 1.0;
      double omega;
      if (args.count("period")) {
        omega = 2.0 * std::numbers::pi / take(args, "period");
      } else if (args.count("omega")) {
        omega = take(args, "omega");
      } else {
        fail("cosine needs period= or omega=");
        omega = 0.0;
      }
      reject_leftover(args, name);
      return Kernel::cosine(var, omega);
    }
    fail("unknown kernel '" + name + "'");
    return Kernel{};
  }

  std::map<std::string, double> kwargs() {
    std::map<std::string, double> out;
    while (true) {
      skip_ws();
      const std::string key = ident();
      expect('=');
      out[key] = number();
      if (peek() != ',') break;
      expect(',');
    }
    return out;
  }

  double take(std::map<std::string, double>& args, const std::string& key) {
    auto it = args.find(key);
    if (it == args.end()) fail("missing argument '" + key + "'");
    const double v = it->second;
    args.erase(it);
    return v;
  }

  void reject_leftover(const std::map<std::string, double>& args,
                       const std::string& name) {
    if (!args.empty())
      fail("unknown argument '" + args.begin()->first + "' to " + name);
  }

  std::string ident() {
    skip_ws();
    size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    if (pos_ == start) fail("expected identifier");
    return s_.substr(start, pos_ - start);
  }

  double number() {
    skip_ws();
    size_t consumed = 0;
    double v = 0.0;
    try {
      v = std::stod(s_.substr(pos_), &consumed);
    } catch (...) {
      fail("expected number");
    }
    pos_ += consumed;
    return v;
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c)
      fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("kernel expression: " + msg + " at position " +
                                std::to_string(pos_));
  }

  std::string s_;
  size_t pos_ = 0;
};

}  // namespace detail

inline Kernel parse_kernel(const std::string& expr) {
  return detail::KernelParser(expr).parse();
}

// ---------------------------------------------------------------------------
// Run configuration: flat key = value lines with dotted sections. Parsing is
// strict; any unknown key is an error.
// ---------------------------------------------------------------------------
struct RunConfig {
  std::string kernel_expr;
  std::string likelihood = "gaussian";
  double noise_variance = 1.0;
  double binsize = 1.0;
  int quad_order = 20;

  std::string inference_mode = "cvi";
  double rho = 0.5;
  double rho_first = 1.0;
  int iters = 20;
  std::string init = "filter";

  std::string objective = "elbo";
  std::string optimizer = "adam";
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int outer_iters = 0;
  int inner_iters = 1;

  std::string engine = "sequential";

  std::string data_path;
  std::string events_path;
  int bins = 0;
  double range_lo = 0.0, range_hi = 0.0;
  bool has_range = false;

  std::string output_dir = ".";
  unsigned long seed = 0;
  Eigen::Index dense_cap = 2000;

  Kernel kernel() const { return parse_kernel(kernel_expr); }

  Likelihood make_likelihood() const {
    if (likelihood == "gaussian") return Likelihood::gaussian(noise_variance);
    if (likelihood == "poisson") return Likelihood::poisson(binsize);
    if (likelihood == "bernoulli") return Likelihood::bernoulli();
    throw std::invalid_argument("config: unknown likelihood '" + likelihood + "'");
  }

  InferenceConfig inference() const {
    InferenceConfig c;
    if (inference_mode == "cvi") c.mode = InferenceMode::CVI;
    else if (inference_mode == "ep") c.mode = InferenceMode::EP;
    else throw std::invalid_argument("config: unknown inference.mode '" + inference_mode + "'");
    if (init == "zero") c.init = InitMode::Zero;
    else if (init == "filter") c.init = InitMode::Filter;
    else throw std::invalid_argument("config: unknown inference.init '" + init + "'");
    c.iters = iters;
    c.rho = rho;
    c.rho_first = rho_first;
    c.quad_order = quad_order;
    return c;
  }

  FitConfig fit_config() const {
    FitConfig c;
    if (objective == "elbo") c.objective = ObjectiveKind::Elbo;
    else if (objective == "direct_ml") c.objective = ObjectiveKind::DirectML;
    else throw std::invalid_argument("config: unknown learning.objective '" + objective + "'");
    if (optimizer != "adam")
      throw std::invalid_argument("config: unknown learning.optimizer '" + optimizer + "'");
    c.engine = make_engine();
    c.inference = inference();
    c.outer_iters = outer_iters;
    c.inner_iters = inner_iters;
    c.lr = lr;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.dense_cap = dense_cap;
    return c;
  }

  Engine make_engine() const {
    if (engine == "sequential") return Engine::Sequential;
    if (engine == "dense") return Engine::Dense;
    throw std::invalid_argument("config: unknown engine '" + engine + "'");
  }
};

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(row) +
                                  ": expected key = value");
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t\r");
      const size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
      val = val.substr(1, val.size() - 2);
    if (!seen.insert(key).second)
      throw std::invalid_argument("config line " + std::to_string(row) +
                                  ": duplicate key '" + key + "'");

    auto as_double = [&](const std::string& v) {
      double d;
      if (!detail::parse_double(v, d))
        throw std::invalid_argument("config line " + std::to_string(row) +
                                    ": '" + key + "' expects a number");
      return d;
    };
    auto as_int = [&](const std::string& v) {
      return static_cast<int>(as_double(v));
    };

    if (key == "kernel") cfg.kernel_expr = val;
    else if (key == "likelihood") cfg.likelihood = val;
    else if (key == "noise_variance") cfg.noise_variance = as_double(val);
    else if (key == "binsize") cfg.binsize = as_double(val);
    else if (key == "quad_order") cfg.quad_order = as_int(val);
    else if (key == "inference.mode") cfg.inference_mode = val;
    else if (key == "inference.rho") cfg.rho = as_double(val);
    else if (key == "inference.rho_first") cfg.rho_first = as_double(val);
    else if (key == "inference.iters") cfg.iters = as_int(val);
    else if (key == "inference.init") cfg.init = val;
    else if (key == "learning.objective") cfg.objective = val;
    else if (key == "learning.optimizer") cfg.optimizer = val;
    else if (key == "learning.lr") cfg.lr = as_double(val);
    else if (key == "learning.beta1") cfg.beta1 = as_double(val);
    else if (key == "learning.beta2") cfg.beta2 = as_double(val);
    else if (key == "learning.outer_iters") cfg.outer_iters = as_int(val);
    else if (key == "learning.inner_iters") cfg.inner_iters = as_int(val);
    else if (key == "engine") cfg.engine = val;
    else if (key == "data.path") cfg.data_path = val;
    else if (key == "data.events") cfg.events_path = val;
    else if (key == "data.bins") cfg.bins = as_int(val);
    else if (key == "data.range") {
      const size_t comma = val.find(',');
      if (comma == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(row) +
                                    ": data.range expects 'lo,hi'");
      cfg.range_lo = as_double(val.substr(0, comma));
      cfg.range_hi = as_double(val.substr(comma + 1));
      cfg.has_range = true;
    }
    else if (key == "output.dir") cfg.output_dir = val;
    else if (key == "seed") cfg.seed = static_cast<unsigned long>(as_double(val));
    else if (key == "dense.cap") cfg.dense_cap = as_int(val);
    else
      throw std::invalid_argument("config line " + std::to_string(row) +
                                  ": unknown key '" + key + "'");
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace ssgp
