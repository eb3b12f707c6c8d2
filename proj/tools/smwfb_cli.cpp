// smwfb: verify, experiment, whiten and coeffs front end.

#include <CLI11.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <smwfb/coefficients.hpp>
#include <smwfb/experiments.hpp>
#include <smwfb/lattice.hpp>
#include <smwfb/verify.hpp>

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path);
  try {
    auto j = nlohmann::json::parse(is);
    if (!j.is_object()) throw UsageError("config must be a flat JSON object");
    for (const auto& [k, v] : j.items())
      if (v.is_object() || v.is_array()) throw UsageError("config must be flat; key '" + k + "' is nested");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

// Config value for `key` unless the flag was given on the command line.
template <class T>
void take(const nlohmann::json& cfg, const char* key, const CLI::Option* flag, T& dst) {
  if (flag->count() == 0 && cfg.contains(key)) dst = cfg.at(key).get<T>();
}

void check_known(const nlohmann::json& cfg, std::initializer_list<const char*> keys) {
  for (const auto& [k, v] : cfg.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw UsageError("unknown config key: " + k);
  }
}

// Reads samples from CSV text (optional "x" header, one value per line, first column used) or raw f64.
class SampleReader {
public:
  SampleReader(std::istream& is, bool binary) : is_(is), binary_(binary) {}

  bool next(double& v) {
    if (binary_) {
      unsigned char b[8];
      if (!is_.read(reinterpret_cast<char*>(b), 8)) {
        if (is_.gcount() != 0) throw std::runtime_error("binary input: trailing partial sample");
        return false;
      }
      std::uint64_t u = 0;
      for (int k = 7; k >= 0; --k) u = (u << 8) | b[k];
      v = std::bit_cast<double>(u);
      return true;
    }
    std::string line;
    while (std::getline(is_, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const std::string cell = line.substr(0, line.find(','));
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        first_ = false;
        return true;
      } catch (const std::invalid_argument&) {
        if (!first_) throw std::runtime_error("csv input: not a number: " + cell);
        first_ = false;  // header row
      }
    }
    return false;
  }

private:
  std::istream& is_;
  bool binary_;
  bool first_ = true;
};

void write_binary_value(std::ostream& os, double v) {
  auto u = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((u >> (8 * k)) & 0xff);
  os.write(b, 8);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Signal-matched multirate whitening filter bank"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config; command-line flags take precedence");

  // verify
  auto* verify = app.add_subcommand("verify", "compare lattice registers against brute-force projections");
  int vM = 2, vN = 4, vblocks = 32, vtrials = 20;
  std::uint64_t vseed = 1;
  std::string fault;
  int vzeros = 0;
  auto* fvM = verify->add_option("--M", vM, "channels");
  auto* fvN = verify->add_option("--N", vN, "order");
  auto* fvB = verify->add_option("--blocks", vblocks, "blocks per trial");
  auto* fvT = verify->add_option("--trials", vtrials, "random trials");
  auto* fvS = verify->add_option("--seed", vseed, "base seed");
  auto* fvZ = verify->add_option("--leading-zeros", vzeros, "zero the first samples of each trial");
  verify->add_option("--inject-fault", fault)->group("");

  // experiment
  auto* exp = app.add_subcommand("experiment", "run one of the five experiments");
  int eid = 0;
  std::optional<int> eM, eN;
  std::optional<double> erho;
  std::string etheta;
  std::optional<long> esamples;
  std::optional<int> eseeds, esignal, esegment;
  std::optional<std::uint64_t> eseed;
  std::optional<double> elambda, ediscard;
  std::optional<std::string> eout, eexc;
  auto* feid = exp->add_option("id", eid, "experiment 1-5")->check(CLI::Range(1, 5));
  auto* feM = exp->add_option("--M", eM, "channels");
  auto* feN = exp->add_option("--N", eN, "order");
  auto* ferho = exp->add_option("--rho", erho, "pole radius");
  auto* fetheta = exp->add_option("--theta", etheta, "pole angle, e.g. 1.12 or pi/2.8");
  auto* fesamples = exp->add_option("--samples", esamples, "samples per run");
  auto* feseeds = exp->add_option("--seeds", eseeds, "number of seeds");
  auto* feseed = exp->add_option("--seed", eseed, "first seed");
  auto* felambda = exp->add_option("--lambda", elambda, "forgetting factor");
  auto* fediscard = exp->add_option("--discard", ediscard, "transient fraction dropped from variances");
  auto* fesignal = exp->add_option("--signal", esignal, "experiment 5 signal 1-9 (0: all)");
  auto* fesegment = exp->add_option("--segment", esegment, "PSD segment length");
  auto* feexc = exp->add_option("--excitation", eexc, "gaussian|uniform|exponential|gamma");
  auto* feout = exp->add_option("--out", eout, "output directory");

  // whiten
  auto* wh = app.add_subcommand("whiten", "stream samples from stdin, channel outputs to stdout");
  int wM = 2, wN = 4;
  double wlambda = 1.0;
  std::string wformat = "csv", winput, wout;
  auto* fwM = wh->add_option("--M", wM, "channels");
  auto* fwN = wh->add_option("--N", wN, "order");
  auto* fwL = wh->add_option("--lambda", wlambda, "forgetting factor");
  auto* fwF = wh->add_option("--format", wformat, "csv|bin")->check(CLI::IsMember({"csv", "bin"}));
  auto* fwI = wh->add_option("--input", winput, "input file (default stdin)");
  auto* fwO = wh->add_option("--out", wout, "output file (default stdout)");

  // coeffs
  auto* co = app.add_subcommand("coeffs", "estimate the direct-form bank from a signal and print it as JSON");
  int cM = 2, cN = 4;
  double clambda = 1.0;
  std::string cformat = "csv", cinput, cout_path;
  auto* fcM = co->add_option("--M", cM, "channels");
  auto* fcN = co->add_option("--N", cN, "order (multiple of M)");
  auto* fcL = co->add_option("--lambda", clambda, "forgetting factor");
  auto* fcF = co->add_option("--format", cformat, "csv|bin")->check(CLI::IsMember({"csv", "bin"}));
  auto* fcI = co->add_option("--input", cinput, "input file (default stdin)");
  auto* fcO = co->add_option("--out", cout_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const auto cfg = load_config(config_path);

    if (*verify) {
      check_known(cfg, {"M", "N", "blocks", "trials", "seed", "leading_zeros"});
      take(cfg, "M", fvM, vM);
      take(cfg, "N", fvN, vN);
      take(cfg, "blocks", fvB, vblocks);
      take(cfg, "trials", fvT, vtrials);
      take(cfg, "seed", fvS, vseed);
      take(cfg, "leading_zeros", fvZ, vzeros);
      if (vM < 2 || vM > 6) throw UsageError("verify: M must be in 2..6");
      if (vN < 1 || vN > 12) throw UsageError("verify: N must be in 1..12");
      if (vblocks < 1 || vblocks > 128) throw UsageError("verify: blocks must be in 1..128");
      if (vtrials < 1) throw UsageError("verify: trials must be positive");
      smwfb::VerifyOptions o;
      o.M = vM;
      o.N = vN;
      o.blocks = vblocks;
      o.trials = vtrials;
      o.seed = vseed;
      o.inject_fault = fault;
      o.leading_zeros = vzeros;
      const auto rep = smwfb::verify_lattice(o);
      std::cout << rep.to_json(o).dump(2) << '\n';
      if (!rep.passed()) {
        for (const auto& [kind, d] : rep.kinds)
          if (d.failed) std::cerr << "verify: " << kind << " exceeds tolerance (max relative error " << d.max_rel << ")\n";
        return kFail;
      }
      return kOk;
    }

    if (*exp) {
      int id = eid;
      if (feid->count() == 0) {
        if (!cfg.contains("experiment")) throw UsageError("experiment: id required");
        id = cfg.at("experiment").get<int>();
      }
      auto ec = smwfb::ExperimentConfig::defaults(id);
      // config first, then flags
      try {
        ec.merge(cfg);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      ec.experiment = id;
      if (feM->count()) ec.M = eM;
      if (feN->count()) ec.N = eN;
      if (ferho->count()) ec.rho = erho;
      if (fetheta->count()) ec.theta = smwfb::parse_angle(etheta);
      if (fesamples->count()) ec.samples = *esamples;
      if (feseeds->count()) ec.seeds = *eseeds;
      if (feseed->count()) ec.seed = *eseed;
      if (felambda->count()) ec.lambda = *elambda;
      if (fediscard->count()) ec.discard = *ediscard;
      if (fesignal->count()) ec.signal = *esignal;
      if (fesegment->count()) ec.segment = *esegment;
      if (feexc->count()) ec.excitation = *eexc;
      if (feout->count()) ec.out = *eout;
      try {
        ec.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      std::cout << smwfb::run_experiment(ec).dump(2) << '\n';
      return kOk;
    }

    // whiten / coeffs share input handling
    const bool is_whiten = static_cast<bool>(*wh);
    int M = is_whiten ? wM : cM, N = is_whiten ? wN : cN;
    double lambda = is_whiten ? wlambda : clambda;
    std::string format = is_whiten ? wformat : cformat, input = is_whiten ? winput : cinput,
                out = is_whiten ? wout : cout_path;
    check_known(cfg, {"M", "N", "lambda", "format", "input", "out"});
    take(cfg, "M", is_whiten ? fwM : fcM, M);
    take(cfg, "N", is_whiten ? fwN : fcN, N);
    take(cfg, "lambda", is_whiten ? fwL : fcL, lambda);
    take(cfg, "format", is_whiten ? fwF : fcF, format);
    take(cfg, "input", is_whiten ? fwI : fcI, input);
    take(cfg, "out", is_whiten ? fwO : fcO, out);
    if (format != "csv" && format != "bin") throw UsageError("format must be csv or bin");
    const smwfb::WhitenerConfig wc{M, N, lambda};
    try {
      wc.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (!is_whiten && N % M != 0) throw UsageError("coeffs: N must be a multiple of M");
    const bool binary = format == "bin";

    std::ifstream fin;
    if (!input.empty()) {
      fin.open(input, std::ios::binary);
      if (!fin) throw UsageError("cannot open " + input);
    }
    std::istream& is = input.empty() ? std::cin : fin;
    std::ofstream fout;
    if (!out.empty()) {
      fout.open(out, std::ios::binary);
      if (!fout) throw UsageError("cannot write " + out);
    }
    std::ostream& os = out.empty() ? std::cout : fout;

    SampleReader reader(is, binary);
    std::vector<double> blk(static_cast<std::size_t>(M), 0.0);
    double v = 0.0;

    if (is_whiten) {
      smwfb::WhitenerState w(wc);
      if (!binary) {
        for (int i = 0; i < M; ++i) os << (i ? "," : "") << 'e' << i;
        os << '\n';
      }
      auto emit = [&](const smwfb::ChannelOutputs& o) {
        for (int i = 0; i < M; ++i) {
          const double e = o.e[static_cast<std::size_t>(i)];
          if (binary) write_binary_value(os, e);
          else os << (i ? "," : "") << smwfb::detail::format_double(e);
        }
        if (!binary) os << '\n';
      };
      if (reader.next(v)) {
        blk.back() = v;
        emit(w.process_block(blk));
        int fill = 0;
        while (reader.next(v)) {
          blk[static_cast<std::size_t>(fill++)] = v;
          if (fill == M) {
            emit(w.process_block(blk));
            fill = 0;
          }
        }
      }
      os.flush();
      return kOk;
    }

    smwfb::FilterBankEstimator est(wc, 0);
    if (reader.next(v)) {
      blk.back() = v;
      est.push_block(blk);
      int fill = 0;
      while (reader.next(v)) {
        blk[static_cast<std::size_t>(fill++)] = v;
        if (fill == M) {
          est.push_block(blk);
          fill = 0;
        }
      }
    }
    est.refresh_prefilter();
    auto j = smwfb::to_json(smwfb::assemble_direct_form(est.coefficients()));
    j["lambda"] = lambda;
    j["blocks"] = est.state().blocks();
    os << j.dump(2) << '\n';
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "usage error: config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }
}
