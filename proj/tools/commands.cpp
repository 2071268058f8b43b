#include "commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "liftsim/behavior.hpp"
#include "liftsim/duffing_data.hpp"
#include "liftsim/errors.hpp"
#include "liftsim/synthesis.hpp"
#include "liftsim/verification.hpp"

namespace liftsim::cli {
namespace {

namespace fs = std::filesystem;
using Eigen::VectorXd;

struct Source {
  std::string path;
  std::string text;
  json doc;
};

Source read_source(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Source s{path, ss.str(), {}};
  s.doc = parse_json_text(s.text, path);
  return s;
}

/// Runs f on the document; schema errors gain file and line.
template <class F>
auto with_location(const Source& s, F f) -> decltype(f(s.doc)) {
  try {
    return f(s.doc);
  } catch (const SchemaError& e) {
    const int line = locate_json_pointer(s.text, e.path());
    throw InputError(s.path + ":" + std::to_string(line) + ": " + e.what());
  }
}

Model load_model(const std::string& path) {
  const Source s = read_source(path);
  return with_location(s, [](const json& d) { return parse_model(d); });
}

UnliftedSystem load_unlifted(const std::string& path) {
  Model m = load_model(path);
  if (auto* u = std::get_if<UnliftedSystem>(&m)) return *u;
  throw InputError(path + ": expected an unlifted model");
}

AffineLiftedSystem load_lifted(const std::string& path) {
  Model m = load_model(path);
  if (auto* l = std::get_if<AffineLiftedSystem>(&m)) return *l;
  throw InputError(path + ": expected a lifted model");
}

std::vector<Polynomial> load_lifting(const std::string& path, int n_x) {
  const Source s = read_source(path);
  return with_location(s, [&](const json& d) { return parse_lifting(d, n_x); });
}

Policy load_policy(const std::string& path, int n_x, int n_u, const Box& U) {
  const Source s = read_source(path);
  auto p = with_location(s, [&](const json& d) { return parse_policy(d, n_x, n_u, U); });
  if (!p) throw InputError(path + ": no \"policy\" field");
  return *p;
}

InputSignal load_inputs(const std::string& path, int n_u) {
  const Source s = read_source(path);
  return with_location(s, [&](const json& d) {
    const json& arr = d.is_object() ? d.at("inputs") : d;
    if (!arr.is_array()) throw SchemaError("/inputs", "expected a list of input vectors");
    InputSignal sig;
    for (size_t t = 0; t < arr.size(); ++t) sig.push_back(parse_vector(arr[t], n_u, "/inputs/" + std::to_string(t)));
    return sig;
  });
}

RefinementCertificate load_certificate(const std::string& path, int n_y, int n_z) {
  const Source s = read_source(path);
  return with_location(s, [&](const json& d) { return certificate_from_json(d, n_y, n_z); });
}

json report_header(const std::string& command, const json& config) {
  return json{{"tool", "liftsim"}, {"version", data::kVersion}, {"command", command}, {"config", config}};
}

void emit(const json& doc, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") out << doc.dump(2) << "\n";
  else write_json_file(path, doc);
}

double max_certificate_residual(const std::vector<SosCertificate>& certs) {
  double r = 0.0;
  for (const auto& c : certs) r = std::max(r, c.residual);
  return r;
}

double min_certificate_eigenvalue(const std::vector<SosCertificate>& certs) {
  double e = kInf;
  for (const auto& c : certs) e = std::min(e, c.min_gram_eigenvalue);
  return certs.empty() ? 0.0 : e;
}

json soundness_json(const SoundnessReport& s) {
  return json{{"samples", s.n_samples},
              {"violations", s.n_violations},
              {"max_violation", s.max_violation},
              {"tolerance", s.tolerance}};
}

json synthesis_json(const SynthesisResult& r) {
  return json{{"objective", r.objective},
              {"final_l1", r.final_l1},
              {"padding", r.padding},
              {"mult_degree", r.mult_degree},
              {"solver",
               {{"iterations", r.diagnostics.iterations},
                {"primal_residual", r.diagnostics.primal_residual},
                {"dual_residual", r.diagnostics.dual_residual},
                {"gap", r.diagnostics.gap},
                {"message", r.diagnostics.message}}},
              {"certificates",
               {{"count", r.certificates.size()},
                {"max_identity_residual", max_certificate_residual(r.certificates)},
                {"min_gram_eigenvalue", min_certificate_eigenvalue(r.certificates)}}}};
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::string model, lifting, out, report;
  int mult_degree = 2;
  double inflate = 0.0;
  bool no_tie_break = false;
  int samples = 1000;
  std::uint64_t seed = 0;
  double tol = 1e-6;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const UnliftedSystem sys = load_unlifted(a.model);
  SynthesisRequest req;
  req.system = sys;
  req.lifting = load_lifting(a.lifting, sys.n_x);
  req.mult_degree = a.mult_degree;
  req.tie_break = !a.no_tie_break;
  const SynthesisResult res = synthesize(req);
  AffineLiftedSystem lifted = a.inflate > 0.0 ? inflate(res.lifted, a.inflate) : res.lifted;
  const SoundnessReport snd = sample_soundness(sys, lifted, a.samples, a.seed, a.tol);
  write_json_file(a.out, serialize(lifted));
  json rep = report_header("synth", json{{"model", a.model},
                                         {"lifting", a.lifting},
                                         {"out", a.out},
                                         {"mult_degree", a.mult_degree},
                                         {"inflate", a.inflate},
                                         {"tie_break", !a.no_tie_break},
                                         {"samples", a.samples},
                                         {"seed", a.seed},
                                         {"tol", a.tol}});
  rep["status"] = snd.n_violations == 0 ? "feasible" : "unsound";
  rep["synthesis"] = synthesis_json(res);
  rep["soundness"] = soundness_json(snd);
  emit(rep, a.report, out);
  return snd.n_violations == 0 ? kExitOk : kExitError;
}

// ---- verify / check-cert -------------------------------------------------

struct VerifyArgs {
  std::string lower, upper, out, cert_out, cert;
  int max_iters = 20;
  int mult_degree = 2;
  std::uint64_t seed = 0;
  double tol = 1e-8;
  double inflate = 0.0;
};

json verify_config(const VerifyArgs& a) {
  json c{{"lower", a.lower}, {"upper", a.upper}, {"max_iters", a.max_iters}, {"mult_degree", a.mult_degree},
         {"seed", a.seed},   {"tol", a.tol},     {"inflate", a.inflate}};
  if (!a.cert.empty()) c["cert"] = a.cert;
  if (!a.cert_out.empty()) c["cert_out"] = a.cert_out;
  return c;
}

VerifyOptions verify_options(const VerifyArgs& a) {
  VerifyOptions o;
  o.max_iters = a.max_iters;
  o.mult_degree = a.mult_degree;
  o.seed = a.seed;
  o.check_tol = a.tol;
  return o;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const AffineLiftedSystem Y = load_lifted(a.lower);
  AffineLiftedSystem Z = load_lifted(a.upper);
  if (a.inflate > 0.0) Z = inflate(Z, a.inflate);
  const VerificationOutcome res = verify(Y, Z, verify_options(a));
  json rep = report_header("verify", verify_config(a));
  rep.update(to_json(res));
  if (res.certificate && !a.cert_out.empty()) write_json_file(a.cert_out, to_json(*res.certificate));
  emit(rep, a.out, out);
  return res.status == VerifyStatus::verified ? kExitOk : kExitInconclusive;
}

int cmd_check_cert(const VerifyArgs& a, std::ostream& out) {
  const AffineLiftedSystem Y = load_lifted(a.lower);
  AffineLiftedSystem Z = load_lifted(a.upper);
  if (a.inflate > 0.0) Z = inflate(Z, a.inflate);
  const RefinementCertificate cert = load_certificate(a.cert, Y.n_y(), Z.n_y());
  const CertificateReport res = check_certificate(Y, Z, cert, verify_options(a));
  json rep = report_header("check-cert", verify_config(a));
  rep.update(to_json(res));
  emit(rep, a.out, out);
  return res.pass ? kExitOk : kExitInconclusive;
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string model, policy, inputs, out;
  std::vector<double> x0;
  int T = 20;
  std::uint64_t seed = 0;
  bool zero_disturbance = false;
};

void write_csv(const std::string& path, const Trajectory& tr, const std::vector<std::string>& names, int n_x,
               std::ostream& out) {
  std::ofstream file;
  std::ostream* os = &out;
  if (!path.empty() && path != "-") {
    file.open(path);
    if (!file) throw InputError("cannot write " + path);
    os = &file;
  }
  const int n_u = static_cast<int>(names.size()) - n_x;
  const int n_y = tr.y.empty() ? 0 : static_cast<int>(tr.y[0].size());
  *os << "t";
  for (const auto& n : names) *os << "," << n;
  for (int k = 0; k < n_y; ++k) *os << ",y" << k;
  *os << "\n" << std::setprecision(17);
  for (size_t t = 0; t < tr.x.size(); ++t) {
    *os << t;
    for (int i = 0; i < n_x; ++i) *os << "," << tr.x[t][i];
    for (int i = 0; i < n_u; ++i) {
      *os << ",";
      if (t < tr.u.size()) *os << tr.u[t][i];
    }
    for (int k = 0; k < n_y; ++k) *os << "," << tr.y[t][k];
    *os << "\n";
  }
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const Model m = load_model(a.model);
  const int n_x = std::visit([](const auto& s) { return s.n_x; }, m);
  const int n_u = std::visit([](const auto& s) { return s.n_u; }, m);
  const Box U = std::visit([](const auto& s) { return s.U; }, m);
  const std::optional<Policy> own = std::visit([](const auto& s) { return s.policy; }, m);
  const auto names = std::visit([](const auto& s) { return s.variables; }, m);
  if (static_cast<int>(a.x0.size()) != n_x)
    throw InputError("--x0 needs " + std::to_string(n_x) + " values");
  const VectorXd x0 = Eigen::Map<const VectorXd>(a.x0.data(), n_x);
  InputSource input = RandomInputs{};
  if (!a.inputs.empty()) input = load_inputs(a.inputs, n_u);
  else if (!a.policy.empty()) input = load_policy(a.policy, n_x, n_u, U);
  else if (own) input = *own;
  Trajectory tr;
  if (const auto* s = std::get_if<UnliftedSystem>(&m)) {
    tr = simulate_unlifted(*s, x0, input, a.T, a.seed);
  } else {
    const auto& L = std::get<AffineLiftedSystem>(m);
    const DisturbanceSampler d =
        a.zero_disturbance ? DisturbanceSampler::zero(L.n_y()) : DisturbanceSampler::uniform(L.W);
    tr = simulate_lifted(L, x0, input, d, a.T, a.seed);
  }
  write_csv(a.out, tr, names, n_x, out);
  err << "simulate: " << tr.steps() << " steps, " << to_string(tr.termination) << "\n";
  return kExitOk;
}

// ---- contain -------------------------------------------------------------

struct ContainArgs {
  std::string lower, upper, cert, policy, out;
  int n = 100;
  int T = 20;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  double inflate = 0.0;
};

int cmd_contain(const ContainArgs& a, std::ostream& out) {
  const Model lower = load_model(a.lower);
  AffineLiftedSystem Z = load_lifted(a.upper);
  if (a.inflate > 0.0) Z = inflate(Z, a.inflate);
  MonteCarloOptions opts;
  opts.n = a.n;
  opts.T = a.T;
  opts.seed = a.seed;
  opts.tol = a.tol;
  if (!a.policy.empty()) opts.policy = load_policy(a.policy, Z.n_x, Z.n_u, Z.U);
  ContainmentReport res;
  std::string mode;
  if (const auto* s = std::get_if<UnliftedSystem>(&lower)) {
    if (!a.cert.empty()) throw InputError("--cert applies to a lifted --lower model only");
    res = monte_carlo_containment(*s, Z, opts);
    mode = "psi_inverse";
  } else {
    const auto& Y = std::get<AffineLiftedSystem>(lower);
    if (a.cert.empty()) throw InputError("a lifted --lower model needs --cert");
    res = monte_carlo_containment(Y, Z, load_certificate(a.cert, Y.n_y(), Z.n_y()), opts);
    mode = "certificate";
  }
  json cfg{{"lower", a.lower}, {"upper", a.upper}, {"n", a.n},     {"T", a.T},
           {"seed", a.seed},   {"tol", a.tol},     {"inflate", a.inflate}};
  if (!a.cert.empty()) cfg["cert"] = a.cert;
  if (!a.policy.empty()) cfg["policy"] = a.policy;
  json rep = report_header("contain", cfg);
  rep["mode"] = mode;
  rep["inputs"] = a.policy.empty() ? "open_loop" : "policy";
  rep.update(to_json(res));
  emit(rep, a.out, out);
  return res.n_contained == res.n_trajectories ? kExitOk : kExitError;
}

// ---- duffing -------------------------------------------------------------

struct DuffingArgs {
  std::string out_dir = "duffing_out";
  std::string model;
  std::vector<std::string> liftings;
  std::uint64_t seed = 0;
  double inflate = 10.0;
  int mult_degree = 2;
  int max_iters = 20;
  double tol = 1e-6;
  int n = 100;
  int T = 20;
};

struct NamedPolicy {
  std::string name;
  std::optional<Policy> policy;  // nullopt: open loop
  std::optional<Box> input_range;
};

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

int cmd_duffing(const DuffingArgs& a, std::ostream& out) {
  fs::create_directories(a.out_dir);
  auto path = [&](const std::string& name) { return (fs::path(a.out_dir) / name).string(); };
  Stopwatch clock;
  json timings = json::object();

  UnliftedSystem sys = a.model.empty() ? parse_unlifted(parse_json_text(data::kDuffingModel, "duffing.json"))
                                       : load_unlifted(a.model);
  std::vector<std::vector<Polynomial>> psis;
  if (a.liftings.empty()) {
    for (const char* d : {data::kDuffingPsi1, data::kDuffingPsi2, data::kDuffingPsi3})
      psis.push_back(parse_lifting(parse_json_text(d), sys.n_x));
  } else {
    if (a.liftings.size() != 3) throw InputError("--lifting must be given three times (psi1, psi2, psi3)");
    for (const auto& p : a.liftings) psis.push_back(load_lifting(p, sys.n_x));
  }
  // Open loop on all of U leaves X within a step or two, so a second open-loop
  // run draws inputs from the middle tenth of U.
  const Box small(0.55 * sys.U.lower + 0.45 * sys.U.upper, 0.45 * sys.U.lower + 0.55 * sys.U.upper);
  std::vector<NamedPolicy> policies{{"open_loop", std::nullopt, std::nullopt},
                                    {"open_loop_small_inputs", std::nullopt, small}};
  {
    const json doc = parse_json_text(data::kDuffingPolicies, "policies.json");
    for (const auto& entry : doc.at("policies"))
      policies.push_back(
          {entry.at("name").get<std::string>(), parse_policy(entry, sys.n_x, sys.n_u, sys.U), std::nullopt});
  }
  write_json_file(path("duffing.json"), serialize(sys));

  json config{{"out_dir", a.out_dir}, {"model", a.model.empty() ? "built-in" : a.model},
              {"seed", a.seed},       {"inflate", a.inflate},
              {"mult_degree", a.mult_degree}, {"max_iters", a.max_iters},
              {"tol", a.tol},         {"n", a.n},
              {"T", a.T}};
  config["liftings"] = a.liftings.empty() ? json::array({"built-in psi1", "built-in psi2", "built-in psi3"})
                                          : json(a.liftings);
  json rep = report_header("duffing", config);
  auto save = [&]() {
    write_json_file(path("report.json"), rep);
    write_json_file(path("timings.json"), timings);
  };

  // (1) synthesis
  std::vector<std::optional<AffineLiftedSystem>> LS(3);
  int feasible = 0;
  json synth = json::array();
  for (int i = 0; i < 3; ++i) {
    const std::string name = "LS_" + std::to_string(i + 1);
    json entry{{"name", name}};
    try {
      SynthesisRequest req;
      req.system = sys;
      req.lifting = psis[i];
      req.mult_degree = a.mult_degree;
      const SynthesisResult r = synthesize(req);
      const SoundnessReport snd = sample_soundness(sys, r.lifted, 1000, a.seed, a.tol);
      entry["feasible"] = snd.n_violations == 0;
      entry["synthesis"] = synthesis_json(r);
      entry["soundness"] = soundness_json(snd);
      write_json_file(path(name + ".json"), serialize(r.lifted));
      if (snd.n_violations == 0) {
        LS[i] = r.lifted;
        ++feasible;
      }
    } catch (const SynthesisError& e) {
      entry["feasible"] = false;
      entry["message"] = e.what();
    }
    synth.push_back(entry);
  }
  rep["synthesis"] = synth;
  timings["synthesis"] = clock.lap();
  save();

  VerifyOptions vopts;
  vopts.max_iters = a.max_iters;
  vopts.mult_degree = a.mult_degree;
  vopts.seed = a.seed;

  struct Verified {
    int i, j;
    bool inflated;
    RefinementCertificate cert;
  };
  std::vector<Verified> verified;
  auto run_verify = [&](int i, int j, const AffineLiftedSystem& Z, bool inflated) {
    const std::string lo = "LS_" + std::to_string(i + 1);
    const std::string up = "LS_" + std::to_string(j + 1) + (inflated ? "_inflated" : "");
    const VerificationOutcome o = verify(*LS[i], Z, vopts);
    json entry{{"lower", lo}, {"upper", up}};
    entry.update(to_json(o));
    entry.erase("certificate");
    if (o.certificate) {
      const std::string file = "cert_" + lo + "__" + up + ".json";
      write_json_file(path(file), to_json(*o.certificate));
      entry["certificate_file"] = file;
      verified.push_back({i, j, inflated, *o.certificate});
    }
    return std::make_pair(entry, o.status == VerifyStatus::verified);
  };

  // (2) uninflated cross pairs
  json plain = json::array();
  int plain_inconclusive = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j || !LS[i] || !LS[j]) continue;
      auto [entry, ok] = run_verify(i, j, *LS[j], false);
      if (!ok) ++plain_inconclusive;
      plain.push_back(entry);
    }
  rep["uninflated_verification"] = plain;
  timings["uninflated_verification"] = clock.lap();
  save();

  // (3) inflation and (4) verification of the five pairs
  std::vector<std::optional<AffineLiftedSystem>> inflated(3);
  for (int j = 0; j < 3; ++j)
    if (LS[j]) {
      inflated[j] = inflate(*LS[j], a.inflate);
      write_json_file(path("LS_" + std::to_string(j + 1) + "_inflated.json"), serialize(*inflated[j]));
    }
  json infl = json::array();
  int inflated_verified = 0;
  const std::vector<std::pair<int, int>> pairs{{1, 0}, {1, 1}, {2, 0}, {2, 1}, {2, 2}};
  for (auto [i, j] : pairs) {
    if (!LS[i] || !inflated[j]) continue;
    auto [entry, ok] = run_verify(i, j, *inflated[j], true);
    if (ok) ++inflated_verified;
    infl.push_back(entry);
  }
  rep["inflated_verification"] = infl;
  timings["inflated_verification"] = clock.lap();
  save();

  // (5) Monte-Carlo containment
  json cont = json::array();
  int failures = 0;
  auto record = [&](json entry, const ContainmentReport& r) {
    entry.update(to_json(r));
    failures += r.n_trajectories - r.n_contained;
    cont.push_back(entry);
  };
  for (const auto& p : policies) {
    MonteCarloOptions mc;
    mc.n = a.n;
    mc.T = a.T;
    mc.seed = a.seed;
    mc.tol = a.tol;
    mc.policy = p.policy;
    mc.input_range = p.input_range;
    for (int i = 0; i < 3; ++i)
      if (LS[i])
        record(json{{"mode", "psi_inverse"}, {"lower", "duffing"}, {"upper", "LS_" + std::to_string(i + 1)},
                    {"inputs", p.name}},
               monte_carlo_containment(sys, *LS[i], mc));
    for (const auto& v : verified) {
      const AffineLiftedSystem& Z = v.inflated ? *inflated[v.j] : *LS[v.j];
      record(json{{"mode", "certificate"},
                  {"lower", "LS_" + std::to_string(v.i + 1)},
                  {"upper", "LS_" + std::to_string(v.j + 1) + (v.inflated ? "_inflated" : "")},
                  {"inputs", p.name}},
             monte_carlo_containment(*LS[v.i], Z, v.cert, mc));
    }
  }
  rep["containment"] = cont;
  timings["containment"] = clock.lap();

  rep["summary"] = json{{"syntheses_feasible", feasible},
                        {"inflated_pairs", pairs.size()},
                        {"inflated_verified", inflated_verified},
                        {"uninflated_cross_pairs", plain.size()},
                        {"uninflated_inconclusive", plain_inconclusive},
                        {"containment_runs", cont.size()},
                        {"containment_failures", failures}};
  save();

  out << "syntheses feasible: " << feasible << "/3\n"
      << "uninflated cross pairs inconclusive: " << plain_inconclusive << "/" << plain.size() << "\n"
      << "inflated pairs verified: " << inflated_verified << "/" << pairs.size() << "\n"
      << "containment failures: " << failures << " over " << cont.size() << " runs\n"
      << "report: " << path("report.json") << "\n";
  if (feasible < 3 || failures > 0) return kExitError;
  if (inflated_verified < static_cast<int>(pairs.size())) return kExitInconclusive;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Affine lifted abstractions of polynomial systems: synthesis, verification, containment"};
  app.set_version_flag("--version", std::string("liftsim ") + data::kVersion);
  app.require_subcommand(1);
  auto positive = CLI::PositiveNumber;
  auto nonneg = CLI::NonNegativeNumber;

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize an affine lifted system with SOS certificates");
  synth->add_option("--model", sa.model, "Unlifted model file")->required()->check(CLI::ExistingFile);
  synth->add_option("--lifting", sa.lifting, "Lifting file")->required()->check(CLI::ExistingFile);
  synth->add_option("--mult-degree", sa.mult_degree, "Putinar multiplier degree")->check(nonneg);
  synth->add_option("--out", sa.out, "Lifted model output file")->required();
  synth->add_option("--report", sa.report, "Report file (default stdout)");
  synth->add_option("--inflate", sa.inflate, "Add this to every disturbance offset")->check(nonneg);
  synth->add_flag("--no-tie-break", sa.no_tie_break, "Skip the second-stage coefficient minimization");
  synth->add_option("--samples", sa.samples, "Soundness samples")->check(nonneg);
  synth->add_option("--seed", sa.seed, "Sampling seed");
  synth->add_option("--tol", sa.tol, "Soundness tolerance")->check(positive);

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "Search a certificate for lower <= upper");
  ver->add_option("--lower", va.lower, "Simulated lifted model")->required()->check(CLI::ExistingFile);
  ver->add_option("--upper", va.upper, "Simulating lifted model")->required()->check(CLI::ExistingFile);
  ver->add_option("--max-iters", va.max_iters, "Pattern-search iterations per start")->check(nonneg);
  ver->add_option("--mult-degree", va.mult_degree, "Putinar multiplier degree")->check(nonneg);
  ver->add_option("--seed", va.seed, "Seed for random starts and sampling");
  ver->add_option("--tol", va.tol, "Certificate check tolerance")->check(positive);
  ver->add_option("--inflate", va.inflate, "Inflate the upper model first")->check(nonneg);
  ver->add_option("--out", va.out, "Report file (default stdout)");
  ver->add_option("--cert-out", va.cert_out, "Write the certificate here when verified");

  VerifyArgs ca;
  auto* chk = app.add_subcommand("check-cert", "Re-check a refinement certificate");
  chk->add_option("--lower", ca.lower, "Simulated lifted model")->required()->check(CLI::ExistingFile);
  chk->add_option("--upper", ca.upper, "Simulating lifted model")->required()->check(CLI::ExistingFile);
  chk->add_option("--cert", ca.cert, "Certificate file")->required()->check(CLI::ExistingFile);
  chk->add_option("--mult-degree", ca.mult_degree, "Putinar multiplier degree")->check(nonneg);
  chk->add_option("--seed", ca.seed, "Sampling seed");
  chk->add_option("--tol", ca.tol, "Check tolerance")->check(positive);
  chk->add_option("--inflate", ca.inflate, "Inflate the upper model first")->check(nonneg);
  chk->add_option("--out", ca.out, "Report file (default stdout)");

  SimulateArgs ma;
  auto* sim = app.add_subcommand("simulate", "Simulate a model and write a trajectory CSV");
  sim->add_option("--model", ma.model, "Model file")->required()->check(CLI::ExistingFile);
  sim->add_option("--x0", ma.x0, "Initial state, comma separated")->required()->delimiter(',')->allow_extra_args(false);
  auto* pol = sim->add_option("--policy", ma.policy, "Policy file")->check(CLI::ExistingFile);
  sim->add_option("--inputs", ma.inputs, "Input signal file")->check(CLI::ExistingFile)->excludes(pol);
  sim->add_option("-T,--horizon", ma.T, "Horizon")->check(nonneg);
  sim->add_option("--seed", ma.seed, "Seed for inputs and disturbances");
  sim->add_flag("--zero-disturbance", ma.zero_disturbance, "Lifted models: w = 0");
  sim->add_option("--out", ma.out, "CSV file (default stdout)");

  ContainArgs ta;
  auto* con = app.add_subcommand("contain", "Monte-Carlo behavior containment");
  con->add_option("--lower", ta.lower, "Unlifted or lifted model")->required()->check(CLI::ExistingFile);
  con->add_option("--upper", ta.upper, "Lifted model")->required()->check(CLI::ExistingFile);
  con->add_option("--cert", ta.cert, "Certificate (lifted lower model)")->check(CLI::ExistingFile);
  con->add_option("--policy", ta.policy, "Closed-loop policy file")->check(CLI::ExistingFile);
  con->add_option("-n", ta.n, "Trajectories")->check(nonneg);
  con->add_option("-T,--horizon", ta.T, "Horizon")->check(nonneg);
  con->add_option("--seed", ta.seed, "Master seed");
  con->add_option("--tol", ta.tol, "Membership tolerance")->check(positive);
  con->add_option("--inflate", ta.inflate, "Inflate the upper model first")->check(nonneg);
  con->add_option("--out", ta.out, "Report file (default stdout)");

  DuffingArgs da;
  auto* duf = app.add_subcommand("duffing", "Run the Duffing experiment end to end");
  duf->add_option("--out-dir", da.out_dir, "Artifact directory");
  duf->add_option("--model", da.model, "Override the built-in model")->check(CLI::ExistingFile);
  duf->add_option("--lifting", da.liftings, "Override the liftings (three files)")->check(CLI::ExistingFile);
  duf->add_option("--seed", da.seed, "Master seed");
  duf->add_option("--inflate", da.inflate, "Offset added to every disturbance bound")->check(nonneg);
  duf->add_option("--mult-degree", da.mult_degree, "Putinar multiplier degree")->check(nonneg);
  duf->add_option("--max-iters", da.max_iters, "Pattern-search iterations per start")->check(nonneg);
  duf->add_option("--tol", da.tol, "Soundness and containment tolerance")->check(positive);
  duf->add_option("-n", da.n, "Trajectories per containment run")->check(nonneg);
  duf->add_option("-T,--horizon", da.T, "Horizon")->check(nonneg);

  std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa, out);
    if (ver->parsed()) return cmd_verify(va, out);
    if (chk->parsed()) return cmd_check_cert(ca, out);
    if (sim->parsed()) return cmd_simulate(ma, out, err);
    if (con->parsed()) return cmd_contain(ta, out);
    if (duf->parsed()) return cmd_duffing(da, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace liftsim::cli
