#include "bfq/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bfq/analyze.hpp"
#include "bfq/error.hpp"
#include "bfq/io.hpp"
#include "bfq/rng.hpp"

namespace bfq {

namespace {

using nlohmann::json;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

int exit_code_for(const Error& e) {
  if (e.code() == "io" || e.code() == "internal") return kExitIo;
  if (e.code() == "diverged") return kExitDiverged;
  return kExitUsage;
}

// --- config ---------------------------------------------------------------

template <typename T>
T typed(const json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error("config", path + ": wrong type (" + std::string(v.type_name()) + ")");
  }
}

std::size_t count_field(const json& v, const std::string& path) {
  if (!v.is_number_unsigned()) throw Error("config", path + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

void apply_scheme(const json& s, QuantConfig& q) {
  if (!s.is_object()) throw Error("config", "scheme: expected an object");
  for (const auto& [key, v] : s.items()) {
    const std::string path = "scheme." + key;
    if (key == "bits") {
      if (!v.is_number_integer()) throw Error("config", path + ": expected an integer");
      q.bits = v.get<int>();
      if (q.bits < 2 || q.bits > 8) throw Error("config", path + ": must be in 2..8");
    } else if (key == "weights" || key == "activations") {
      Grouping g;
      try {
        g = Grouping::parse(typed<std::string>(v, path));
      } catch (const Error& e) {
        throw Error("config", path + ": " + e.what());
      }
      (key == "weights" ? q.weights : q.activations) = g;
    } else if (key == "enabled") {
      q.enabled = typed<bool>(v, path);
    } else {
      throw Error("config", path + ": unknown key");
    }
  }
}

// --- commands -------------------------------------------------------------

std::uint64_t default_seed() {
  if (const char* env = std::getenv("BFQ_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0') return v;
    throw Error("config", "BFQ_SEED is not an unsigned integer: '" + std::string(env) + "'");
  }
  return 0;
}

struct GenDataOpts {
  std::string archetype;
  std::size_t n = 64;
  std::size_t samples = 128;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_gen_data(const GenDataOpts& o, std::ostream& out) {
  const Archetype a = parse_archetype(o.archetype);
  const std::uint64_t seed = o.seed ? *o.seed : default_seed();
  const CalibrationSet cal = gen_synthetic(a, o.n, o.samples, seed);
  write_calibration(o.out, cal);
  out << "wrote " << o.out << ": " << to_string(a) << " n=" << o.n
      << " samples=" << o.samples << " seed=" << seed << "\n";
  return kExitOk;
}

struct CalibrateOpts {
  std::string data;
  std::string config;
  std::string out_transform;
  std::string out_report;
  std::optional<int> steps;
  std::optional<double> lr0;
  std::optional<double> lambda;
  std::optional<int> bits;
  std::optional<std::string> init;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
};

json report_json(const JobConfig& job, const TrainResult& r, const LossTerms& final_loss,
                 const ComparisonRow& metrics) {
  const TrainConfig& c = job.train;
  json cfg;
  cfg["steps"] = c.steps;
  cfg["lr0"] = c.lr0;
  cfg["lambda_uniform"] = c.lambda_uniform;
  cfg["init"] = to_string(c.init);
  cfg["seed"] = c.seed;
  cfg["soft_tau"] = c.soft_tau;
  cfg["random_init_scale"] = c.random_init_scale;
  cfg["scale_gradient"] = c.scale_gradient;
  cfg["scheme"] = {{"bits", c.quant.bits},
                   {"weights", c.quant.weights.to_string()},
                   {"activations", c.quant.activations.to_string()},
                   {"enabled", c.quant.enabled}};

  json j;
  j["config"] = cfg;
  j["kind"] = r.params.kind();
  j["n"] = r.params.dim();
  j["params"] = r.params.learnable_count();
  j["loss_curve"] = r.report.loss_curve;
  j["recon_curve"] = r.report.recon_curve;
  j["uniform_curve"] = r.report.uniform_curve;
  j["best_step"] = r.report.best_step;
  j["wall_seconds"] = r.report.wall_seconds;
  j["final"] = {{"total", final_loss.total},
                {"recon", final_loss.recon},
                {"uniform", final_loss.uniform},
                {"mse", metrics.recon_mse},
                {"kl", metrics.kl},
                {"mu", metrics.mu}};
  return j;
}

int cmd_calibrate(const CalibrateOpts& o, std::ostream& out) {
  JobConfig job;
  if (!o.config.empty()) job = parse_job_config(read_file(o.config));
  TrainConfig& c = job.train;
  if (!o.data.empty()) job.data = o.data;
  if (!o.out_transform.empty()) job.out_transform = o.out_transform;
  if (!o.out_report.empty()) job.out_report = o.out_report;
  if (o.steps) c.steps = *o.steps;
  if (o.lr0) c.lr0 = *o.lr0;
  if (o.lambda) c.lambda_uniform = *o.lambda;
  if (o.bits) c.quant.bits = *o.bits;
  if (o.init) c.init = parse_init(*o.init);
  if (o.tau) c.soft_tau = *o.tau;
  if (o.seed) {
    c.seed = *o.seed;
  } else if (!job.seed_set) {
    c.seed = default_seed();
  }
  c.quant.weight_scheme().validate();
  c.validate();
  if (job.out_transform.empty()) throw Error("config", "out_transform: no output path given");

  CalibrationSet cal;
  if (!job.data.empty()) {
    cal = read_calibration(job.data);
  } else if (job.archetype) {
    cal = gen_synthetic(parse_archetype(*job.archetype), job.n, job.m_samples, c.seed);
  } else {
    throw Error("config", "data: give --data or an archetype in the config");
  }

  const TrainResult r = train(cal, c);
  const LossTerms final_loss = total_loss(cal.w, cal.x, r.params, c);
  const ComparisonRow metrics = evaluate_method("butterfly-learned", cal, r.params, c.quant);

  TransformFile file{r.params, {}};
  file.metadata["archetype"] = cal.archetype;
  file.metadata["seed"] = std::to_string(c.seed);
  file.metadata["loss"] = general(final_loss.total);
  file.metadata["steps"] = std::to_string(c.steps);
  file.metadata["init"] = to_string(c.init);
  file.metadata["train_seconds"] = general(r.report.wall_seconds);
  write_transform(job.out_transform, file);
  if (!job.out_report.empty()) {
    write_file(job.out_report, report_json(job, r, final_loss, metrics).dump(2) + "\n");
  }
  out << "total=" << general(final_loss.total) << " recon=" << general(final_loss.recon)
      << " uniform=" << general(final_loss.uniform) << "\n";
  return kExitOk;
}

struct AnalyzeOpts {
  std::string data;
  std::vector<std::string> transforms;
  std::string out;
  std::string profile;
  std::optional<std::uint64_t> seed;
  int bits = 2;
};

// Keyword baseline or a transform file.
struct Candidate {
  std::string label;
  Transform transform;
  double seconds = 0.0;
};

Candidate resolve_transform(const std::string& name, std::size_t n, std::uint64_t seed) {
  if (name == "identity") return {name, Transform(DenseTransform{DenseMatrix::identity(n)})};
  if (name == "hadamard") {
    if (!is_power_of_two(n)) {
      throw Error("dimension", "hadamard needs a power-of-2 dimension, got " + std::to_string(n));
    }
    return {name, Transform(init_hadamard(n))};
  }
  if (name == "random") {
    return {name, Transform(DenseTransform{haar_orthogonal(n, seed + 0x9E3779B97F4A7C15ULL)})};
  }
  TransformFile f = read_transform(name);
  Candidate c{std::filesystem::path(name).stem().string(), f.transform};
  if (const auto it = f.metadata.find("label"); it != f.metadata.end()) c.label = it->second;
  if (const auto it = f.metadata.find("train_seconds"); it != f.metadata.end()) {
    c.seconds = std::strtod(it->second.c_str(), nullptr);
  }
  if (c.transform.dim() != n) {
    throw Error("shape", name + " has dimension " + std::to_string(c.transform.dim()) +
                             " but the data has " + std::to_string(n));
  }
  return c;
}

int cmd_analyze(const AnalyzeOpts& o, std::ostream& out) {
  const CalibrationSet cal = read_calibration(o.data);
  const std::uint64_t seed = o.seed ? *o.seed : default_seed();
  QuantConfig quant;
  quant.bits = o.bits;
  quant.activation_scheme().validate();

  std::vector<ComparisonRow> rows;
  std::vector<LabeledTransform> labeled;
  for (const auto& name : o.transforms) {
    Candidate c = resolve_transform(name, cal.dim(), seed);
    ComparisonRow row = evaluate_method(c.label, cal, c.transform, quant);
    row.train_seconds = c.seconds;
    rows.push_back(row);
    labeled.push_back({c.label, std::move(c.transform)});
  }

  std::ostringstream csv;
  csv << "method,mse,kl,mu,params,seconds\n";
  for (const auto& r : rows) {
    csv << r.method << ',' << general(r.recon_mse) << ',' << general(r.kl) << ','
        << fixed(r.mu, 6) << ',' << r.params_count << ',' << fixed(r.train_seconds, 3) << "\n";
  }
  write_file(o.out, csv.str());

  std::string profile_path = o.profile;
  if (profile_path.empty()) {
    std::filesystem::path p(o.out);
    profile_path = (p.parent_path() / (p.stem().string() + ".coherence.csv")).string();
  }
  const CoherenceProfile profile = coherence_profile(labeled);
  std::ostringstream prof;
  prof << "label,mu\n";
  for (const auto& rec : profile.records) prof << rec.label << ',' << general(rec.mu) << "\n";
  write_file(profile_path, prof.str());

  out << csv.str();
  return kExitOk;
}

struct BenchOpts {
  std::vector<std::size_t> sizes{64, 256, 1024};
  int reps = 5;
  std::optional<std::uint64_t> seed;
};

int cmd_bench(const BenchOpts& o, std::ostream& out) {
  if (o.reps < 1) throw Error("config", "--reps must be at least 1");
  for (std::size_t n : o.sizes) {
    if (n < 2 || !is_power_of_two(n)) {
      throw Error("dimension", "bench size " + std::to_string(n) + " is not a power of 2 >= 2");
    }
  }
  const std::uint64_t seed = o.seed ? *o.seed : default_seed();
  out << "n,givens_ops,expected_ops,median_seconds\n";
  for (std::size_t n : o.sizes) {
    const ButterflyParams p = init_random(n, seed);
    Rng rng(seed + n);
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();

    const std::size_t expected = (n / 2) * log2_floor(n);
    reset_givens_op_count();
    butterfly_forward_inplace(p, x);
    const std::size_t ops = givens_op_count();
    if (ops != expected) {
      throw Error("internal", "op count " + std::to_string(ops) + " != " +
                                  std::to_string(expected) + " at n=" + std::to_string(n));
    }

    // Enough inner repetitions for a measurable interval.
    const int inner = static_cast<int>(std::max<std::size_t>(1, (1u << 20) / (expected + 1)));
    std::vector<double> times;
    for (int r = 0; r < o.reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < inner; ++i) butterfly_forward_inplace(p, x);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double>(t1 - t0).count() / inner);
    }
    std::sort(times.begin(), times.end());
    const double median = times.size() % 2 ? times[times.size() / 2]
                                           : 0.5 * (times[times.size() / 2 - 1] +
                                                    times[times.size() / 2]);
    out << n << ',' << ops << ',' << expected << ',' << general(median) << "\n";
  }
  return kExitOk;
}

struct ExportOpts {
  std::string transform;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_export(const ExportOpts& o, std::ostream& out) {
  const std::uint64_t seed = o.seed ? *o.seed : default_seed();
  std::size_t n = o.n;
  const bool keyword =
      o.transform == "identity" || o.transform == "hadamard" || o.transform == "random";
  if (keyword && n == 0) throw Error("config", "--n is required for keyword transforms");
  if (!keyword) n = read_transform(o.transform).transform.dim();
  const Candidate c = resolve_transform(o.transform, n, seed);
  const DenseMatrix m = c.transform.materialize();
  write_file(o.out, encode_matrix(m));
  out << "wrote " << o.out << ": " << m.rows() << "x" << m.cols() << "\n";
  return kExitOk;
}

}  // namespace

JobConfig parse_job_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error("config", "parse error at offset " + std::to_string(e.byte));
  }
  if (!j.is_object()) throw Error("config", "top level: expected an object");

  JobConfig job;
  TrainConfig& c = job.train;
  for (const auto& [key, v] : j.items()) {
    if (key == "steps") {
      if (!v.is_number_integer()) throw Error("config", "steps: expected an integer");
      c.steps = v.get<int>();
    } else if (key == "lr0") {
      c.lr0 = typed<double>(v, key);
    } else if (key == "lambda_uniform") {
      c.lambda_uniform = typed<double>(v, key);
    } else if (key == "init") {
      try {
        c.init = parse_init(typed<std::string>(v, key));
      } catch (const Error& e) {
        throw Error("config", key + ": " + e.what());
      }
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw Error("config", "seed: expected a non-negative integer");
      c.seed = v.get<std::uint64_t>();
      job.seed_set = true;
    } else if (key == "soft_tau") {
      c.soft_tau = typed<double>(v, key);
    } else if (key == "random_init_scale") {
      c.random_init_scale = typed<double>(v, key);
    } else if (key == "scale_gradient") {
      c.scale_gradient = typed<bool>(v, key);
    } else if (key == "scheme") {
      apply_scheme(v, c.quant);
    } else if (key == "factorization") {
      if (!v.is_array() || v.size() != 2) {
        throw Error("config", "factorization: expected [d1, d2]");
      }
      c.factorization = std::make_pair(count_field(v[0], "factorization[0]"),
                                       count_field(v[1], "factorization[1]"));
    } else if (key == "archetype") {
      job.archetype = typed<std::string>(v, key);
    } else if (key == "n") {
      job.n = count_field(v, key);
    } else if (key == "m_samples") {
      job.m_samples = count_field(v, key);
    } else if (key == "data") {
      job.data = typed<std::string>(v, key);
    } else if (key == "out_transform") {
      job.out_transform = typed<std::string>(v, key);
    } else if (key == "out_report") {
      job.out_report = typed<std::string>(v, key);
    } else {
      throw Error("config", key + ": unknown key");
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error("config", e.what());
  }
  return job;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned butterfly rotations for low-bit quantization"};
  app.require_subcommand(1);

  GenDataOpts gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic calibration set");
  gen_cmd->add_option("--archetype", gen.archetype,
                      std::string("Outlier archetype: ") + kArchetypeNames)
      ->required();
  gen_cmd->add_option("--n", gen.n, "Layer dimension")->check(CLI::Range(2, 1 << 20));
  gen_cmd->add_option("--samples", gen.samples, "Activation samples")
      ->check(CLI::Range(1, 1 << 24));
  gen_cmd->add_option("--seed", gen.seed, "Seed (default: BFQ_SEED or 0)");
  gen_cmd->add_option("--out", gen.out, "Output calibration file")->required();

  CalibrateOpts cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Train a butterfly transform");
  cal_cmd->add_option("--data", cal.data, "Calibration file");
  cal_cmd->add_option("--config", cal.config, "JSON job config");
  cal_cmd->add_option("--out-transform", cal.out_transform, "Output transform file");
  cal_cmd->add_option("--out-report", cal.out_report, "Output JSON report");
  cal_cmd->add_option("--steps", cal.steps, "SGD steps");
  cal_cmd->add_option("--lr0", cal.lr0, "Initial learning rate");
  cal_cmd->add_option("--lambda", cal.lambda, "Uniformity weight");
  cal_cmd->add_option("--bits", cal.bits, "Bit width");
  cal_cmd->add_option("--init", cal.init, "identity, hadamard or random");
  cal_cmd->add_option("--seed", cal.seed, "Seed (default: config, BFQ_SEED or 0)");
  cal_cmd->add_option("--tau", cal.tau, "Soft-histogram temperature in code units");

  AnalyzeOpts an;
  auto* an_cmd = app.add_subcommand("analyze", "Compare transforms on a calibration set");
  an_cmd->add_option("--data", an.data, "Calibration file")->required();
  an_cmd->add_option("--transform", an.transforms,
                     "Transform file or keyword (identity, hadamard, random); repeatable")
      ->required();
  an_cmd->add_option("--out", an.out, "Output CSV")->required();
  an_cmd->add_option("--profile", an.profile, "Coherence profile CSV");
  an_cmd->add_option("--seed", an.seed, "Seed for the random baseline");
  an_cmd->add_option("--bits", an.bits, "Bit width");

  BenchOpts bench;
  auto* bench_cmd = app.add_subcommand("bench", "Count Givens operations and time applies");
  bench_cmd->add_option("--sizes", bench.sizes, "Comma-separated powers of 2")
      ->delimiter(',');
  bench_cmd->add_option("--reps", bench.reps, "Timing repetitions");
  bench_cmd->add_option("--seed", bench.seed, "Seed");

  ExportOpts ex;
  auto* ex_cmd = app.add_subcommand("export", "Write a transform as a dense matrix");
  ex_cmd->add_option("--transform", ex.transform, "Transform file or keyword")->required();
  ex_cmd->add_option("--n", ex.n, "Dimension for keyword transforms");
  ex_cmd->add_option("--seed", ex.seed, "Seed for the random keyword");
  ex_cmd->add_option("--out", ex.out, "Output matrix file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*cal_cmd) return cmd_calibrate(cal, out);
    if (*an_cmd) return cmd_analyze(an, out);
    if (*bench_cmd) return cmd_bench(bench, out);
    if (*ex_cmd) return cmd_export(ex, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace bfq
