#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "carleman_lab/carleman_verifier.hpp"
#include "carleman_lab/cauchy.hpp"
#include "carleman_lab/config.hpp"
#include "carleman_lab/grid_calculus.hpp"
#include "carleman_lab/inverse_source.hpp"
#include "carleman_lab/parallel.hpp"
#include "carleman_lab/rng.hpp"
#include "carleman_lab/spde_forward.hpp"

#ifndef CARLEMAN_LAB_VERSION
#define CARLEMAN_LAB_VERSION "0.0.0"
#endif

namespace carleman_lab {

/// Shortest decimal that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_number(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw InvalidArgument("not a number: '" + s + "'");
  return v;
}

/// A CSV body with a fixed column order.
class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  class Row {
   public:
    Row& num(double v) {
      if (!std::isfinite(v)) non_finite_ = true;
      cells_.push_back(format_number(v));
      return *this;
    }
    Row& opt(const std::optional<double>& v) {
      if (v) return num(*v);
      cells_.emplace_back();
      return *this;
    }
    Row& integer(long long v) {
      cells_.push_back(std::to_string(v));
      return *this;
    }
    Row& uint(unsigned long long v) {
      cells_.push_back(std::to_string(v));
      return *this;
    }
    Row& flag(bool v) {
      cells_.emplace_back(v ? "1" : "0");
      return *this;
    }
    Row& text(std::string v) {
      for (char& ch : v) {
        if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
      }
      cells_.push_back(std::move(v));
      return *this;
    }

   private:
    friend class Table;
    std::vector<std::string> cells_;
    bool non_finite_ = false;
  };

  void add(Row r) {
    if (r.cells_.size() != columns_.size()) {
      throw std::logic_error("table row has " + std::to_string(r.cells_.size()) + " cells, expected " +
                             std::to_string(columns_.size()));
    }
    non_finite_ = non_finite_ || r.non_finite_;
    rows_.push_back(std::move(r.cells_));
  }

  bool has_non_finite() const noexcept { return non_finite_; }
  std::size_t size() const noexcept { return rows_.size(); }

  std::string body() const {
    std::string out;
    for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + columns_[i];
    out += '\n';
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += row[i];
      }
      out += '\n';
    }
    return out;
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
  bool non_finite_ = false;
};

struct OutputFile {
  std::string name;
  Table table;
  std::vector<std::string> summary;
};

struct RunOptions {
  std::filesystem::path out_dir = ".";
  int threads = 1;
};

struct RunResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::filesystem::path> files;
};

namespace detail {

inline Table::Row base_row(const ExperimentConfig& c, std::uint64_t hash) {
  Table::Row r;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  r.text(buf).uint(c.ensemble.seed);
  return r;
}

inline std::vector<std::string> with_base(std::vector<std::string> cols) {
  cols.insert(cols.begin(), {"config_hash", "seed"});
  return cols;
}

inline std::vector<OutputFile> run_identities(const ExperimentConfig& c, std::uint64_t hash, int threads) {
  Table t(with_base({"N", "identity", "trials", "max_residual", "max_abs_difference", "skipped"}));
  for (std::size_t gi = 0; gi < c.grid.interior.size(); ++gi) {
    const GridSpec grid(c.grid.length, c.grid.interior[gi]);
    const std::uint64_t base = derive_path_seed(c.ensemble.seed, gi);
    const auto reports = parallel_map(c.identities.trials, threads, [&](std::size_t k) {
      const CounterStream rng(derive_path_seed(base, k));
      std::uint64_t ctr = 0;
      DiscreteField u(grid), v(grid);
      for (int i = 0; i <= grid.interior() + 1; ++i) u[i] = 2.0 * rng.uniform(ctr++) - 1.0;
      for (int i = 1; i <= grid.interior(); ++i) v[i] = 2.0 * rng.uniform(ctr++) - 1.0;
      return verify_identities(u, v);
    });
    const auto& first = reports.front().results;
    for (std::size_t id = 0; id < first.size(); ++id) {
      double res = 0.0, diff = 0.0;
      std::size_t skipped = 0;
      for (const auto& rep : reports) {
        const auto& r = rep.results[id];
        if (r.residual) res = std::max(res, *r.residual);
        else ++skipped;
        diff = std::max(diff, r.max_abs_difference);
      }
      t.add(base_row(c, hash)
                .integer(grid.interior())
                .text(first[id].name)
                .uint(reports.size())
                .num(res)
                .num(diff)
                .uint(skipped));
    }
  }
  return {{c.output.file, std::move(t), {}}};
}

inline std::vector<OutputFile> run_simulate(const ExperimentConfig& c, std::uint64_t hash, int threads) {
  Table t(with_base({"N", "h", "n", "t", "mean_l2_sq", "mean_l2_sq_std_error", "mean_center", "mean_center_std_error"}));
  const TimeGrid time(c.time.horizon, c.time.steps);
  const int every = c.output.every;
  std::vector<int> levels;
  for (int n = 0; n <= time.steps(); n += every) levels.push_back(n);
  if (levels.back() != time.steps()) levels.push_back(time.steps());
  for (int nint : c.grid.interior) {
    const GridSpec grid(c.grid.length, nint);
    SPDEProblem p;
    p.grid = grid;
    p.time = time;
    if (c.coefficients.a != 0.0) p.a = SpaceTimeFunction::constant(c.coefficients.a);
    if (c.coefficients.b != 0.0) p.b = SpaceTimeFunction::constant(c.coefficients.b);
    if (c.coefficients.c != 0.0) p.c = SpaceTimeFunction::constant(c.coefficients.c);
    if (c.coefficients.g != 0.0) p.g = SpaceTimeFunction::constant(c.coefficients.g);
    if (c.family.name == "sine") {
      const double amp = c.family.amplitude, ell = c.grid.length;
      p.initial = DiscreteField::sample(grid, [amp, ell](double x) { return amp * std::sin(std::numbers::pi * x / ell); });
    }
    const CompiledProblem cp = compile(p);
    const int mid = (nint + 1) / 2;
    const double h = grid.h();
    const auto per_path =
        map_paths(time, c.ensemble.paths, c.ensemble.seed, threads, [&](std::size_t, const SamplePath& path) {
          std::vector<std::pair<double, double>> v;
          v.reserve(levels.size());
          std::size_t next = 0;
          solve_forward(cp, path, [&](int n, std::span<const double> y) {
            if (next < levels.size() && levels[next] == n) {
              v.emplace_back(l2_energy(y, h), y[static_cast<std::size_t>(mid)]);
              ++next;
            }
          });
          return v;
        });
    for (std::size_t k = 0; k < levels.size(); ++k) {
      std::vector<double> a(per_path.size()), b(per_path.size());
      for (std::size_t m = 0; m < per_path.size(); ++m) {
        a[m] = per_path[m][k].first;
        b[m] = per_path[m][k].second;
      }
      const auto ea = expectation(a), eb = expectation(b);
      t.add(base_row(c, hash)
                .integer(nint)
                .num(h)
                .integer(levels[k])
                .num(time.t(levels[k]))
                .num(ea.mean)
                .opt(ea.std_error)
                .num(eb.mean)
                .opt(eb.std_error));
    }
  }
  return {{c.output.file, std::move(t), {}}};
}

inline std::vector<OutputFile> run_carleman(const ExperimentConfig& c, std::uint64_t hash, int threads) {
  const auto& w = c.weights;
  const CarlemanFamily fam = c.family.name == "zero"
                                 ? zero_family(c.grid.length, c.time.horizon, c.time.steps)
                                 : driven_noise_family(c.grid.length, c.time.horizon, c.time.steps, c.family.modes,
                                                       c.family.family_seed);
  SweepOptions opt;
  opt.x_star = w.x_star;
  opt.t0 = w.t0;
  opt.beta = w.beta;
  opt.suppress_terminal = w.suppress_terminal;
  opt.suppression_ratio = w.suppression_ratio;
  opt.c_lambda_grid = w.c_lambda;
  opt.threads = threads;
  const auto res = carleman_sweep(fam, w.s, w.lambda, c.grid.interior, c.ensemble.paths, w.eps_cfg, c.ensemble.seed, opt);

  std::vector<std::string> cols{"N", "h", "s", "lambda", "c_lambda", "status", "skip_reason", "beta",
                                "suppressed_terminal", "paths", "log_scale"};
  for (int k = 1; k <= 4; ++k) cols.push_back("lhs" + std::to_string(k));
  for (int k = 1; k <= 5; ++k) cols.push_back("rhs" + std::to_string(k));
  for (const char* s : {"lhs_sum", "rhs_sum", "ratio", "ratio_std_error", "degenerate", "flagged"}) cols.emplace_back(s);
  Table t(with_base(cols));
  for (const auto& cell : res.cells) {
    auto row = base_row(c, hash);
    row.integer(cell.interior).num(cell.h).num(cell.s).num(cell.lambda).num(cell.c_lambda);
    if (!cell.report) {
      row.text("skipped").text(cell.skip_reason);
      // beta .. degenerate stay empty
      for (int k = 0; k < 18; ++k) row.text("");
      row.flag(cell.flagged);
      t.add(std::move(row));
      continue;
    }
    const auto& r = *cell.report;
    row.text("ok").text("").num(r.beta).flag(r.suppressed_terminal).uint(r.paths).num(r.log_scale);
    for (const auto& e : r.lhs) row.num(e.mean);
    for (const auto& e : r.rhs) row.num(e.mean);
    row.num(r.lhs_sum).num(r.rhs_sum).opt(r.ratio).opt(r.ratio_std_error).flag(r.degenerate).flag(cell.flagged);
    t.add(std::move(row));
  }
  std::vector<std::string> summary;
  for (const auto& p : res.per_h_max) {
    summary.push_back("per_h_max lambda=" + format_number(p.lambda) + " c_lambda=" + format_number(p.c_lambda) +
                      " h=" + format_number(p.h) + " max_ratio=" + (p.max_ratio ? format_number(*p.max_ratio) : "") +
                      " s_at_max=" + format_number(p.s_at_max));
  }
  for (double lam : w.lambda) {
    for (double cl : w.c_lambda) {
      const auto sp = res.spread(lam, cl);
      summary.push_back("spread lambda=" + format_number(lam) + " c_lambda=" + format_number(cl) + " value=" +
                        (sp ? format_number(*sp) : "") + " within_2x=" + (sp && *sp <= 2.0 ? "1" : "0"));
    }
  }
  return {{c.output.file, std::move(t), std::move(summary)}};
}

inline std::vector<OutputFile> run_inverse(const ExperimentConfig& c, std::uint64_t hash, int threads) {
  InverseSourceBase base;
  base.length = c.grid.length;
  base.horizon = c.time.horizon;
  base.steps = c.time.steps;
  base.a = c.coefficients.a;
  base.b = c.coefficients.b;
  const auto pairs = random_separable_pairs(c.family.pairs, c.grid.length, c.time.horizon, c.family.family_seed);
  const auto res = uniformity_sweep(base, c.grid.interior, pairs, c.ensemble.paths, c.ensemble.seed, threads, c.family.band);
  Table t(with_base({"N", "h", "pair", "paths", "source_gap", "flux_gap", "terminal_gap", "data_gap",
                     "data_gap_std_error", "ratio", "ratio_std_error", "dominance_constant", "dominance_holds",
                     "degenerate", "violation_candidate"}));
  for (const auto& row : res.rows) {
    const auto& r = row.record;
    t.add(base_row(c, hash)
              .integer(row.interior)
              .num(row.h)
              .uint(row.pair)
              .uint(r.paths)
              .num(r.source_gap)
              .num(r.flux_gap)
              .num(r.terminal_gap)
              .num(r.data_gap)
              .num(r.data_gap_std_error)
              .opt(r.ratio)
              .opt(r.ratio_std_error)
              .num(r.dominance_constant)
              .flag(r.dominance_holds)
              .flag(r.degenerate)
              .flag(r.violation_candidate));
  }
  std::vector<std::string> summary;
  for (const auto& [h, v] : res.per_h_max) {
    summary.push_back("per_h_max h=" + format_number(h) + " max_ratio=" + (v ? format_number(v->first) : "") +
                      " std_error=" + (v ? format_number(v->second) : ""));
  }
  summary.push_back("spread value=" + (res.spread ? format_number(*res.spread) : std::string()) +
                    " verdict=" + res.verdict.value_or("none"));
  return {{c.output.file, std::move(t), std::move(summary)}};
}

inline std::vector<OutputFile> run_cauchy(const ExperimentConfig& c, std::uint64_t hash, int threads) {
  const CauchyCoefficients coef{c.coefficients.a, c.coefficients.b, c.coefficients.c};
  const CauchyFamily fam = c.family.name == "zero"
                               ? zero_cauchy_family(c.grid.length, c.time.horizon, c.time.steps)
                               : sideways_family(c.grid.length, c.time.horizon, c.time.steps, c.family.omegas, coef);
  HolderOptions o;
  o.x_left = c.family.x_left;
  o.epsilon = c.family.epsilon;
  o.delta_fraction = c.family.delta_fraction;
  o.threads = threads;
  Table t(with_base({"N", "h", "param", "paths", "m_bound", "xi_h1", "eta_l2", "data_norm", "data_norm_std_error",
                     "interior_norm", "skipped", "skip_reason", "epsilon", "x_left", "beta", "n_level", "t0_count",
                     "inclusion_holds"}));
  std::vector<std::string> summary;
  for (int nint : c.grid.interior) {
    const auto ex = holder_experiment(fam, nint, c.ensemble.paths, c.ensemble.seed, o);
    for (const auto& r : ex.records) {
      t.add(base_row(c, hash)
                .integer(nint)
                .num(r.h)
                .num(r.param)
                .uint(r.paths)
                .num(r.m_bound)
                .num(r.xi_h1)
                .num(r.eta_l2)
                .num(r.data_norm)
                .num(r.data_norm_std_error)
                .num(r.interior_norm)
                .flag(r.skipped)
                .text(r.skip_reason)
                .num(r.epsilon)
                .num(r.x_left)
                .num(r.beta)
                .integer(r.n_level)
                .uint(r.t0_count)
                .flag(r.inclusion_holds));
    }
    std::string line = "fit N=" + std::to_string(nint) + " h=" + format_number(GridSpec(c.grid.length, nint).h());
    if (ex.fit) {
      const auto& f = *ex.fit;
      line += " kappa=" + format_number(f.kappa) + " r2=" + format_number(f.r2) + " decades=" +
              format_number(f.decades) + " c_fit=" + format_number(f.c_fit) + " c_envelope=" +
              format_number(f.c_envelope) + " used=" + std::to_string(f.used);
    } else {
      line += " kappa= (fewer than two usable records)";
    }
    summary.push_back(line);
  }
  std::vector<OutputFile> out;
  out.push_back({c.output.file, std::move(t), std::move(summary)});

  if (c.continuation.enabled) {
    const auto& k = c.continuation;
    SPDEProblem coefp;
    coefp.grid = GridSpec(c.grid.length, k.interior);
    coefp.time = TimeGrid(k.horizon, k.steps);
    if (coef.a != 0.0) coefp.a = SpaceTimeFunction::constant(coef.a);
    if (coef.b != 0.0) coefp.b = SpaceTimeFunction::constant(coef.b);
    if (coef.c != 0.0) coefp.c = SpaceTimeFunction::constant(coef.c);
    SPDEProblem truth = coefp;
    const double ell = c.grid.length;
    truth.initial = DiscreteField::sample(coefp.grid, [ell](double x) {
      return std::sin(std::numbers::pi * x / ell) + 0.5 * std::sin(2.0 * std::numbers::pi * x / ell);
    });
    const double horizon = k.horizon;
    truth.gamma_right = [horizon](double tt) { return 0.3 * std::sin(2.0 * std::numbers::pi * tt / horizon); };
    const auto path = sample_brownian(coefp.time, derive_path_seed(c.ensemble.seed, 0));
    const auto y = solve_forward(truth, path);
    const auto data = generate_cauchy_data(std::vector<SpaceTimeField>{y});
    const double ref = std::sqrt(interior_norm_sq(y, c.family.x_left, c.family.epsilon));
    const CauchyForwardMap map(coefp, path, data.xi[0]);
    std::vector<double> u(map.cols()), v(map.rows());
    const CounterStream rng(derive_path_seed(c.ensemble.seed, 1));
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = rng.normal(i);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal(u.size() + i);
    const double adj = adjoint_residual(map, u, v);
    Table ct(with_base({"N", "K", "alpha", "iterations", "misfit", "interior_error", "relative_error",
                        "adjoint_residual"}));
    for (double alpha : k.alpha) {
      ContinuationOptions co;
      co.alpha = alpha;
      co.x_left = c.family.x_left;
      co.epsilon = c.family.epsilon;
      const auto r = continue_solution(coefp, path, data.xi[0], data.eta[0], co);
      const double err = interior_error(r.field, y, co.x_left, co.epsilon);
      ct.add(base_row(c, hash)
                 .integer(k.interior)
                 .integer(k.steps)
                 .num(alpha)
                 .integer(r.iterations)
                 .num(r.misfit)
                 .num(err)
                 .num(ref > 0.0 ? err / ref : 0.0)
                 .num(adj));
    }
    const auto stem = std::filesystem::path(c.output.file).stem().string();
    out.push_back({stem + "_continuation.csv", std::move(ct), {}});
  }
  return out;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Computes every output table for the config.
inline std::vector<OutputFile> compute(const ExperimentConfig& c, int threads) {
  const std::uint64_t hash = config_hash(c);
  if (c.command == "verify-identities") return detail::run_identities(c, hash, threads);
  if (c.command == "simulate") return detail::run_simulate(c, hash, threads);
  if (c.command == "verify-carleman") return detail::run_carleman(c, hash, threads);
  if (c.command == "inverse-source") return detail::run_inverse(c, hash, threads);
  if (c.command == "cauchy") return detail::run_cauchy(c, hash, threads);
  throw InvalidArgument("unknown command '" + c.command + "'");
}

/// Writes to a temporary name in the same directory, then renames.
inline void write_atomically(const std::filesystem::path& target, const std::string& content) {
  const auto tmp = target.parent_path() / ("." + target.filename().string() + ".tmp-" + std::to_string(::getpid()));
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    f.flush();
    if (!f) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("cannot write " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot rename into " + target.string());
  }
}

/// Runs a validated config and writes its CSV files. Exit code 0 on success,
/// 1 when the output cannot be written, 2 on numeric failure.
inline RunResult run(const ExperimentConfig& c, const RunOptions& opt) {
  RunResult res;
  std::error_code ec;
  std::filesystem::create_directories(opt.out_dir, ec);
  if (!std::filesystem::is_directory(opt.out_dir)) {
    res.exit_code = 1;
    res.message = "output directory " + opt.out_dir.string() + " cannot be created";
    return res;
  }
  const auto started = detail::utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<OutputFile> files;
  try {
    files = compute(c, opt.threads);
  } catch (const RangeError& e) {
    res.exit_code = 2;
    res.message = std::string("numeric failure: ") + e.what();
    return res;
  } catch (const ConvergenceError& e) {
    res.exit_code = 2;
    res.message = std::string("numeric failure: ") + e.what();
    return res;
  } catch (const InvalidArgument& e) {
    res.exit_code = 1;
    res.message = std::string("validation failure: ") + e.what();
    return res;
  } catch (const PreconditionViolation& e) {
    res.exit_code = 1;
    res.message = std::string("validation failure: ") + e.what();
    return res;
  }
  for (const auto& f : files) {
    if (f.table.has_non_finite()) {
      res.exit_code = 2;
      res.message = "numeric failure: non-finite value in " + f.name;
      return res;
    }
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  for (const auto& f : files) {
    std::string text;
    text += "# carleman-lab " CARLEMAN_LAB_VERSION "\n";
    text += "# command: " + c.command + "\n";
    text += "# config_hash: " + std::string(hash) + "\n";
    text += "# master_seed: " + std::to_string(c.ensemble.seed) + "\n";
    text += "# threads: " + std::to_string(opt.threads) + "\n";
    text += "# started_utc: " + started + "\n";
    text += "# wall_time_s: " + format_number(wall) + "\n";
    text += "# config: " + to_json(c).dump() + "\n";
    for (const auto& s : f.summary) text += "# summary: " + s + "\n";
    text += f.table.body();
    const auto target = opt.out_dir / f.name;
    try {
      write_atomically(target, text);
    } catch (const std::exception& e) {
      res.exit_code = 1;
      res.message = e.what();
      return res;
    }
    res.files.push_back(target);
  }
  res.message = "wrote " + std::to_string(files.size()) + " file(s)";
  return res;
}

/// CSV body without the '#' manifest lines.
inline std::string csv_body(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    out += line + '\n';
  }
  return out;
}

}  // namespace carleman_lab
