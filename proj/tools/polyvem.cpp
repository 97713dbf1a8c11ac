// Command line driver: mesh generation, the three solvers and their
// convergence harnesses. Every run writes CSV output and a manifest that can
// be fed back through --config.

#include <CLI11.hpp>

#include <polyvem/cahn_hilliard.hpp>
#include <polyvem/elastodynamics.hpp>
#include <polyvem/mesh.hpp>
#include <polyvem/vem_poly.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace polyvem;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kBadMesh = 3, kBadDiscretization = 4, kNumerical = 5 };

struct MeshSource {
  std::string file;
  MeshSpec spec;

  PolygonalMesh make(int n) const {
    if (!file.empty()) return load_mesh(file);
    MeshSpec s = spec;
    s.n = n;
    return generate_mesh(s);
  }
  PolygonalMesh make() const { return make(spec.n); }
};

void add_mesh_options(CLI::App* sc, MeshSource& ms) {
  sc->add_option("--mesh", ms.file, "POLYMESH file (overrides the generator)");
  sc->add_option("--family", ms.spec.family, "quads | quads-random | hex | octagons | voronoi");
  sc->add_option("--n", ms.spec.n, "generator size (seeds for voronoi)");
  sc->add_option("--seed", ms.spec.seed, "generator seed");
  sc->add_option("--jitter", ms.spec.jitter, "vertex jitter for quads-random");
  sc->add_option("--amplitude", ms.spec.amplitude, "perturbation for hex");
  sc->add_option("--lloyd", ms.spec.lloyd, "Lloyd sweeps for voronoi");
}

std::string fmt(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

class Csv {
 public:
  Csv(const fs::path& file, const std::string& header) : os_(file) {
    if (!os_) throw Error("cannot write " + file.string());
    os_ << header << '\n';
  }
  template <class... T>
  void row(const T&... v) {
    std::string sep;
    ((os_ << sep << cell(v), sep = ","), ...);
    os_ << '\n';
    os_.flush();
  }

 private:
  static std::string cell(double x) { return fmt(x); }
  static std::string cell(int x) { return std::to_string(x); }
  std::ofstream os_;
};

// key = value lines; '#' starts a comment.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CLI::ValidationError("--config", "cannot read " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    auto eq = line.find('=');
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos)
      throw CLI::ValidationError("--config", path + ":" + std::to_string(no) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Echo of the parsed options of the active subcommand, in config syntax.
void write_manifest(const fs::path& file, const CLI::App* sc) {
  std::ofstream os(file);
  if (!os) throw Error("cannot write " + file.string());
  os << "# polyvem run manifest; rerun with: polyvem --config " << file.filename().string() << '\n';
  os << "subcommand = " << sc->get_name() << '\n';
  for (const CLI::Option* o : sc->get_options()) {
    std::string name = o->get_single_name();
    if (name.empty() || name == "help") continue;
    auto res = o->results();
    std::string v;
    if (!res.empty()) v = res.back();
    else v = o->get_default_str();
    if (o->get_type_size() == 0) {  // flag
      v = o->count() > 0 ? "true" : "false";
      if (o->count() == 0) continue;
    }
    if (!v.empty()) os << name << " = " << v << '\n';
  }
}

fs::path prepare_dir(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

template <int P>
PolyharmonicResult solve_poly_p(const PolygonalMesh& m, int r) {
  return solve_polyharmonic<P>(m, r, poly_manufactured(P));
}

PolyharmonicResult solve_poly(const PolygonalMesh& m, int p, int r) {
  if (p == 1) return solve_poly_p<1>(m, r);
  if (p == 2) return solve_poly_p<2>(m, r);
  throw ConfigError("order p must be 1 or 2");
}

void check_pr(int p, int r) {
  if (p != 1 && p != 2) throw ConfigError("order p must be 1 or 2");
  if (r != 2 * p - 1 && r != 2 * p) throw ConfigError("degree r must be 2p-1 or 2p");
}

LoadProjection parse_load(const std::string& s) {
  if (s == "full") return LoadProjection::Full;
  if (s == "reduced") return LoadProjection::Reduced;
  throw ConfigError("load must be full or reduced");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polyvem: virtual element solvers on polygonal meshes"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.require_subcommand(0, 1);
  std::string config;
  int threads = 0;
  app.add_option("--config", config, "key = value file; command line flags take precedence");
  app.add_option("--threads", threads, "assembly threads (sets POLYVEM_THREADS)");

  MeshSource ms;
  std::string out = "out";
  int p = 1, r = 1, k = 1, levels = 4, n0 = 4, steps = 200, snapshot_every = 0, kmax = 6;
  double gamma = 0.1, dt = 1e-4, t_end = 0.1, rho = 1, lambda = 1, mu = 1, reg_gamma = 0.1;
  bool ortho = false;
  std::string load = "full", basis = "both";

  auto* gen = app.add_subcommand("mesh-gen", "generate a mesh and write it as POLYMESH");
  add_mesh_options(gen, ms);
  gen->add_option("--out", out, "output mesh file")->required();

  auto* chk = app.add_subcommand("check-mesh", "validate a mesh and report regularity");
  add_mesh_options(chk, ms);
  chk->add_option("--gamma", reg_gamma, "regularity threshold");
  chk->add_option("--out", out, "output directory");

  auto* sp = app.add_subcommand("solve-poly", "solve the manufactured polyharmonic problem on one mesh");
  add_mesh_options(sp, ms);
  sp->add_option("--p", p, "operator order");
  sp->add_option("--r", r, "space degree");
  sp->add_option("--out", out, "output directory");

  auto* cp = app.add_subcommand("converge-poly", "polyharmonic convergence table");
  add_mesh_options(cp, ms);
  cp->add_option("--p", p, "operator order");
  cp->add_option("--r", r, "space degree");
  cp->add_option("--levels", levels, "number of meshes");
  cp->add_option("--n0", n0, "generator size of the coarsest mesh");
  cp->add_option("--out", out, "output directory");

  auto* cc = app.add_subcommand("converge-ch", "Cahn-Hilliard manufactured convergence table");
  add_mesh_options(cc, ms);
  cc->add_option("--gamma", gamma, "interface parameter");
  cc->add_option("--dt", dt, "time step");
  cc->add_option("--t-end", t_end, "final time");
  cc->add_option("--levels", levels, "number of meshes");
  cc->add_option("--n0", n0, "generator size of the coarsest mesh");
  cc->add_option("--out", out, "output directory");

  auto* sd = app.add_subcommand("spinodal", "spinodal decomposition from a random state");
  add_mesh_options(sd, ms);
  sd->add_option("--gamma", gamma, "interface parameter");
  sd->add_option("--dt", dt, "time step");
  sd->add_option("--steps", steps, "number of steps");
  sd->add_option("--snapshot-every", snapshot_every, "write a vertex snapshot every N steps (0: none)");
  sd->add_option("--out", out, "output directory");

  auto* ce = app.add_subcommand("converge-elasto", "elastodynamics benchmark convergence table");
  add_mesh_options(ce, ms);
  ce->add_option("--k", k, "space degree");
  ce->add_option("--dt", dt, "time step");
  ce->add_option("--t-end", t_end, "final time (one period of the benchmark)");
  ce->add_option("--levels", levels, "number of meshes");
  ce->add_option("--n0", n0, "generator size of the coarsest mesh");
  ce->add_option("--rho", rho, "density");
  ce->add_option("--lambda", lambda, "first Lame coefficient");
  ce->add_option("--mu", mu, "shear modulus");
  ce->add_flag("--ortho", ortho, "orthogonal polynomial basis");
  ce->add_option("--load", load, "volume load projection: full | reduced");
  ce->add_option("--out", out, "output directory");

  auto* pr = app.add_subcommand("p-refine", "elastodynamics benchmark for k = 1..kmax on one mesh");
  add_mesh_options(pr, ms);
  pr->add_option("--kmax", kmax, "largest degree");
  pr->add_option("--dt", dt, "time step");
  pr->add_option("--t-end", t_end, "final time");
  pr->add_option("--basis", basis, "monomial | orthogonal | both");
  pr->add_option("--out", out, "output directory");

  try {
    // Values from --config are spliced in front of the command line
    // arguments; with TakeLast the command line wins.
    std::vector<std::string> fwd(argv + 1, argv + argc);
    std::string cfg, sub;
    std::vector<std::string> pre, rest;  // before and after the subcommand
    for (size_t i = 0; i < fwd.size(); ++i) {
      if (fwd[i] == "--config" && i + 1 < fwd.size()) {
        cfg = fwd[++i];
      } else if (fwd[i].rfind("--config=", 0) == 0) {
        cfg = fwd[i].substr(9);
      } else if (sub.empty() && !fwd[i].empty() && fwd[i][0] != '-' && app.get_subcommand_no_throw(fwd[i])) {
        sub = fwd[i];
      } else {
        (sub.empty() ? pre : rest).push_back(fwd[i]);
      }
    }
    std::vector<std::string> merged;
    if (!cfg.empty())
      for (auto& [key, v] : read_config(cfg)) {
        if (key == "subcommand") {
          if (sub.empty()) sub = v;
        } else if (v == "true") {
          merged.push_back("--" + key);
        } else if (v != "false") {
          merged.push_back("--" + key);
          merged.push_back(v);
        }
      }
    if (CLI::App* s = sub.empty() ? nullptr : app.get_subcommand_no_throw(sub)) {
      auto def = [&](const char* opt, const std::string& v) { s->get_option(opt)->default_val(v); };
      if (sub == "converge-ch") {
        def("--n0", "16");
      } else if (sub == "spinodal") {
        def("--family", "voronoi");
        def("--n", "64");
        def("--seed", "1");
        def("--lloyd", "10");
      } else if (sub == "converge-elasto") {
        def("--family", "quads-random");
        def("--seed", "1");
        def("--t-end", "0.25");
        def("--dt", "0.00025");
      } else if (sub == "p-refine") {
        def("--family", "quads-random");
        def("--n", "5");
        def("--seed", "1");
        def("--t-end", "0.25");
        def("--dt", "2.5e-05");
      }
      merged.insert(merged.begin(), sub);
    }
    merged.insert(merged.begin(), pre.begin(), pre.end());
    merged.insert(merged.end(), rest.begin(), rest.end());
    std::reverse(merged.begin(), merged.end());
    app.parse(merged);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kUsage;
  }

  auto subs = app.get_subcommands();
  if (subs.empty()) {
    std::cerr << app.help();
    return kUsage;
  }
  const CLI::App* sc = subs.front();
  if (threads > 0) setenv("POLYVEM_THREADS", std::to_string(threads).c_str(), 1);

  try {
    const std::string name = sc->get_name();
    if (name == "mesh-gen") {
      auto m = ms.make();
      fs::path f(out);
      if (f.has_parent_path()) fs::create_directories(f.parent_path());
      save_mesh(out, m);
      write_manifest(fs::path(out + ".manifest"), sc);
      std::cout << "wrote " << out << " (" << m.num_cells() << " cells, " << m.num_vertices() << " vertices)\n";
    } else if (name == "check-mesh") {
      auto m = ms.make();
      auto rep = check_regularity(m, reg_gamma);
      auto dir = prepare_dir(out);
      Csv csv(dir / "check.csv", "cells,vertices,edges,h,gamma_m1,gamma_m2,m1,m2,reflex_cells");
      csv.row(m.num_cells(), m.num_vertices(), m.num_edges(), m.max_diameter(), rep.gamma_m1, rep.gamma_m2,
              int(rep.m1), int(rep.m2), rep.reflex_cells);
      write_manifest(dir / "manifest.txt", sc);
      std::cout << "cells " << m.num_cells() << "  h " << fmt(m.max_diameter()) << "  gamma_m1 " << fmt(rep.gamma_m1)
                << "  gamma_m2 " << fmt(rep.gamma_m2) << "  M1 " << (rep.m1 ? "ok" : "fail") << "  M2 "
                << (rep.m2 ? "ok" : "fail") << "  reflex cells " << rep.reflex_cells << '\n';
    } else if (name == "solve-poly") {
      check_pr(p, r);
      auto m = ms.make();
      auto res = solve_poly(m, p, r);
      auto dir = prepare_dir(out);
      Csv csv(dir / "result.csv", "h,dofs,errL2,errH1,errH2");
      csv.row(res.h, res.ndof, res.err_l2, res.err_h1, p == 2 ? res.err_h2 : std::nan(""));
      std::ofstream vs(dir / "solution.txt");
      vs << std::setprecision(17) << "# x y u\n";
      const int vd = p == 1 ? 1 : 3;
      for (int v = 0; v < m.num_vertices(); ++v)
        vs << m.vertices[v].x() << ' ' << m.vertices[v].y() << ' ' << res.u[vd * v] << '\n';
      write_manifest(dir / "manifest.txt", sc);
    } else if (name == "converge-poly") {
      check_pr(p, r);
      auto dir = prepare_dir(out);
      Csv csv(dir / "convergence.csv", "h,dofs,errL2,errH1,errH2,rateL2,rateH1,rateH2");
      std::vector<double> h, e0, e1, e2;
      for (int l = 0; l < levels; ++l) {
        auto res = solve_poly(ms.make(n0 << l), p, r);
        h.push_back(res.h);
        e0.push_back(res.err_l2);
        e1.push_back(res.err_h1);
        e2.push_back(res.err_h2);
        auto r0 = observed_rates(h, e0), r1 = observed_rates(h, e1), r2 = observed_rates(h, e2);
        double nan = std::nan("");
        csv.row(res.h, res.ndof, res.err_l2, res.err_h1, p == 2 ? res.err_h2 : nan, r0.back(), r1.back(),
                p == 2 ? r2.back() : nan);
      }
      write_manifest(dir / "manifest.txt", sc);
    } else if (name == "converge-ch") {
      auto dir = prepare_dir(out);
      Csv csv(dir / "convergence.csv", "h,errH2,rateH2,errH1,rateH1,errL2,rateL2");
      std::vector<double> h, e0, e1, e2;
      for (int l = 0; l < levels; ++l) {
        auto e = run_manufactured(ms.make(n0 << l), gamma, dt, t_end);
        h.push_back(e.h);
        e0.push_back(e.l2);
        e1.push_back(e.h1);
        e2.push_back(e.h2);
        csv.row(e.h, e.h2, observed_rates(h, e2).back(), e.h1, observed_rates(h, e1).back(), e.l2,
                observed_rates(h, e0).back());
      }
      write_manifest(dir / "manifest.txt", sc);
    } else if (name == "spinodal") {
      auto m = ms.make();
      CHSettings s;
      s.gamma = gamma;
      s.dt = dt;
      CahnHilliard ch(m, s);
      auto dir = prepare_dir(out);
      Csv csv(dir / "spinodal.csv", "step,time,mass,energy_delta,energy_nabla,umin,umax,newton");
      run_spinodal(ch, steps, ms.spec.seed, [&](const SpinodalFrame& fr) {
        csv.row(fr.step, fr.time, fr.mass, fr.energy_delta, fr.energy_nabla, fr.umin, fr.umax, fr.newton_iterations);
        if (snapshot_every > 0 && fr.step % snapshot_every == 0) {
          std::ostringstream fn;
          fn << "snapshot_" << std::setw(6) << std::setfill('0') << fr.step << ".txt";
          write_snapshot(dir / fn.str(), ch, fr.u);
        }
      });
      write_manifest(dir / "manifest.txt", sc);
    } else if (name == "converge-elasto") {
      if (k < 1) throw ConfigError("degree k must be at least 1");
      ElastoRunOptions o;
      o.k = k;
      o.dt = dt;
      o.t_end = t_end;
      o.orthogonal = ortho;
      o.load = parse_load(load);
      o.mat = Material{rho, lambda, mu};
      auto dir = prepare_dir(out);
      Csv csv(dir / "convergence.csv", "h,dofs,errL2,errH1,rateL2,rateH1");
      std::vector<double> h, e0, e1;
      for (int l = 0; l < levels; ++l) {
        auto e = run_elasto_benchmark(ms.make(n0 << l), o);
        h.push_back(e.h);
        e0.push_back(e.l2);
        e1.push_back(e.h1);
        csv.row(e.h, e.dofs, e.l2, e.h1, observed_rates(h, e0).back(), observed_rates(h, e1).back());
      }
      write_manifest(dir / "manifest.txt", sc);
    } else if (name == "p-refine") {
      if (kmax < 1) throw ConfigError("kmax must be at least 1");
      if (basis != "monomial" && basis != "orthogonal" && basis != "both")
        throw ConfigError("basis must be monomial, orthogonal or both");
      auto m = ms.make();
      auto dir = prepare_dir(out);
      for (bool o : {false, true}) {
        if ((o && basis == "monomial") || (!o && basis == "orthogonal")) continue;
        Csv csv(dir / (o ? "p_refine_orthogonal.csv" : "p_refine_monomial.csv"), "k,dofs,errL2,errH1,cond");
        for (int kk = 1; kk <= kmax; ++kk) {
          try {
            auto row = p_refinement_row(m, kk, o, dt, t_end);
            csv.row(row.k, row.dofs, row.l2, row.h1, row.cond);
          } catch (const SolveError& e) {
            std::cerr << "warning: k = " << kk << (o ? " orthogonal" : " monomial") << ": " << e.what() << '\n';
            csv.row(kk, 0, std::nan(""), std::nan(""), std::nan(""));
          }
        }
      }
      write_manifest(dir / "manifest.txt", sc);
    }
  } catch (const MeshError& e) {
    std::cerr << "error: mesh: " << e.what() << '\n';
    return kBadMesh;
  } catch (const ConfigError& e) {
    std::cerr << "error: discretization: " << e.what() << '\n';
    return kBadDiscretization;
  } catch (const BlowUpError& e) {
    std::cerr << "error: numerical: " << e.what() << '\n';
    return kNumerical;
  } catch (const SolveError& e) {
    std::cerr << "error: numerical: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
